"""Streaming sidecar: telemetry lines in, score and adjust records out.

One JSON object per line in both directions. Inbound types: ``hello``
(version handshake), ``head`` (pose sample), ``frame`` (frame timing),
``vrsq`` (optional live questionnaire label). Outbound: ``ack``, ``score``,
``adjust`` (absolute state, only on change), ``error``, and a final
``stats`` record on shutdown.

Ingestion and evaluation run on separate threads joined by a bounded
queue, so a slow model can never stall telemetry reads: on overflow the
oldest queued sample is dropped and counted. Every inbound record yields a
state change, an outbound record, or a counted drop; blank lines are
ignored.
"""

from __future__ import annotations

import json
import math
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import vrsq
from .controller import AdaptiveController, ControllerConfig
from .errors import InsufficientDataError
from .kinematics import FEATURE_SET_VERSION, window_features
from .telemetry import FrameTiming, HeadSample, TelemetryStream

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class ServiceConfig:
    model: object                      # predictor with predict(X) -> scores
    controller_config: ControllerConfig = field(default_factory=ControllerConfig)
    window_s: float = 3.0
    eval_period: float | None = None   # None: follow controller_config
    rate_hz: float = 72.0
    queue_capacity: int = 65536   # ~15 min of 72 Hz telemetry; drop-oldest beyond

    def __post_init__(self):
        if self.model is None or not hasattr(self.model, "predict"):
            raise ValueError("config.model must provide a predict method")
        if self.window_s <= 0.0 or self.rate_hz <= 0.0 or self.queue_capacity < 1:
            raise ValueError("window_s, rate_hz, queue_capacity must be positive")

    @property
    def period(self) -> float:
        return self.eval_period if self.eval_period is not None else self.controller_config.eval_period


def _finite_floats(value, n: int) -> list[float] | None:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        return None
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        return None
    return out if all(math.isfinite(v) for v in out) else None


def _finite_float(value) -> float | None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return None
    v = float(value)
    return v if math.isfinite(v) else None


class _Session:
    """State for one connection: queue, stream, controller, counters."""

    def __init__(self, config: ServiceConfig, wfile):
        self.config = config
        self.wfile = wfile
        self.wlock = threading.Lock()
        self.qlock = threading.Lock()
        self.queue: deque = deque()
        self.eof = threading.Event()
        self.broken = threading.Event()

        self.stream = TelemetryStream(capacity_s=config.window_s + 2.0)
        self.controller = AdaptiveController(config.controller_config)
        self.next_eval: float | None = None
        self.latencies_ms: list[float] = []
        self.last_vrsq: vrsq.VrsqScore | None = None
        self.counts = {
            "heads": 0, "frames": 0, "vrsq": 0, "errors": 0,
            "drops": 0, "rejected": 0, "scores": 0, "adjusts": 0,
        }

    # -- outbound ---------------------------------------------------------

    def write(self, record: dict) -> None:
        if self.broken.is_set():
            return
        data = (json.dumps(record) + "\n").encode("utf-8")
        try:
            with self.wlock:
                self.wfile.write(data)
                self.wfile.flush()
        except (OSError, ValueError):
            self.broken.set()

    def error(self, code: str, message: str) -> None:
        self.counts["errors"] += 1
        self.write({"type": "error", "code": code, "message": message})

    # -- inbound ----------------------------------------------------------

    def handle_line(self, raw: bytes) -> None:
        line = raw.strip()
        if not line:
            return
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as e:
            self.error("bad_json", f"unparseable line: {e.msg} at {e.pos}")
            return
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            self.error("bad_record", "record must be an object with a type field")
            return
        kind = msg["type"]
        if kind == "hello":
            self._handle_hello(msg)
        elif kind == "head":
            self._handle_head(msg)
        elif kind == "frame":
            self._handle_frame(msg)
        elif kind == "vrsq":
            self._handle_vrsq(msg)
        else:
            self.error("unknown_type", f"unknown record type {kind!r}")

    def _handle_hello(self, msg: dict) -> None:
        if msg.get("version") != PROTOCOL_VERSION:
            self.error(
                "unsupported_version",
                f"this server speaks protocol version {PROTOCOL_VERSION}",
            )
            return
        cc = self.config.controller_config
        self.write({
            "type": "ack",
            "version": PROTOCOL_VERSION,
            "feature_set_version": FEATURE_SET_VERSION,
            "window_s": self.config.window_s,
            "eval_period": self.config.period,
            "score_threshold": cc.score_threshold,
            "fps_threshold": cc.fps_threshold,
            "ffr_max": cc.ffr_max,
            "fov_min": cc.fov_min,
            "fov_max": cc.fov_max,
        })

    def _handle_head(self, msg: dict) -> None:
        t = _finite_float(msg.get("t"))
        pos = _finite_floats(msg.get("pos"), 3)
        quat = _finite_floats(msg.get("quat"), 4)
        if t is None or pos is None or quat is None:
            self.error("bad_field", "head needs finite t, pos[3], quat[4]")
            return
        self.counts["heads"] += 1
        self._enqueue(("head", HeadSample(t, np.array(pos), np.array(quat))))

    def _handle_frame(self, msg: dict) -> None:
        t = _finite_float(msg.get("t"))
        dt_ms = _finite_float(msg.get("dt_ms"))
        if t is None or dt_ms is None or dt_ms <= 0.0:
            self.error("bad_field", "frame needs finite t and positive dt_ms")
            return
        self.counts["frames"] += 1
        self._enqueue(("frame", FrameTiming(t, dt_ms)))

    def _handle_vrsq(self, msg: dict) -> None:
        items = msg.get("items")
        if not isinstance(items, list):
            self.error("bad_field", "vrsq needs an items array of 9 integers")
            return
        try:
            self.last_vrsq = vrsq.score(items)
        except ValueError as e:
            self.error("bad_field", str(e))
            return
        self.counts["vrsq"] += 1

    def _enqueue(self, item) -> None:
        with self.qlock:
            if len(self.queue) >= self.config.queue_capacity:
                self.queue.popleft()
                self.counts["drops"] += 1
            self.queue.append(item)

    # -- evaluation -------------------------------------------------------

    def eval_loop(self) -> None:
        while True:
            with self.qlock:
                items = list(self.queue)
                self.queue.clear()
            if not items:
                if self.eof.is_set():
                    return
                time.sleep(0.001)
                continue
            for kind, obj in items:
                if kind == "head":
                    if self.stream.push_head(obj) is not None:
                        self.counts["rejected"] += 1
                        continue
                    if self.next_eval is None:
                        self.next_eval = obj.t + self.config.window_s
                    if obj.t + 1e-9 >= self.next_eval:
                        self._evaluate(obj.t)
                else:
                    if self.stream.push_frame(obj) is not None:
                        self.counts["rejected"] += 1

    def _evaluate(self, t: float) -> None:
        start = time.perf_counter()
        try:
            window = self.stream.window(self.config.window_s)
        except InsufficientDataError:
            self.next_eval = t + self.config.period
            return
        feats = window_features(window, self.config.rate_hz)
        value = float(np.asarray(self.config.model.predict(feats[None, :])).ravel()[0])
        try:
            fps = self.stream.current_fps(self.config.window_s)
        except InsufficientDataError:
            fps = math.inf   # no timing data: treat the framerate as healthy

        before = self.controller.params
        record = self.controller.step(value, fps, t=t)
        self.write({"type": "score", "t": t, "value": value})
        self.counts["scores"] += 1
        if self.controller.params != before:
            self.write({
                "type": "adjust",
                "t": t,
                "ffr": self.controller.params.ffr_level,
                "fov": self.controller.params.fov_deg,
                "reason": record.reason,
            })
            self.counts["adjusts"] += 1
        self.latencies_ms.append((time.perf_counter() - start) * 1000.0)

        self.next_eval += self.config.period
        if self.next_eval <= t:
            self.next_eval = t + self.config.period

    def stats_record(self) -> dict:
        p99 = float(np.percentile(self.latencies_ms, 99)) if self.latencies_ms else 0.0
        record = {"type": "stats", **self.counts, "latency_p99_ms": p99}
        record["vrsq_total"] = self.last_vrsq.total if self.last_vrsq else None
        return record


class TelemetryService:
    """Serves the score/adjust loop over stdio or a local TCP socket."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.bound_port: int | None = None
        self.ready = threading.Event()

    def handle(self, rfile, wfile) -> None:
        """Run one session over a byte-stream pair until EOF."""
        session = _Session(self.config, wfile)
        worker = threading.Thread(target=session.eval_loop, daemon=True)
        worker.start()
        try:
            for raw in rfile:
                session.handle_line(raw)
                if session.broken.is_set():
                    break
        finally:
            session.eof.set()
            worker.join(timeout=30.0)
            session.write(session.stats_record())

    def serve_tcp(self, host: str = "127.0.0.1", port: int = 0,
                  connections: int | None = None) -> None:
        """Accept loop; one session at a time. port=0 binds an ephemeral port."""
        with socket.create_server((host, port)) as server:
            self.bound_port = server.getsockname()[1]
            self.ready.set()
            served = 0
            while connections is None or served < connections:
                conn, _ = server.accept()
                with conn:
                    rfile = conn.makefile("rb")
                    wfile = conn.makefile("wb")
                    try:
                        self.handle(rfile, wfile)
                    finally:
                        rfile.close()
                        try:
                            wfile.close()
                        except OSError:
                            pass
                served += 1

    def serve_stdio(self, stdin=None, stdout=None) -> None:
        import sys

        self.ready.set()
        self.handle(stdin or sys.stdin.buffer, stdout or sys.stdout.buffer)
