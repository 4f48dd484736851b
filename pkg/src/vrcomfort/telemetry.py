"""Head-tracking and frame-timing ingestion, buffering, windowing, resampling.

Streams hold a bounded time span of samples (oldest evicted first) and hand
out immutable window snapshots for feature extraction. Timestamps are a
monotonic session clock in seconds; orientations are unit quaternions,
scalar-first (w, x, y, z).
"""

from __future__ import annotations

import csv
import math
import threading
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import quat
from .errors import InsufficientDataError

HEAD_CSV_FIELDS = ("participant_id", "t", "px", "py", "pz", "qw", "qx", "qy", "qz")
FRAME_CSV_FIELDS = ("participant_id", "t", "dt_ms")


@dataclass(frozen=True, eq=False)
class HeadSample:
    """One head pose: time (s), position (m, 3-vector), orientation quat."""

    t: float
    pos: np.ndarray
    quat: np.ndarray


@dataclass(frozen=True)
class FrameTiming:
    """One rendered frame: time (s) and frame duration dt_ms (> 0)."""

    t: float
    dt_ms: float

    @property
    def fps(self) -> float:
        return 1000.0 / self.dt_ms


class TelemetryWindow:
    """Immutable, time-ordered slice of head samples.

    Quaternions are normalized and sign-fixed (consecutive dots >= 0) on
    construction, so downstream interpolation and differencing always take
    the shortest arc.
    """

    def __init__(self, t: np.ndarray, pos: np.ndarray, quats: np.ndarray):
        t = np.asarray(t, dtype=float)
        pos = np.asarray(pos, dtype=float)
        q = np.asarray(quats, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("window needs at least 2 samples")
        if pos.shape != (len(t), 3) or q.shape != (len(t), 4):
            raise ValueError("pos must be (N, 3) and quats (N, 4)")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(pos)) and np.all(np.isfinite(q))):
            raise ValueError("window contains non-finite values")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")
        self.t = t.copy()
        self.pos = pos.copy()
        self.quat = quat.fix_signs(quat.normalize(q))
        for a in (self.t, self.pos, self.quat):
            a.flags.writeable = False

    def __len__(self) -> int:
        return len(self.t)

    @property
    def span(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def nominal_rate(self) -> float:
        return (len(self.t) - 1) / self.span

    def is_uniform(self, rel_tol: float = 1e-6) -> bool:
        dts = np.diff(self.t)
        return bool((dts.max() - dts.min()) <= rel_tol * dts.mean())


class TelemetryStream:
    """Bounded ring buffers of head samples and frame timings.

    ``capacity_s`` is the retained time span; older samples are evicted.
    Single writer, any number of readers: ``window`` returns an immutable
    snapshot and never mutates the stream.
    """

    def __init__(self, capacity_s: float = 10.0):
        if capacity_s <= 0.0:
            raise ValueError("capacity_s must be positive")
        self.capacity_s = capacity_s
        self._head: deque[HeadSample] = deque()
        self._frames: deque[FrameTiming] = deque()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._head)

    @property
    def frame_count(self) -> int:
        return len(self._frames)

    def last_t(self) -> float | None:
        with self._lock:
            return self._head[-1].t if self._head else None

    def push_head(self, sample: HeadSample) -> str | None:
        """Append a head sample. Returns None if accepted, else the reason.

        The stored quaternion is renormalized and sign-aligned with its
        predecessor; position and time are stored as given.
        """
        t = float(sample.t)
        pos = np.asarray(sample.pos, dtype=float).reshape(-1)
        q = np.asarray(sample.quat, dtype=float).reshape(-1)
        if pos.shape != (3,) or q.shape != (4,):
            return "bad shape: pos must have 3 components and quat 4"
        if not (math.isfinite(t) and np.all(np.isfinite(pos)) and np.all(np.isfinite(q))):
            return "non-finite field"
        if np.linalg.norm(q) < 1e-12:
            return "zero-norm quaternion"
        with self._lock:
            if self._head and t <= self._head[-1].t:
                return f"non-monotonic timestamp {t} after {self._head[-1].t}"
            q = quat.normalize(q)
            if self._head and float(np.dot(self._head[-1].quat, q)) < 0.0:
                q = -q
            self._head.append(HeadSample(t, pos, q))
            self._evict(t)
        return None

    def push_frame(self, frame: FrameTiming) -> str | None:
        """Append a frame timing. Returns None if accepted, else the reason."""
        t, dt_ms = float(frame.t), float(frame.dt_ms)
        if not (math.isfinite(t) and math.isfinite(dt_ms)):
            return "non-finite field"
        if dt_ms <= 0.0:
            return f"dt_ms must be > 0, got {dt_ms}"
        with self._lock:
            if self._frames and t <= self._frames[-1].t:
                return f"non-monotonic timestamp {t} after {self._frames[-1].t}"
            self._frames.append(FrameTiming(t, dt_ms))
            self._evict(t)
        return None

    def _evict(self, now: float) -> None:
        horizon = now - self.capacity_s
        while self._head and self._head[0].t < horizon:
            self._head.popleft()
        while self._frames and self._frames[0].t < horizon:
            self._frames.popleft()

    def window(self, window_s: float) -> TelemetryWindow:
        """Snapshot the most recent ``window_s`` seconds of head samples.

        Requires at least 4 samples spanning >= 0.9 * window_s.
        """
        if window_s <= 0.0:
            raise ValueError("window_s must be positive")
        with self._lock:
            if len(self._head) < 4:
                raise InsufficientDataError(
                    f"need at least 4 head samples, have {len(self._head)}"
                )
            t_end = self._head[-1].t
            cut = t_end - window_s
            samples = [s for s in self._head if s.t >= cut - 1e-12]
        if len(samples) < 4 or samples[-1].t - samples[0].t < 0.9 * window_s:
            raise InsufficientDataError(
                f"only {len(samples)} samples spanning "
                f"{samples[-1].t - samples[0].t:.3f} s, need 0.9 * {window_s} s"
            )
        return TelemetryWindow(
            np.array([s.t for s in samples]),
            np.array([s.pos for s in samples]),
            np.array([s.quat for s in samples]),
        )

    def current_fps(self, window_s: float) -> float:
        """Frames per second over the trailing window: N / (sum of frame times)."""
        with self._lock:
            if not self._frames:
                raise InsufficientDataError("no frame timings buffered")
            cut = self._frames[-1].t - window_s
            frames = [f for f in self._frames if f.t >= cut - 1e-12]
        total_ms = sum(f.dt_ms for f in frames)
        return 1000.0 * len(frames) / total_ms


def window_from_samples(samples: Sequence[HeadSample]) -> TelemetryWindow:
    """Build an immutable window directly from a sample sequence."""
    return TelemetryWindow(
        np.array([s.t for s in samples]),
        np.array([s.pos for s in samples]),
        np.array([s.quat for s in samples]),
    )


def resample(window: TelemetryWindow, rate_hz: float) -> TelemetryWindow:
    """Resample onto a uniform grid at ``rate_hz`` starting at the window start.

    Positions are interpolated linearly, orientations spherically along the
    shortest arc. The grid covers the window span, so resampling an
    already-uniform window at its own rate is the identity within float
    round-off.
    """
    if rate_hz <= 0.0:
        raise ValueError("rate_hz must be positive")
    n_out = int(math.floor(window.span * rate_hz + 1e-9)) + 1
    grid = window.t[0] + np.arange(n_out) / rate_hz
    pos = np.column_stack(
        [np.interp(grid, window.t, window.pos[:, k]) for k in range(3)]
    )
    idx = np.clip(np.searchsorted(window.t, grid, side="right") - 1, 0, len(window) - 2)
    seg_dt = window.t[idx + 1] - window.t[idx]
    u = np.clip((grid - window.t[idx]) / seg_dt, 0.0, 1.0)
    quats = quat.slerp_batch(window.quat[idx], window.quat[idx + 1], u)
    return TelemetryWindow(grid, pos, quats)


def write_head_csv(path, captures: Mapping[str, Sequence[HeadSample]]) -> None:
    """Write head captures as `participant_id,t,px,py,pz,qw,qx,qy,qz`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HEAD_CSV_FIELDS)
        for pid, samples in captures.items():
            for s in samples:
                w.writerow([pid, repr(float(s.t)), *(repr(float(v)) for v in s.pos),
                            *(repr(float(v)) for v in s.quat)])


def read_head_csv(path) -> dict[str, list[HeadSample]]:
    captures: dict[str, list[HeadSample]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        missing = set(HEAD_CSV_FIELDS) - set(r.fieldnames or ())
        if missing:
            raise ValueError(f"head CSV missing columns: {sorted(missing)}")
        for row in r:
            captures.setdefault(row["participant_id"], []).append(
                HeadSample(
                    float(row["t"]),
                    np.array([float(row["px"]), float(row["py"]), float(row["pz"])]),
                    np.array([float(row["qw"]), float(row["qx"]),
                              float(row["qy"]), float(row["qz"])]),
                )
            )
    return captures


def write_frames_csv(path, frames: Mapping[str, Sequence[FrameTiming]]) -> None:
    """Write frame timings as `participant_id,t,dt_ms`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FRAME_CSV_FIELDS)
        for pid, rows in frames.items():
            for f in rows:
                w.writerow([pid, repr(float(f.t)), repr(float(f.dt_ms))])


def read_frames_csv(path) -> dict[str, list[FrameTiming]]:
    frames: dict[str, list[FrameTiming]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        missing = set(FRAME_CSV_FIELDS) - set(r.fieldnames or ())
        if missing:
            raise ValueError(f"frame CSV missing columns: {sorted(missing)}")
        for row in r:
            frames.setdefault(row["participant_id"], []).append(
                FrameTiming(float(row["t"]), float(row["dt_ms"]))
            )
    return frames


def iter_windows(
    samples: Sequence[HeadSample], window_s: float, stride_s: float
) -> Iterable[TelemetryWindow]:
    """Cut a capture into overlapping windows (start every ``stride_s``).

    A window is emitted only if it holds >= 4 samples spanning at least
    0.9 * window_s; trailing data too short for that is dropped.
    """
    if not samples:
        return
    t = np.array([s.t for s in samples])
    t0, t_end = t[0], t[-1]
    k = 0
    while True:
        start = t0 + k * stride_s
        if start > t_end - 0.9 * window_s + 1e-9:
            break
        lo = int(np.searchsorted(t, start - 1e-12, side="left"))
        hi = int(np.searchsorted(t, start + window_s + 1e-12, side="right"))
        chunk = samples[lo:hi]
        if len(chunk) >= 4 and chunk[-1].t - chunk[0].t >= 0.9 * window_s:
            yield window_from_samples(chunk)
        k += 1
