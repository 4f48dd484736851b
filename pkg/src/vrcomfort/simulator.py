"""Deterministic closed-loop session simulation.

Synthetic head motion drives the real feature/predict/adjust pipeline while
two small world models close the loop: a framerate model (fps rises with
FFR strength and falls with FOV) and a latent sickness model (first-order
dynamics driven by angular speed, scaled down by FOV restriction and up by
below-threshold framerate). The sickness model is a synthetic test harness,
not a validated human model; reports label its output "synthetic latent
sickness".
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import quat
from .controller import (
    Action,
    AdaptiveController,
    ControllerConfig,
    DecisionRecord,
    config_from_kv,
)
from .kinematics import angular_velocity, window_features
from .telemetry import HeadSample, TelemetryStream, window_from_samples

MOTION_KINDS = ("static", "walk", "spin", "stress")

SESSION_CSV_FIELDS = ("t", "true_s", "score", "fps", "ffr", "fov", "decision", "reason")


@dataclass(frozen=True)
class MotionProfile:
    kind: str = "stress"
    ang_amplitude: float = math.pi   # peak angular speed, rad/s
    pos_amplitude: float = 0.3       # peak positional excursion, m
    frequency: float = 0.5           # Hz; <= 0 means constant-rate yaw
    noise: float = 0.02              # per-sample positional jitter std, m
    duration_s: float = 60.0
    rate_hz: float = 72.0

    def __post_init__(self):
        if self.kind not in MOTION_KINDS:
            raise ValueError(f"unknown motion kind {self.kind!r}; choose from {MOTION_KINDS}")
        if self.ang_amplitude < 0.0 or self.pos_amplitude < 0.0 or self.noise < 0.0:
            raise ValueError("amplitudes and noise must be nonnegative")
        if self.rate_hz <= 0.0 or self.duration_s <= 0.0:
            raise ValueError("rate_hz and duration_s must be positive")

    @staticmethod
    def preset(kind: str, duration_s: float = 60.0, rate_hz: float = 72.0) -> "MotionProfile":
        base = dict(kind=kind, duration_s=duration_s, rate_hz=rate_hz)
        if kind == "static":
            return MotionProfile(ang_amplitude=0.0, pos_amplitude=0.0, noise=0.0, **base)
        if kind == "walk":
            return MotionProfile(ang_amplitude=0.2, pos_amplitude=0.4, frequency=0.8,
                                 noise=0.005, **base)
        if kind == "spin":
            return MotionProfile(ang_amplitude=math.pi, pos_amplitude=0.0, frequency=0.5,
                                 noise=0.0, **base)
        return MotionProfile(**base)  # stress defaults


def _angle_trace(peak_rate: float, frequency: float, t: np.ndarray) -> np.ndarray:
    """Angle whose rate is peak_rate·sin(2πft), or peak_rate·t when f <= 0."""
    if frequency <= 0.0:
        return peak_rate * t
    w = 2.0 * math.pi * frequency
    return peak_rate * (1.0 - np.cos(w * t)) / w


def generate_motion(profile: MotionProfile, seed: int) -> list[HeadSample]:
    """Deterministic synthetic head-pose capture at the profile rate."""
    n = int(round(profile.duration_s * profile.rate_hz))
    if n < 4:
        raise ValueError("profile too short: fewer than 4 samples")
    t = np.arange(n) / profile.rate_hz
    rng = np.random.default_rng((seed, 0xC0FFEE))

    pos = np.zeros((n, 3))
    quats = np.tile(quat.IDENTITY, (n, 1))
    a, p, f = profile.ang_amplitude, profile.pos_amplitude, profile.frequency

    if profile.kind in ("spin", "stress"):
        yaw = _angle_trace(a, f, t)
        quats = np.column_stack(
            [np.cos(yaw / 2), np.zeros(n), np.zeros(n), np.sin(yaw / 2)]
        )
    if profile.kind == "stress":
        pitch = _angle_trace(0.5 * a, 0.7 * f, t)
        q_pitch = np.column_stack(
            [np.cos(pitch / 2), np.sin(pitch / 2), np.zeros(n), np.zeros(n)]
        )
        quats = quat.multiply(quats, q_pitch)
        pos[:, 0] = p * np.sin(2.0 * math.pi * f * t)
        pos[:, 1] = 0.5 * p * np.sin(2.0 * math.pi * 1.3 * f * t + 1.0)
    elif profile.kind == "walk":
        pos[:, 1] = p * np.sin(2.0 * math.pi * f * t)
        pos[:, 0] = 0.5 * p * np.sin(2.0 * math.pi * 0.6 * f * t)
        sway = _angle_trace(a, f, t)
        quats = np.column_stack(
            [np.cos(sway / 2), np.zeros(n), np.zeros(n), np.sin(sway / 2)]
        )
    if profile.noise > 0.0:
        pos = pos + rng.normal(0.0, profile.noise, size=(n, 3))

    return [HeadSample(float(t[k]), pos[k], quats[k]) for k in range(n)]


@dataclass(frozen=True)
class FramerateModel:
    """fps = base·(1 + gain·ffr)·(fov_max/fov)^exponent + jitter."""

    base_fps: float = 60.0
    ffr_gain: float = 0.05
    fov_exponent: float = 1.0
    jitter_std: float = 1.5
    fov_max: float = 110.0

    def mean_fps(self, ffr_level: int, fov_deg: float) -> float:
        return (
            self.base_fps
            * (1.0 + self.ffr_gain * ffr_level)
            * (self.fov_max / fov_deg) ** self.fov_exponent
        )

    def sample(self, ffr_level: int, fov_deg: float, rng: np.random.Generator) -> float:
        fps = self.mean_fps(ffr_level, fov_deg)
        if self.jitter_std > 0.0:
            fps += rng.normal(0.0, self.jitter_std)
        return max(fps, 1.0)


@dataclass(frozen=True)
class SicknessModel:
    """Synthetic latent sickness s in [0, 100]: ds/dt = gain·stimulus − decay·s.

    stimulus = |ω|·(fov/fov_max)·max(1, fps_threshold/fps): narrowing the FOV
    reduces peripheral optical flow, while framerates below threshold
    amplify discomfort.
    """

    gain: float = 1.85
    decay: float = 0.05
    fps_threshold: float = 65.0
    fov_max: float = 110.0

    def stimulus(self, omega_mag: float, fov_deg: float, fps: float) -> float:
        return omega_mag * (fov_deg / self.fov_max) * max(1.0, self.fps_threshold / fps)

    def step(self, s: float, omega_mag: float, fov_deg: float, fps: float, dt: float) -> float:
        ds = self.gain * self.stimulus(omega_mag, fov_deg, fps) - self.decay * s
        return min(max(s + ds * dt, 0.0), 100.0)


@dataclass(frozen=True)
class SessionRow:
    t: float
    true_s: float
    score: float
    fps: float
    ffr_level: int
    fov_deg: float
    action: Action
    reason: str


@dataclass(frozen=True)
class SessionSummary:
    mean_sickness: float
    max_sickness: float
    final_sickness: float
    fps_min: float
    fps_mean: float
    adjustments: int


_ADJUSTING = (Action.INCREASE_FFR, Action.REDUCE_FOV, Action.RELAX)


@dataclass
class SessionLog:
    rows: list[SessionRow] = field(default_factory=list)

    def summary(self) -> SessionSummary:
        if not self.rows:
            raise ValueError("empty session log")
        s = np.array([r.true_s for r in self.rows])
        fps = np.array([r.fps for r in self.rows])
        adjustments = sum(1 for r in self.rows if r.action in _ADJUSTING)
        return SessionSummary(
            float(s.mean()), float(s.max()), float(s[-1]),
            float(fps.min()), float(fps.mean()), adjustments,
        )


def simulate_session(
    profile: MotionProfile,
    *,
    model=None,
    controller_config: ControllerConfig | None = None,
    framerate_model: FramerateModel | None = None,
    sickness_model: SicknessModel | None = None,
    controller_enabled: bool = True,
    seed: int = 0,
    window_s: float = 3.0,
) -> SessionLog:
    """Run one closed-loop session and return its per-tick log.

    ``model`` is any predictor with a ``predict(X) -> scores`` method taking
    raw (unstandardized) feature rows. ``model=None`` selects oracle mode:
    the controller sees the true latent sickness instead of a prediction,
    which tests the control loop in isolation.
    """
    config = controller_config or ControllerConfig()
    framerate = framerate_model or FramerateModel(fov_max=config.fov_max)
    sickness = sickness_model or SicknessModel(
        fps_threshold=config.fps_threshold, fov_max=config.fov_max
    )

    samples = generate_motion(profile, seed)
    # ground-truth angular speed for the world model, from the full capture
    omega_mag = np.linalg.norm(angular_velocity(window_from_samples(samples)), axis=1)

    rng_fps = np.random.default_rng((seed, 0xF95))
    ctrl = AdaptiveController(config)
    params = ctrl.params
    fps = framerate.sample(params.ffr_level, params.fov_deg, rng_fps)

    stream = TelemetryStream(capacity_s=window_s + 2.0)
    dt = 1.0 / profile.rate_hz
    s = 0.0
    next_eval = samples[0].t + window_s
    log = SessionLog()

    for k, sample in enumerate(samples):
        reason = stream.push_head(sample)
        if reason is not None:
            raise RuntimeError(f"generated sample rejected: {reason}")
        s = sickness.step(s, float(omega_mag[k]), params.fov_deg, fps, dt)

        if sample.t + 1e-9 >= next_eval:
            feats = window_features(stream.window(window_s), profile.rate_hz)
            if model is None:
                score = s
            else:
                score = float(np.asarray(model.predict(feats[None, :])).ravel()[0])
            if controller_enabled:
                record = ctrl.step(score, fps, t=sample.t)
                params = ctrl.params
            else:
                record = DecisionRecord(
                    sample.t, score, fps, params.ffr_level, params.fov_deg,
                    Action.HOLD, "controller disabled",
                )
            log.rows.append(
                SessionRow(sample.t, s, score, fps, record.ffr_level,
                           record.fov_deg, record.action, record.reason)
            )
            # new params feed the framerate and sickness models from next tick
            fps = framerate.sample(params.ffr_level, params.fov_deg, rng_fps)
            next_eval += config.eval_period

    return log


@dataclass(frozen=True)
class ComparisonReport:
    baseline: SessionSummary
    adaptive: SessionSummary
    fps_threshold: float
    baseline_low_fps_ticks: int
    adaptive_low_fps_ticks: int

    @property
    def final_sickness_delta(self) -> float:
        return self.adaptive.final_sickness - self.baseline.final_sickness

    @property
    def mean_sickness_delta(self) -> float:
        return self.adaptive.mean_sickness - self.baseline.mean_sickness

    def to_kv(self) -> dict[str, object]:
        return {
            "sickness_model": "synthetic latent sickness",
            "baseline_mean_sickness": self.baseline.mean_sickness,
            "adaptive_mean_sickness": self.adaptive.mean_sickness,
            "mean_sickness_delta": self.mean_sickness_delta,
            "baseline_final_sickness": self.baseline.final_sickness,
            "adaptive_final_sickness": self.adaptive.final_sickness,
            "final_sickness_delta": self.final_sickness_delta,
            "baseline_fps_min": self.baseline.fps_min,
            "adaptive_fps_min": self.adaptive.fps_min,
            "baseline_fps_mean": self.baseline.fps_mean,
            "adaptive_fps_mean": self.adaptive.fps_mean,
            "baseline_low_fps_ticks": self.baseline_low_fps_ticks,
            "adaptive_low_fps_ticks": self.adaptive_low_fps_ticks,
            "baseline_adjustments": self.baseline.adjustments,
            "adaptive_adjustments": self.adaptive.adjustments,
        }


def compare_sessions(
    baseline: SessionLog, adaptive: SessionLog, fps_threshold: float = 65.0
) -> ComparisonReport:
    """Side-by-side deltas of two logs sharing duration and tick count."""
    if len(baseline.rows) != len(adaptive.rows):
        raise ValueError("session logs have different tick counts")
    if baseline.rows and abs(baseline.rows[-1].t - adaptive.rows[-1].t) > 1e-9:
        raise ValueError("session logs cover different durations")
    return ComparisonReport(
        baseline.summary(),
        adaptive.summary(),
        fps_threshold,
        sum(1 for r in baseline.rows if r.fps < fps_threshold),
        sum(1 for r in adaptive.rows if r.fps < fps_threshold),
    )


def write_session_csv(path, log: SessionLog) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SESSION_CSV_FIELDS)
        for r in log.rows:
            w.writerow([
                repr(float(r.t)), repr(float(r.true_s)), repr(float(r.score)),
                repr(float(r.fps)), r.ffr_level, repr(float(r.fov_deg)),
                r.action.value, r.reason,
            ])


def read_session_csv(path) -> SessionLog:
    log = SessionLog()
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        missing = set(SESSION_CSV_FIELDS) - set(r.fieldnames or ())
        if missing:
            raise ValueError(f"session CSV missing columns: {sorted(missing)}")
        for row in r:
            log.rows.append(
                SessionRow(
                    float(row["t"]), float(row["true_s"]), float(row["score"]),
                    float(row["fps"]), int(row["ffr"]), float(row["fov"]),
                    Action(row["decision"]), row["reason"],
                )
            )
    return log


@dataclass(frozen=True)
class Scenario:
    """A runnable simulation description, loadable from a key=value file."""

    profile: MotionProfile
    seed: int = 7
    controller_enabled: bool = True
    model_path: str | None = None   # None selects oracle mode
    window_s: float = 3.0
    controller_config: ControllerConfig = field(default_factory=ControllerConfig)


def scenario_from_kv(kv: Mapping[str, str]) -> Scenario:
    kind = kv.get("profile", "stress")
    profile = MotionProfile.preset(
        kind,
        duration_s=float(kv.get("duration", 60.0)),
        rate_hz=float(kv.get("rate", 72.0)),
    )
    overrides = {}
    for key, attr in (
        ("angular_amplitude", "ang_amplitude"),
        ("position_amplitude", "pos_amplitude"),
        ("frequency", "frequency"),
        ("noise", "noise"),
    ):
        if key in kv:
            overrides[attr] = float(kv[key])
    if overrides:
        profile = replace(profile, **overrides)

    model = kv.get("model", "oracle")
    return Scenario(
        profile=profile,
        seed=int(kv.get("seed", 7)),
        controller_enabled=kv.get("controller", "on").lower() in ("on", "true", "1", "yes"),
        model_path=None if model.lower() == "oracle" else model,
        window_s=float(kv.get("window", 3.0)),
        controller_config=config_from_kv(kv),
    )
