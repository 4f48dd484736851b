"""Rule-based closed-loop adjustment of FFR strength and FOV.

Every evaluation tick the controller compares the predicted sickness score
and the measured framerate against thresholds and escalates comfort
measures in a fixed order: raise fixed-foveated-rendering strength first
while the framerate is below target, then narrow the field of view.
Relaxation undoes the escalation in exact reverse order, and only after the
score has stayed a hysteresis margin below the threshold for a dwell time,
which prevents oscillation around the threshold.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .kvconfig import format_kv

HISTORY_CSV_FIELDS = ("t", "score", "fps", "ffr", "fov", "decision", "reason")


class Action(enum.Enum):
    INCREASE_FFR = "IncreaseFfr"
    REDUCE_FOV = "ReduceFov"
    HOLD = "Hold"
    RELAX = "Relax"
    AT_LIMITS = "AtLimits"


@dataclass(frozen=True)
class ComfortParams:
    """Current comfort settings: FFR level 0..ffr_max and horizontal FOV degrees."""

    ffr_level: int
    fov_deg: float


@dataclass(frozen=True)
class ControllerConfig:
    score_threshold: float = 30.0   # VRSQ scale, 0-100
    fps_threshold: float = 65.0
    ffr_max: int = 4
    fov_max: float = 110.0
    fov_min: float = 70.0
    fov_step: float = 5.0
    eval_period: float = 1.0        # seconds between decisions
    hysteresis: float = 5.0         # score margin below threshold before relaxing
    relax_dwell: float = 5.0        # seconds the low score must be sustained

    def __post_init__(self):
        if self.fov_min >= self.fov_max:
            raise ValueError("fov_min must be below fov_max")
        if self.fov_step <= 0.0 or self.eval_period <= 0.0:
            raise ValueError("fov_step and eval_period must be positive")
        if self.ffr_max < 1:
            raise ValueError("ffr_max must be at least 1")
        if self.hysteresis < 0.0 or self.relax_dwell < 0.0:
            raise ValueError("hysteresis and relax_dwell must be nonnegative")

    def defaults(self) -> ComfortParams:
        return ComfortParams(ffr_level=0, fov_deg=self.fov_max)


@dataclass(frozen=True)
class Decision:
    action: Action
    reason: str
    score: float
    fps: float


@dataclass(frozen=True)
class DecisionRecord:
    """One history row: the decision plus the params it left in effect."""

    t: float
    score: float
    fps: float
    ffr_level: int
    fov_deg: float
    action: Action
    reason: str


def decide(
    score: float,
    fps: float,
    params: ComfortParams,
    config: ControllerConfig,
    low_score_elapsed: float = 0.0,
) -> Decision:
    """Pick the next action. Pure function of its inputs.

    ``low_score_elapsed`` is how long the score has stayed at or below
    (threshold - hysteresis), maintained by the caller.
    """
    s, f = config.score_threshold, config.fps_threshold
    ffr_capped = params.ffr_level >= config.ffr_max
    fov_floored = params.fov_deg <= config.fov_min

    if score > s:
        if fps < f and not ffr_capped:
            return Decision(Action.INCREASE_FFR, "score high and fps low; raising ffr", score, fps)
        if fps >= f and not fov_floored:
            return Decision(Action.REDUCE_FOV, "score high at acceptable fps; narrowing fov", score, fps)
        if ffr_capped and not fov_floored:
            return Decision(
                Action.REDUCE_FOV, "ffr saturated at low fps; narrowing fov to cut render cost",
                score, fps,
            )
        if not ffr_capped:
            return Decision(
                Action.INCREASE_FFR, "fov at minimum; escalating remaining ffr headroom",
                score, fps,
            )
        return Decision(Action.AT_LIMITS, "ffr and fov both at limits", score, fps)

    at_defaults = params == config.defaults()
    if (
        score <= s - config.hysteresis
        and low_score_elapsed >= config.relax_dwell
        and not at_defaults
    ):
        return Decision(Action.RELAX, "score low for the dwell period; relaxing one notch", score, fps)
    return Decision(Action.HOLD, "no change required", score, fps)


def apply_action(params: ComfortParams, action: Action, config: ControllerConfig) -> ComfortParams:
    """New params after an action, clamped to configured bounds.

    RELAX undoes escalation in reverse order: restore FOV toward fov_max
    first, then step FFR back down.
    """
    if action is Action.INCREASE_FFR:
        return replace(params, ffr_level=min(params.ffr_level + 1, config.ffr_max))
    if action is Action.REDUCE_FOV:
        return replace(params, fov_deg=max(params.fov_deg - config.fov_step, config.fov_min))
    if action is Action.RELAX:
        if params.fov_deg < config.fov_max:
            return replace(params, fov_deg=min(params.fov_deg + config.fov_step, config.fov_max))
        if params.ffr_level > 0:
            return replace(params, ffr_level=params.ffr_level - 1)
    return params


@dataclass
class AdaptiveController:
    """Owns the comfort params and the sustained-low-score clock."""

    config: ControllerConfig = field(default_factory=ControllerConfig)

    def __post_init__(self):
        self.params = self.config.defaults()
        self._history: list[DecisionRecord] = []
        self._low_elapsed = 0.0
        self._ticks = 0

    def step(self, score: float, fps: float, t: float | None = None) -> DecisionRecord:
        """Advance one evaluation tick; returns the appended history record."""
        self._ticks += 1
        if t is None:
            t = self._ticks * self.config.eval_period
        if score <= self.config.score_threshold - self.config.hysteresis:
            self._low_elapsed += self.config.eval_period
        else:
            self._low_elapsed = 0.0
        decision = decide(score, fps, self.params, self.config, self._low_elapsed)
        self.params = apply_action(self.params, decision.action, self.config)
        record = DecisionRecord(
            t, score, fps, self.params.ffr_level, self.params.fov_deg,
            decision.action, decision.reason,
        )
        self._history.append(record)
        return record

    def history(self) -> tuple[DecisionRecord, ...]:
        return tuple(self._history)


# --- config and history file formats ---------------------------------------

_INT_KEYS = {"ffr_max"}


def config_to_kv(config: ControllerConfig) -> dict[str, object]:
    return {
        "score_threshold": config.score_threshold,
        "fps_threshold": config.fps_threshold,
        "ffr_max": config.ffr_max,
        "fov_max": config.fov_max,
        "fov_min": config.fov_min,
        "fov_step": config.fov_step,
        "eval_period": config.eval_period,
        "hysteresis": config.hysteresis,
        "relax_dwell": config.relax_dwell,
    }


def config_from_kv(kv: Mapping[str, str]) -> ControllerConfig:
    """Build a config from `key = value` pairs; unrelated keys are ignored."""
    kwargs = {}
    for key in config_to_kv(ControllerConfig()):
        if key in kv:
            kwargs[key] = int(kv[key]) if key in _INT_KEYS else float(kv[key])
    return ControllerConfig(**kwargs)


def format_config(config: ControllerConfig) -> str:
    return format_kv(config_to_kv(config))


def write_history_csv(path, records: Sequence[DecisionRecord]) -> None:
    """Session-log rows: `t,score,fps,ffr,fov,decision,reason`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_CSV_FIELDS)
        for r in records:
            w.writerow([
                repr(float(r.t)), repr(float(r.score)), repr(float(r.fps)),
                r.ffr_level, repr(float(r.fov_deg)), r.action.value, r.reason,
            ])


def read_history_csv(path) -> list[DecisionRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        missing = set(HISTORY_CSV_FIELDS) - set(r.fieldnames or ())
        if missing:
            raise ValueError(f"history CSV missing columns: {sorted(missing)}")
        for row in r:
            records.append(
                DecisionRecord(
                    float(row["t"]), float(row["score"]), float(row["fps"]),
                    int(row["ffr"]), float(row["fov"]),
                    Action(row["decision"]), row["reason"],
                )
            )
    return records
