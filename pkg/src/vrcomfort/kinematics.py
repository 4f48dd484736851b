"""Kinematic signals from a telemetry window and their feature aggregation.

Six channels are derived from the pose stream: linear velocity,
acceleration, and jerk from position; angular velocity from consecutive
orientations; angular acceleration and jerk by differentiating angular
velocity. Derivatives use central differences on interior points and
one-sided differences at the ends, so interior accuracy is second order.

The published feature vector is, per channel, the {mean, std, max} of the
per-sample Euclidean magnitude, in the fixed order of FEATURE_NAMES.
Magnitudes are rotation invariant, which keeps the features independent of
the tracking coordinate frame. std is the population standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat
from .telemetry import TelemetryWindow, resample

FEATURE_SET_VERSION = 1

CHANNELS = (
    ("linear_velocity", "m/s"),
    ("linear_acceleration", "m/s^2"),
    ("linear_jerk", "m/s^3"),
    ("angular_velocity", "rad/s"),
    ("angular_acceleration", "rad/s^2"),
    ("angular_jerk", "rad/s^3"),
)
_STATS = ("mean", "std", "max")

FEATURE_NAMES = tuple(f"{ch}_{st}" for ch, _unit in CHANNELS for st in _STATS)
FEATURE_UNITS = tuple(unit for _ch, unit in CHANNELS for _ in _STATS)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class KinematicSeries:
    """Per-sample kinematics on the window's time base (body-frame angular)."""

    t: np.ndarray
    linear_velocity: np.ndarray
    linear_acceleration: np.ndarray
    linear_jerk: np.ndarray
    angular_velocity: np.ndarray
    angular_acceleration: np.ndarray
    angular_jerk: np.ndarray

    def channels(self) -> tuple[np.ndarray, ...]:
        return (
            self.linear_velocity,
            self.linear_acceleration,
            self.linear_jerk,
            self.angular_velocity,
            self.angular_acceleration,
            self.angular_jerk,
        )


def _require_uniform(window: TelemetryWindow) -> float:
    if not window.is_uniform():
        raise ValueError("window is not uniformly sampled; resample it first")
    return window.span / (len(window) - 1)


def linear_derivatives(window: TelemetryWindow) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Velocity, acceleration, and jerk of position, each (N, 3)."""
    if len(window) < 4:
        raise ValueError("need at least 4 samples for jerk")
    dt = _require_uniform(window)
    v = np.gradient(window.pos, dt, axis=0)
    a = np.gradient(v, dt, axis=0)
    j = np.gradient(a, dt, axis=0)
    return v, a, j


def angular_velocity(window: TelemetryWindow) -> np.ndarray:
    """Body-frame angular velocity (N, 3) in rad/s.

    Interior samples use the relative rotation between the two neighbours
    (q[k-1]⁻¹ ⊗ q[k+1] over 2·dt); the ends use the single adjacent pair.
    Each relative rotation is converted through θ = 2·atan2(|vec|, w) along
    the shortest arc.
    """
    if len(window) < 3:
        raise ValueError("need at least 3 samples for angular velocity")
    dt = _require_uniform(window)
    q = window.quat
    omega = np.empty((len(q), 3))
    omega[1:-1] = quat.rotation_vector(quat.relative(q[:-2], q[2:])) / (2.0 * dt)
    omega[0] = quat.rotation_vector(quat.relative(q[0], q[1])) / dt
    omega[-1] = quat.rotation_vector(quat.relative(q[-2], q[-1])) / dt
    return omega


def angular_derivatives(omega: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Angular acceleration and jerk from a uniform angular-velocity series."""
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2 or omega.shape[0] < 3:
        raise ValueError("need an (N>=3, 3) angular-velocity series")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    alpha = np.gradient(omega, dt, axis=0)
    jerk = np.gradient(alpha, dt, axis=0)
    return alpha, jerk


def kinematic_series(window: TelemetryWindow) -> KinematicSeries:
    dt = _require_uniform(window)
    v, a, j = linear_derivatives(window)
    w = angular_velocity(window)
    alpha, wj = angular_derivatives(w, dt)
    return KinematicSeries(window.t, v, a, j, w, alpha, wj)


def features(window: TelemetryWindow) -> np.ndarray:
    """The 18-feature vector: {mean, std, max} of each channel magnitude."""
    series = kinematic_series(window)
    out = np.empty(N_FEATURES)
    for i, channel in enumerate(series.channels()):
        mag = np.linalg.norm(channel, axis=1)
        out[3 * i : 3 * i + 3] = (mag.mean(), mag.std(), mag.max())
    return out


def window_features(window: TelemetryWindow, rate_hz: float) -> np.ndarray:
    """Resample onto the nominal uniform grid, then featurize."""
    return features(resample(window, rate_hz))
