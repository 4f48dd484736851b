"""Dataset assembly: align captures with scores, standardize, split.

A labeled dataset pairs one 18-value kinematic feature row per sliding
window with that participant's questionnaire total, broadcast across all of
their windows (one score per session is the finest label available).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .kinematics import FEATURE_NAMES, features
from .simulator import MotionProfile, generate_motion
from .telemetry import HeadSample, iter_windows, resample

SCORES_CSV_FIELDS = ("participant_id", "target")
LABELED_CSV_FIELDS = ("participant_id",) + FEATURE_NAMES + ("target",)

_ZERO_STD = 1e-12


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Per-column standardization to zero mean and unit variance.

    Columns with zero variance in the fit data pass through unchanged
    (scale 1) and are flagged in ``zero_variance_mask_``; dividing by their
    std would blow up on immobile captures.
    """

    def fit(self, X, y=None):
        X = self._check(X)
        self.n_features_in_ = X.shape[1]
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.zero_variance_mask_ = std < _ZERO_STD
        self.scale_ = np.where(self.zero_variance_mask_, 1.0, std)
        return self

    def transform(self, X):
        self._check_fitted()
        X = self._check(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        self._check_fitted()
        X = self._check(X)
        return X * self.scale_ + self.mean_

    def _check_fitted(self):
        if not hasattr(self, "mean_"):
            raise RuntimeError("FeatureScaler is not fitted")

    @staticmethod
    def _check(X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"expected a 2D feature matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("feature matrix contains non-finite values")
        return X

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "mean": self.mean_.tolist(),
            "scale": self.scale_.tolist(),
            "zero_variance": self.zero_variance_mask_.astype(bool).tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureScaler":
        s = cls()
        s.mean_ = np.asarray(d["mean"], dtype=float)
        s.scale_ = np.asarray(d["scale"], dtype=float)
        s.zero_variance_mask_ = np.asarray(d["zero_variance"], dtype=bool)
        s.n_features_in_ = s.mean_.shape[0]
        return s


@dataclass(frozen=True)
class LabeledDataset:
    """Feature rows, targets, and the participant each row came from."""

    X: np.ndarray
    y: np.ndarray
    participant_ids: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        pids = np.asarray(self.participant_ids)
        if X.ndim != 2:
            raise ValueError("X must be 2D")
        if y.shape != (X.shape[0],) or pids.shape != (X.shape[0],):
            raise ValueError("X, y, participant_ids must share their first dimension")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "participant_ids", pids)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, mask: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.X[mask], self.y[mask], self.participant_ids[mask])


def align(
    captures: Mapping[str, Sequence[HeadSample]],
    scores: Mapping[str, float],
    *,
    window_s: float = 3.0,
    stride_s: float = 1.0,
    rate_hz: float = 72.0,
) -> LabeledDataset:
    """Window every capture and broadcast each participant's score.

    Raises ValueError if a capture has no score. Captures too short to
    yield any window are skipped with a warning.
    """
    rows, targets, pids = [], [], []
    for pid in sorted(captures):
        if pid not in scores:
            raise ValueError(f"no score for participant {pid!r}")
        windows = list(iter_windows(captures[pid], window_s, stride_s))
        if not windows:
            warnings.warn(
                f"capture {pid!r} yielded no {window_s} s windows; skipping",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        for w in windows:
            rows.append(features(resample(w, rate_hz)))
            targets.append(float(scores[pid]))
            pids.append(pid)
    if not rows:
        raise ValueError("no capture yielded any window")
    return LabeledDataset(np.array(rows), np.array(targets), np.array(pids))


def standardize(dataset: LabeledDataset) -> tuple[LabeledDataset, FeatureScaler]:
    """Z-score the feature matrix; the returned scaler replays the mapping."""
    scaler = FeatureScaler().fit(dataset.X)
    return (
        LabeledDataset(scaler.transform(dataset.X), dataset.y, dataset.participant_ids),
        scaler,
    )


def split(
    dataset: LabeledDataset,
    test_fraction: float = 0.2,
    *,
    by_participant: bool = False,
    seed: int = 0,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Deterministic train/test split; both halves are always non-empty.

    ``by_participant=True`` keeps every participant's windows on one side,
    the honest protocol when windows within a session are correlated.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng((seed, 0x5B117))
    if by_participant:
        pids = np.unique(dataset.participant_ids)
        if pids.shape[0] < 2:
            raise ValueError("grouped split needs at least two participants")
        perm = rng.permutation(pids.shape[0])
        n_test = min(max(1, round(pids.shape[0] * test_fraction)), pids.shape[0] - 1)
        test_pids = set(pids[perm[:n_test]])
        test_mask = np.isin(dataset.participant_ids, sorted(test_pids))
    else:
        if dataset.n < 2:
            raise ValueError("need at least two rows to split")
        perm = rng.permutation(dataset.n)
        n_test = min(max(1, round(dataset.n * test_fraction)), dataset.n - 1)
        test_mask = np.zeros(dataset.n, dtype=bool)
        test_mask[perm[:n_test]] = True
    return dataset.subset(~test_mask), dataset.subset(test_mask)


def synth_dataset(
    n_participants: int = 20,
    *,
    duration_s: float = 60.0,
    rate_hz: float = 72.0,
    window_s: float = 3.0,
    stride_s: float = 1.0,
    intensity_range: tuple[float, float] = (0.0, 1.0),
    seed: int = 0,
) -> tuple[LabeledDataset, dict[str, list[HeadSample]], dict[str, float]]:
    """Synthesize a labeled corpus with a planted motion-to-score signal.

    Each participant gets an intensity lambda evenly spaced over
    ``intensity_range``; motion amplitudes scale linearly with lambda and
    the score follows a noisy sigmoid of lambda, so kinematic features
    genuinely predict the target.
    """
    if n_participants < 2:
        raise ValueError("need at least two participants")
    lo, hi = intensity_range
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError("intensity_range must satisfy 0 <= low <= high <= 1")
    captures: dict[str, list[HeadSample]] = {}
    scores: dict[str, float] = {}
    for i in range(n_participants):
        lam = lo + (hi - lo) * i / (n_participants - 1)
        profile = MotionProfile(
            kind="stress",
            ang_amplitude=3.0 * lam,
            pos_amplitude=0.3 * lam,
            frequency=0.5,
            noise=0.01 * lam,
            duration_s=duration_s,
            rate_hz=rate_hz,
        )
        pid = f"S{i:03d}"
        captures[pid] = generate_motion(profile, seed=seed * 100003 + i)
        eps = float(np.random.default_rng((seed, i, 0x5C0)).normal(0.0, 0.15))
        score = 100.0 / (1.0 + math.exp(-(5.0 * (lam - 0.5) + eps)))
        scores[pid] = float(np.clip(score, 0.0, 100.0))
    ds = align(captures, scores, window_s=window_s, stride_s=stride_s, rate_hz=rate_hz)
    return ds, captures, scores


def write_scores_csv(path, scores: Mapping[str, float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SCORES_CSV_FIELDS)
        for pid in sorted(scores):
            w.writerow([pid, repr(float(scores[pid]))])


def read_scores_csv(path) -> dict[str, float]:
    """Read participant scores from a ``target`` or scored-survey ``total`` column."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        fields = r.fieldnames or ()
        col = "target" if "target" in fields else "total" if "total" in fields else None
        if "participant_id" not in fields or col is None:
            raise ValueError(
                "scores CSV needs a participant_id column and a target or total column"
            )
        return {row["participant_id"]: float(row[col]) for row in r}


def write_labeled_csv(path, dataset: LabeledDataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LABELED_CSV_FIELDS)
        for i in range(dataset.n):
            w.writerow(
                [str(dataset.participant_ids[i])]
                + [repr(float(v)) for v in dataset.X[i]]
                + [repr(float(dataset.y[i]))]
            )


def read_labeled_csv(path) -> LabeledDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != LABELED_CSV_FIELDS:
            raise ValueError("labeled CSV header does not match the 18-feature layout")
        X, y, pids = [], [], []
        for row in r:
            X.append([float(row[name]) for name in FEATURE_NAMES])
            y.append(float(row["target"]))
            pids.append(row["participant_id"])
    if not X:
        raise ValueError("labeled CSV has no rows")
    return LabeledDataset(np.array(X), np.array(y), np.array(pids))
