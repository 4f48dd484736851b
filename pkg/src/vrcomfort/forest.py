"""Random-forest regression over kinematic features, written from scratch.

The tree internals are deliberately hand-rolled rather than delegated to a
library: axis-aligned CART splits chosen by minimizing summed child squared
error, midpoint thresholds between distinct sorted values, per-node feature
subsampling, bootstrap resampling per tree, and deterministic seeding so
the same data and seed always grow the same forest.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .dataset import FeatureScaler
from .errors import ModelFormatError
from .kinematics import FEATURE_NAMES, FEATURE_SET_VERSION

MODEL_FORMAT = "cfmodel"
MODEL_VERSION = "1.0"

DEFAULT_GRID: dict[str, tuple] = {
    "n_trees": (50, 100, 200),
    "max_depth": (8, 12, 16),
    "min_samples_leaf": (1, 2, 5),
}

_HYPERPARAM_KEYS = (
    "n_trees", "max_depth", "min_samples_leaf", "m_try",
    "bootstrap", "standardize", "random_state",
)


def _best_split_for_feature(
    x: np.ndarray, y: np.ndarray, min_samples_leaf: int
) -> tuple[float, float] | None:
    """Lowest-SSE split of one feature column, or None if no valid cut.

    Score is SSE(left) + SSE(right), computed from prefix sums; among equal
    scores the lowest threshold wins. Thresholds are midpoints between
    consecutive distinct sorted values, and a cut is valid only when both
    sides keep at least min_samples_leaf rows.
    """
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    csum = np.cumsum(ys)
    csq = np.cumsum(ys * ys)

    i = np.arange(min_samples_leaf - 1, n - min_samples_leaf)
    i = i[xs[i] != xs[i + 1]]
    if i.shape[0] == 0:
        return None

    nl = (i + 1).astype(float)
    nr = n - nl
    sl = csum[i]
    sr = csum[-1] - sl
    sse = (csq[i] - sl * sl / nl) + ((csq[-1] - csq[i]) - sr * sr / nr)

    best = int(np.argmin(sse))  # first minimum: lowest threshold on ties
    cut = int(i[best])
    return float(sse[best]), float((xs[cut] + xs[cut + 1]) / 2.0)


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    depth: int,
    rng: np.random.Generator,
    max_depth: int,
    min_samples_leaf: int,
    m_try: int,
) -> dict:
    """Depth-first CART growth; rows with x <= threshold go left."""
    n = y.shape[0]
    if depth >= max_depth or n < 2 * min_samples_leaf or np.all(y == y[0]):
        return {"value": float(y.mean())}

    drawn = rng.choice(X.shape[1], size=m_try, replace=False)
    best_score = np.inf
    best_feature = -1
    best_threshold = 0.0
    for f in sorted(int(f) for f in drawn):  # ties resolve to lowest index
        result = _best_split_for_feature(X[:, f], y, min_samples_leaf)
        if result is not None and result[0] < best_score:
            best_score, best_threshold = result
            best_feature = f
    if best_feature < 0:
        return {"value": float(y.mean())}

    mask = X[:, best_feature] <= best_threshold
    return {
        "feature": best_feature,
        "threshold": best_threshold,
        "left": _grow_tree(X[mask], y[mask], depth + 1, rng,
                           max_depth, min_samples_leaf, m_try),
        "right": _grow_tree(X[~mask], y[~mask], depth + 1, rng,
                            max_depth, min_samples_leaf, m_try),
    }


def _predict_tree(node: dict, X: np.ndarray, out: np.ndarray, idx: np.ndarray) -> None:
    if "value" in node:
        out[idx] = node["value"]
        return
    mask = X[idx, node["feature"]] <= node["threshold"]
    _predict_tree(node["left"], X, out, idx[mask])
    _predict_tree(node["right"], X, out, idx[~mask])


def _predict_tree_row(node: dict, row) -> float:
    # scalar walk: numpy indexing overhead dwarfs the comparison for 1 row
    while "value" not in node:
        node = node["left"] if row[node["feature"]] <= node["threshold"] else node["right"]
    return node["value"]


class CybersicknessForest(RegressorMixin, BaseEstimator):
    """Bootstrap-aggregated regression trees predicting a 0..100 score.

    Predictions are plain tree means, never clamped: out-of-range output is
    a visible symptom rather than a silently hidden one.
    """

    def __init__(
        self,
        n_trees: int = 100,
        max_depth: int = 12,
        min_samples_leaf: int = 2,
        m_try: int = 6,
        bootstrap: bool = True,
        standardize: bool = True,
        random_state: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.m_try = m_try
        self.bootstrap = bootstrap
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X = FeatureScaler._check(X)
        y = np.asarray(y, dtype=float)
        if y.shape != (X.shape[0],):
            raise ValueError("y must be 1D with one target per row of X")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite values")
        if X.shape[0] < 1:
            raise ValueError("need at least one training row")
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1 or self.m_try < 1:
            raise ValueError("n_trees, max_depth, min_samples_leaf, m_try must be >= 1")

        self.n_features_in_ = X.shape[1]
        if self.standardize:
            self.scaler_ = FeatureScaler().fit(X)
            Xs = self.scaler_.transform(X)
        else:
            self.scaler_ = None
            Xs = X

        m_try = min(self.m_try, self.n_features_in_)
        n = Xs.shape[0]
        self.trees_ = []
        for tree_index in range(self.n_trees):
            rng = np.random.default_rng((self.random_state, tree_index))
            if self.bootstrap:
                rows = rng.integers(0, n, size=n)
            else:
                rows = np.arange(n)
            self.trees_.append(
                _grow_tree(Xs[rows], y[rows], 0, rng,
                           self.max_depth, self.min_samples_leaf, m_try)
            )
        return self

    def predict(self, X):
        self._check_fitted()
        X = FeatureScaler._check(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        Xs = self.scaler_.transform(X) if self.scaler_ is not None else X
        n = Xs.shape[0]
        if n <= 32:
            rows = [row.tolist() for row in Xs]
            return np.array([
                sum(_predict_tree_row(tree, row) for tree in self.trees_)
                / len(self.trees_)
                for row in rows
            ])
        total = np.zeros(n)
        out = np.empty(n)
        idx = np.arange(n)
        for tree in self.trees_:
            _predict_tree(tree, Xs, out, idx)
            total += out
        return total / len(self.trees_)

    def _check_fitted(self):
        if not hasattr(self, "trees_"):
            raise RuntimeError("model is not fitted")


@dataclass(frozen=True)
class Metrics:
    mse: float
    rmse: float
    mae: float
    r2: float

    def to_kv(self) -> dict[str, float]:
        return {"mse": self.mse, "rmse": self.rmse, "mae": self.mae, "r2": self.r2}


def regression_metrics(y_true, y_pred) -> Metrics:
    """MSE, RMSE, MAE, and R2; R2 is NaN when the targets have no variance."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.shape[0] == 0:
        raise ValueError("y_true and y_pred must be equal-length non-empty 1D arrays")
    err = y_true - y_pred
    mse = float(np.mean(err * err))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    r2 = float("nan") if ss_tot == 0.0 else 1.0 - float(np.sum(err * err)) / ss_tot
    return Metrics(mse, float(np.sqrt(mse)), float(np.mean(np.abs(err))), r2)


@dataclass(frozen=True)
class GridSearchResult:
    best_params: dict
    best_mse: float
    table: tuple  # (params, mean validation mse) per combination, in scan order


def kfold_indices(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Deterministic k-fold partition of range(n): validation rows per fold."""
    if not 2 <= k <= n:
        raise ValueError(f"k must be between 2 and the number of rows ({n})")
    rng = np.random.default_rng((seed, 0xCF01D))
    return np.array_split(rng.permutation(n), k)


def grid_search(
    X,
    y,
    grid: Mapping[str, Sequence] | None = None,
    *,
    k: int = 5,
    seed: int = 0,
    **fixed_params,
) -> GridSearchResult:
    """Exhaustive k-fold search over a hyperparameter grid.

    Folds are a deterministic permutation of the rows; combinations are
    scanned in the grid's declaration order and ties keep the earliest
    combination, so the winner never depends on dict iteration quirks.
    """
    grid = dict(grid if grid is not None else DEFAULT_GRID)
    X = FeatureScaler._check(X)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    for key in grid:
        if key not in _HYPERPARAM_KEYS:
            raise ValueError(f"unknown hyperparameter {key!r}")

    folds = kfold_indices(n, k, seed)

    keys = list(grid)
    table = []
    best_params: dict | None = None
    best_mse = np.inf
    for values in itertools.product(*(grid[key] for key in keys)):
        params = dict(zip(keys, values))
        fold_mse = []
        for fold in folds:
            train = np.setdiff1d(np.arange(n), fold)
            kwargs = {"random_state": seed, **fixed_params, **params}
            model = CybersicknessForest(**kwargs)
            model.fit(X[train], y[train])
            m = regression_metrics(y[fold], model.predict(X[fold]))
            fold_mse.append(m.mse)
        mean_mse = float(np.mean(fold_mse))
        table.append((params, mean_mse))
        if mean_mse < best_mse:
            best_mse = mean_mse
            best_params = params
    assert best_params is not None
    return GridSearchResult(best_params, best_mse, tuple(table))


def _validate_tree(node, n_features: int) -> None:
    if not isinstance(node, dict):
        raise ModelFormatError("tree node is not an object")
    if "value" in node:
        if not isinstance(node["value"], (int, float)):
            raise ModelFormatError("leaf value is not a number")
        return
    for key in ("feature", "threshold", "left", "right"):
        if key not in node:
            raise ModelFormatError(f"tree node missing key {key!r}")
    if (
        not isinstance(node["feature"], int)
        or isinstance(node["feature"], bool)
        or not 0 <= node["feature"] < n_features
    ):
        raise ModelFormatError("tree node has an out-of-range feature index")
    if not isinstance(node["threshold"], (int, float)):
        raise ModelFormatError("tree node threshold is not a number")
    _validate_tree(node["left"], n_features)
    _validate_tree(node["right"], n_features)


def save_model(path, model: CybersicknessForest) -> None:
    """Write a fitted forest as canonical JSON: same model, same bytes."""
    model._check_fitted()
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_set_version": FEATURE_SET_VERSION,
        "feature_names": list(FEATURE_NAMES),
        "n_features": model.n_features_in_,
        "hyperparams": {key: getattr(model, key) for key in _HYPERPARAM_KEYS},
        "scaler": model.scaler_.to_dict() if model.scaler_ is not None else None,
        "trees": model.trees_,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_model(path) -> CybersicknessForest:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"invalid JSON: {e.msg}", offset=e.pos) from e
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a {MODEL_FORMAT} document")
    version = str(doc.get("version", ""))
    major = version.split(".", 1)[0]
    if major != MODEL_VERSION.split(".", 1)[0]:
        raise ModelFormatError(f"unsupported format version {version!r}")
    for key in ("feature_set_version", "n_features", "hyperparams", "scaler", "trees"):
        if key not in doc:
            raise ModelFormatError(f"missing key {key!r}")
    if doc["feature_set_version"] != FEATURE_SET_VERSION:
        raise ModelFormatError(
            f"feature set version {doc['feature_set_version']} does not match "
            f"this build ({FEATURE_SET_VERSION})"
        )

    hp = doc["hyperparams"]
    missing = [key for key in _HYPERPARAM_KEYS if key not in hp]
    if missing:
        raise ModelFormatError(f"hyperparams missing {missing}")
    model = CybersicknessForest(**{key: hp[key] for key in _HYPERPARAM_KEYS})
    n_features = doc["n_features"]
    if not isinstance(n_features, int) or n_features < 1:
        raise ModelFormatError("n_features must be a positive integer")
    if not isinstance(doc["trees"], list) or not doc["trees"]:
        raise ModelFormatError("trees must be a non-empty list")
    for tree in doc["trees"]:
        _validate_tree(tree, n_features)
    model.n_features_in_ = n_features
    model.scaler_ = (
        FeatureScaler.from_dict(doc["scaler"]) if doc["scaler"] is not None else None
    )
    model.trees_ = doc["trees"]
    return model
