"""Gradient-boosted regression trees, squared error on the log target.

Exact greedy splits over sorted feature values; each boosting stage fits a
depth-limited tree to the current residuals and is shrunk by the learning
rate. Everything is plain numpy so that fitted models are bit-reproducible
per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from ..harmonize import FEATURE_NAMES
from .common import EmptyDatasetError, ModelError, TrainedModel, schema_hash


@dataclass(frozen=True)
class GbtConfig:
    n_estimators: int = 300
    max_depth: int = 6
    learning_rate: float = 0.05
    min_samples_leaf: int = 20
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("n_estimators, max_depth, min_samples_leaf must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must be in (0, 1]")


class _Tree:
    """Flat-array regression tree; feature == -1 marks a leaf."""

    def __init__(self):
        self.feature: list = []
        self.threshold: list = []
        self.left: list = []
        self.right: list = []
        self.value: list = []

    def _add_leaf(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def _add_split(self, feature: int, threshold: float) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.value) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        idx = np.zeros(len(X), dtype=np.int64)
        while True:
            internal = feature[idx] >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            nodes = idx[rows]
            go_left = X[rows, feature[nodes]] <= threshold[nodes]
            idx[rows] = np.where(go_left, left[nodes], right[nodes])
        return value[idx]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_Tree":
        t = cls()
        t.feature = list(d["feature"])
        t.threshold = [float(v) for v in d["threshold"]]
        t.left = list(d["left"])
        t.right = list(d["right"])
        t.value = [float(v) for v in d["value"]]
        return t


def _best_split(X: np.ndarray, g: np.ndarray, min_leaf: int) -> Optional[tuple]:
    """Best (feature, threshold, mask_left) by squared-error reduction."""
    n = len(g)
    if n < 2 * min_leaf:
        return None
    total = g.sum()
    parent_score = total * total / n
    best_gain = 1e-12
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        gs = g[order]
        csum = np.cumsum(gs)[:-1]
        sizes = np.arange(1, n)
        valid = (xs[1:] != xs[:-1]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
        if not valid.any():
            continue
        score = np.full(n - 1, -np.inf)
        v = np.nonzero(valid)[0]
        score[v] = csum[v] ** 2 / sizes[v] + (total - csum[v]) ** 2 / (n - sizes[v])
        i = int(np.argmax(score))
        gain = score[i] - parent_score
        if gain > best_gain:
            best_gain = gain
            threshold = 0.5 * (xs[i] + xs[i + 1])
            best = (f, float(threshold))
    if best is None:
        return None
    f, threshold = best
    return f, threshold, X[:, f] <= threshold


def _build(tree: _Tree, X, g, depth: int, max_depth: int, min_leaf: int) -> int:
    if depth >= max_depth:
        return tree._add_leaf(float(g.mean()))
    split = _best_split(X, g, min_leaf)
    if split is None:
        return tree._add_leaf(float(g.mean()))
    f, threshold, mask = split
    if mask.all() or not mask.any():
        # midpoint landed on a duplicate value; splitting would empty a child
        return tree._add_leaf(float(g.mean()))
    node = tree._add_split(f, threshold)
    tree.left[node] = _build(tree, X[mask], g[mask], depth + 1, max_depth, min_leaf)
    tree.right[node] = _build(tree, X[~mask], g[~mask], depth + 1, max_depth, min_leaf)
    return node


class GbtEnsemble:
    def __init__(self, base_score: float, learning_rate: float, trees=None):
        self.base_score = base_score
        self.learning_rate = learning_rate
        self.trees = trees or []
        self.train_losses: list = []

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        pred = np.full(len(X), self.base_score)
        for tree in self.trees:
            pred += self.learning_rate * tree.predict(X)
        return pred

    def to_dict(self) -> dict:
        return {
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbtEnsemble":
        return cls(
            base_score=float(d["base_score"]),
            learning_rate=float(d["learning_rate"]),
            trees=[_Tree.from_dict(t) for t in d["trees"]],
        )


def train_gbt(train, config: GbtConfig = GbtConfig()) -> TrainedModel:
    X = np.asarray(train.features, dtype=np.float64)
    y = np.asarray(train.log_target, dtype=np.float64)
    if len(y) == 0:
        raise EmptyDatasetError("training dataset is empty")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise ModelError("non-finite feature or target values")

    rng = np.random.default_rng(config.seed)
    n = len(y)
    ensemble = GbtEnsemble(base_score=float(y.mean()), learning_rate=config.learning_rate)
    pred = np.full(n, ensemble.base_score)
    sub_n = max(1, int(round(config.subsample * n)))
    for _ in range(config.n_estimators):
        residual = y - pred
        if config.subsample < 1.0:
            rows = np.sort(rng.choice(n, size=sub_n, replace=False))
            Xs, gs = X[rows], residual[rows]
        else:
            Xs, gs = X, residual
        tree = _Tree()
        _build(tree, Xs, gs, 0, config.max_depth, config.min_samples_leaf)
        ensemble.trees.append(tree)
        pred += config.learning_rate * tree.predict(X)
        ensemble.train_losses.append(float(np.mean((y - pred) ** 2)))

    return TrainedModel(
        kind="gbt",
        feature_names=FEATURE_NAMES,
        feature_schema_hash=schema_hash(FEATURE_NAMES),
        config=asdict(config),
        payload=ensemble,
    )
