"""Regression random forest: bootstrap CART trees, out-of-bag error and
permutation importance.

Each tree draws its bootstrap sample and split-feature randomness from its own
substream of the master seed (``SeedSequence(seed, spawn_key=(tree,))``), so
fits are reproducible bit for bit and independent of how many threads build
them or how many trees follow.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from apte import _trees
from apte.errors import DataError, EstimationError

FORMAT = "apte-forest"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry: Optional[int] = None
    min_node_size: int = 5
    seed: int = 0
    n_jobs: int = 1

    def resolved_mtry(self, p: int) -> int:
        mtry = max(p // 3, 1) if self.mtry is None else self.mtry
        if not 1 <= mtry <= p:
            raise DataError(f"mtry must be in 1..{p}, got {mtry}")
        return mtry

    def validate(self) -> None:
        if self.n_trees < 1:
            raise DataError("n_trees must be >= 1")
        if self.min_node_size < 1:
            raise DataError("min_node_size must be >= 1")
        if self.n_jobs < 1:
            raise DataError("n_jobs must be >= 1")


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _trees.predict_tree(self.feature, self.threshold, self.left, self.right, self.value, X)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def to_dict(self, node: int = 0) -> dict:
        f = int(self.feature[node])
        if f < 0:
            return {"value": float(self.value[node])}
        return {
            "feature": f,
            "threshold": float(self.threshold[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []

        def add(d: dict) -> int:
            k = len(feature)
            feature.append(d.get("feature", -1))
            threshold.append(d.get("threshold", 0.0))
            left.append(-1)
            right.append(-1)
            value.append(d.get("value", 0.0))
            if "feature" in d:
                left[k] = add(d["left"])
                right[k] = add(d["right"])
            return k

        add(doc)
        return cls(
            np.array(feature, dtype=np.int64),
            np.array(threshold, dtype=float),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.array(value, dtype=float),
        )


@dataclass(frozen=True)
class Forest:
    params: ForestParams
    feature_names: tuple[str, ...]
    trees: tuple[Tree, ...]
    inbag: np.ndarray = field(repr=False)
    oob_predictions: np.ndarray = field(repr=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict(self, X) -> np.ndarray:
        """Mean of the per-tree leaf means for each row of ``X``."""
        X = _as_matrix(X, self.n_features)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def splits_on(self, feature: int) -> bool:
        return any(bool(np.any(t.feature == feature)) for t in self.trees)

    def to_json(self) -> str:
        doc = {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "params": asdict(replace(self.params, n_jobs=1)),
            "feature_names": list(self.feature_names),
            "oob_predictions": [None if np.isnan(v) else float(v) for v in self.oob_predictions],
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        doc = json.loads(text)
        if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
            raise DataError("not a version-1 forest document")
        oob = np.array([np.nan if v is None else v for v in doc["oob_predictions"]], dtype=float)
        return cls(
            ForestParams(**doc["params"]),
            tuple(doc["feature_names"]),
            tuple(Tree.from_dict(t) for t in doc["trees"]),
            np.zeros((0, len(oob)), dtype=np.int32),
            oob,
        )


@dataclass(frozen=True)
class ImportanceTable:
    feature_names: tuple[str, ...]
    values: tuple[float, ...]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.feature_names, self.values))

    def ranking(self) -> list[str]:
        """Features by decreasing importance; ties keep column order."""
        order = sorted(range(len(self.values)), key=lambda i: (-self.values[i], i))
        return [self.feature_names[i] for i in order]


def _as_matrix(X, p: Optional[int] = None) -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if p is not None and X.shape[1] != p:
        raise DataError(f"expected {p} features, got {X.shape[1]}")
    bad = np.argwhere(~np.isfinite(X))
    if len(bad):
        r, c = bad[0]
        raise DataError(f"missing value at row {r}, column {c}")
    return X


def _tree_rng(seed: int, tree: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(tree, stream))))


def _map(fn, items, n_jobs: int) -> list:
    if n_jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def fit_forest(
    X, y, params: ForestParams = ForestParams(), feature_names: Optional[Sequence[str]] = None
) -> Forest:
    """Fit a regression forest.

    Every tree is grown without pruning on a bootstrap sample of size n.
    Nodes with fewer than ``2 * min_node_size`` rows are not split, so every
    leaf holds at least ``min_node_size`` bootstrap rows.
    """
    params.validate()
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise DataError(f"target has shape {y.shape}, expected ({n},)")
    if not np.all(np.isfinite(y)):
        raise DataError(f"missing target at row {int(np.flatnonzero(~np.isfinite(y))[0])}")
    if n < 2 * params.min_node_size:
        raise DataError(f"need at least {2 * params.min_node_size} rows, got {n}")
    if np.ptp(y) == 0.0:
        warnings.warn("constant target: every tree is a single leaf", RuntimeWarning, stacklevel=2)
    mtry = params.resolved_mtry(p)
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i + 1}" for i in range(p))
    if len(names) != p:
        raise DataError("feature_names length does not match X")

    def grow(t: int):
        rng = _tree_rng(params.seed, t)
        sample = rng.integers(0, n, size=n)
        uniforms = rng.random((2 * n + 1, mtry))
        tree = Tree(*_trees.build_tree(X, y, sample, mtry, params.min_node_size, uniforms))
        return tree, np.bincount(sample, minlength=n).astype(np.int32)

    grown = _map(grow, range(params.n_trees), params.n_jobs)
    trees = tuple(g[0] for g in grown)
    inbag = np.stack([g[1] for g in grown])

    total = np.zeros(n)
    count = np.zeros(n)
    for tree, bag in zip(trees, inbag):
        oob = np.flatnonzero(bag == 0)
        if len(oob):
            total[oob] += tree.predict(X[oob])
            count[oob] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        oob_pred = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return Forest(params, names, trees, inbag, oob_pred)


def predict(forest: Forest, x) -> float:
    """Prediction for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) != forest.n_features:
        raise DataError(f"feature vector must have {forest.n_features} entries")
    return float(forest.predict(x.reshape(1, -1))[0])


def oob_mse(forest: Forest, y) -> float:
    y = np.asarray(y, dtype=float)
    has = ~np.isnan(forest.oob_predictions)
    if not has.any():
        raise EstimationError("no row is out-of-bag in any tree")
    return float(np.mean((forest.oob_predictions[has] - y[has]) ** 2))


def permutation_importance(forest: Forest, X, y) -> ImportanceTable:
    """Mean increase in per-tree OOB MSE when a feature is permuted.

    For each tree the feature's column is shuffled among that tree's OOB rows;
    increases are averaged over all trees. Shuffles come from a substream
    separate from the one used to grow the tree.
    """
    X = _as_matrix(X, forest.n_features)
    y = np.asarray(y, dtype=float)
    if forest.inbag.shape[1] != X.shape[0]:
        raise DataError("X does not match the rows the forest was fit on")
    p = X.shape[1]

    def one(t: int) -> np.ndarray:
        tree = forest.trees[t]
        rows = np.flatnonzero(forest.inbag[t] == 0)
        rng = _tree_rng(forest.params.seed, t, 1)
        perms = np.stack([rng.permutation(len(rows)) for _ in range(p)]) if len(rows) else np.zeros((p, 0), np.int64)
        return _trees.permutation_increase(
            tree.feature, tree.threshold, tree.left, tree.right, tree.value, X, y, rows, perms
        )

    incs = _map(one, range(len(forest.trees)), forest.params.n_jobs)
    values = np.mean(np.stack(incs), axis=0)
    return ImportanceTable(forest.feature_names, tuple(float(v) for v in values))
