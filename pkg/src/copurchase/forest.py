"""From-scratch random forest binary classifier.

CART-style trees grown on bootstrap resamples, greedy Gini splits over a
random sqrt-sized feature subset per node, leaves holding the positive-class
fraction.  Prediction averages leaf fractions across trees.  Everything is
deterministic under the master seed: per-tree generators are spawned from a
single SeedSequence, and aggregation order is fixed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = 16
    min_samples_leaf: int = 2
    features_per_split: int | None = None  # None: ceil(sqrt(n_features))

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "features_per_split": self.features_per_split,
        }


def gini(labels: np.ndarray) -> float:
    """Gini impurity of a binary label vector: 2 p (1 - p)."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    p = float(labels.mean())
    return 2.0 * p * (1.0 - p)


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    feature_candidates: np.ndarray,
    min_samples_leaf: int = 1,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, gain) over the candidate features, or None.

    Threshold candidates are midpoints between consecutive distinct sorted
    values; gain is the parent Gini minus the size-weighted child Gini.
    Ties break toward the lowest feature index, then the lowest threshold.
    Returns None when no split has positive gain.
    """
    n = len(rows)
    ysub = y[rows]
    parent = gini(ysub)
    best: tuple[int, float, float] | None = None
    for f in np.sort(feature_candidates):
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xo, yo = xs[order], ysub[order]
        cut = np.arange(1, n)  # left gets xo[:cut]
        distinct = xo[1:] > xo[:-1]
        ok = distinct & (cut >= min_samples_leaf) & (n - cut >= min_samples_leaf)
        if not ok.any():
            continue
        pos_prefix = np.cumsum(yo)[:-1].astype(float)
        n_left = cut.astype(float)
        n_right = n - n_left
        p_left = pos_prefix / n_left
        p_right = (float(ysub.sum()) - pos_prefix) / n_right
        g_left = 2.0 * p_left * (1.0 - p_left)
        g_right = 2.0 * p_right * (1.0 - p_right)
        gain = parent - (n_left * g_left + n_right * g_right) / n
        gain[~ok] = -np.inf
        j = int(np.argmax(gain))  # first max = lowest threshold
        if gain[j] <= 0.0:
            continue
        if best is None or gain[j] > best[2]:
            # cut index j puts the first j+1 sorted rows left of the boundary
            threshold = float((xo[j] + xo[j + 1]) / 2.0)
            best = (int(f), threshold, float(gain[j]))
    return best


@dataclass
class DecisionTree:
    """Array-encoded tree: internal nodes split, leaves hold P(label=1)."""

    feature: np.ndarray  # int32; -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # positive fraction at the node
    inbag: np.ndarray  # bootstrap row indices used to grow this tree

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(len(X), dtype=np.int64)
        while True:
            f = self.feature[idx]
            active = f >= 0
            if not active.any():
                break
            rows = np.flatnonzero(active)
            fa = f[rows]
            go_left = X[rows, fa] <= self.threshold[idx[rows]]
            idx[rows] = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])
        return self.value[idx]


def _bootstrap_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.sort(rng.integers(0, n, size=n))


def _grow_tree(X: np.ndarray, y: np.ndarray, seed_entropy, params: ForestParams) -> DecisionTree:
    rng = np.random.default_rng(seed_entropy)
    n, n_features = X.shape
    k = params.features_per_split or math.ceil(math.sqrt(n_features))
    k = min(k, n_features)
    inbag = _bootstrap_indices(rng, n)
    max_depth = params.max_depth if params.max_depth is not None else np.inf

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node(rows: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        return len(feature) - 1

    def grow(rows: np.ndarray, depth: int) -> int:
        node = new_node(rows)
        frac = value[node]
        if depth >= max_depth or len(rows) < 2 * params.min_samples_leaf or frac in (0.0, 1.0):
            return node
        cand = rng.choice(n_features, size=k, replace=False)
        found = best_split(X, y, rows, cand, params.min_samples_leaf)
        if found is None:
            return node
        f, thr, _ = found
        go_left = X[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(rows[go_left], depth + 1)
        right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(inbag, 0)
    return DecisionTree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        value=np.array(value),
        inbag=inbag.astype(np.int32),
    )


@dataclass
class Forest:
    trees: list[DecisionTree]
    n_features: int
    params: ForestParams
    seed: int

    def predict_proba(self, X) -> np.ndarray:
        """Mean over trees of the reached leaf's positive fraction."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        total = np.zeros(len(X))
        for tree in self.trees:  # fixed order keeps the mean bit-deterministic
            total += tree.predict_proba(X)
        return total / len(self.trees)

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) >= threshold).astype(np.int64)

    def oob_proba(self, X: np.ndarray) -> np.ndarray:
        """Out-of-bag probabilities; NaN for rows in every tree's bootstrap."""
        X = np.asarray(X, dtype=float)
        total = np.zeros(len(X))
        counts = np.zeros(len(X))
        for tree in self.trees:
            oob = np.ones(len(X), dtype=bool)
            oob[tree.inbag[tree.inbag < len(X)]] = False
            if not oob.any():
                continue
            total[oob] += tree.predict_proba(X[oob])
            counts[oob] += 1
        with np.errstate(invalid="ignore"):
            return np.where(counts > 0, total / np.maximum(counts, 1), np.nan)


def _validate_training_input(X: np.ndarray, y: np.ndarray) -> None:
    bad = ~np.isfinite(X)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ValueError(f"non-finite feature value at row {i}, column {j}")
    if len(X) != len(y):
        raise ValueError("X and y length mismatch")
    if len(X) < 2:
        raise ValueError("need at least 2 training rows")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError(f"training labels contain a single class {classes.tolist()}")


def train_forest(
    X,
    y,
    params: ForestParams | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> Forest:
    """Train a seeded forest; trees are independent given their derived seeds."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    params = params or ForestParams()
    _validate_training_input(X, y)

    children = np.random.SeedSequence(seed).spawn(params.n_trees)
    if n_jobs != 1:
        from joblib import Parallel, delayed

        trees = Parallel(n_jobs=n_jobs)(
            delayed(_grow_tree)(X, y, child, params) for child in children
        )
    else:
        trees = [_grow_tree(X, y, child, params) for child in children]
    return Forest(trees=list(trees), n_features=X.shape[1], params=params, seed=seed)


# -- persistence ---------------------------------------------------------------

_FOREST_FORMAT = 1


def save_forest(forest: Forest, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    offsets = np.cumsum([0] + [len(t.feature) for t in forest.trees]).astype(np.int64)
    np.save(directory / "feature.npy", np.concatenate([t.feature for t in forest.trees]))
    np.save(directory / "threshold.npy", np.concatenate([t.threshold for t in forest.trees]))
    np.save(directory / "left.npy", np.concatenate([t.left for t in forest.trees]))
    np.save(directory / "right.npy", np.concatenate([t.right for t in forest.trees]))
    np.save(directory / "value.npy", np.concatenate([t.value for t in forest.trees]))
    np.save(directory / "offsets.npy", offsets)
    np.save(directory / "inbag.npy", np.stack([t.inbag for t in forest.trees]))
    meta = {
        "format": _FOREST_FORMAT,
        "n_features": forest.n_features,
        "seed": forest.seed,
        "params": forest.params.to_dict(),
    }
    (directory / "forest.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_forest(directory) -> Forest:
    directory = Path(directory)
    meta = json.loads((directory / "forest.json").read_text())
    if meta.get("format") != _FOREST_FORMAT:
        raise ValueError(f"unsupported forest format {meta.get('format')!r}")
    offsets = np.load(directory / "offsets.npy")
    arrays = {
        name: np.load(directory / f"{name}.npy")
        for name in ("feature", "threshold", "left", "right", "value")
    }
    inbag = np.load(directory / "inbag.npy")
    trees = []
    for t in range(len(offsets) - 1):
        s, e = offsets[t], offsets[t + 1]
        trees.append(
            DecisionTree(
                feature=arrays["feature"][s:e],
                threshold=arrays["threshold"][s:e],
                left=arrays["left"][s:e],
                right=arrays["right"][s:e],
                value=arrays["value"][s:e],
                inbag=inbag[t],
            )
        )
    params = ForestParams(**meta["params"])
    return Forest(trees=trees, n_features=meta["n_features"], params=params, seed=meta["seed"])
