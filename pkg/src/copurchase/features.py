"""Node and pair feature engineering.

Node features are the product group one-hot, log degree, and local
clustering.  Pair features prepend both endpoints' group vectors to the
category-similarity vector and the target node's structural features; the
target-only structural block mirrors how downstream models consume pairs
(source products are the new, structure-poor side of the pair).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

GROUP_ORDER = ("Book", "DVD", "Music", "Video")
_GROUP_INDEX = {g: i for i, g in enumerate(GROUP_ORDER)}

PAD = -1  # sentinel for absent category levels; never matches a real cat_id
DEFAULT_CAT_DEPTH = 8
NODE_FEATURE_DIM = len(GROUP_ORDER) + 2

# feature blocks removable per variant (ablation support)
VARIANTS: dict[str, frozenset[str]] = {
    "full": frozenset(),
    "no_group": frozenset({"group"}),
    "no_category": frozenset({"category"}),
    "no_degree": frozenset({"degree"}),
    "no_clustering": frozenset({"clustering"}),
}


def group_onehot(group: str | None) -> np.ndarray:
    """One-hot over (Book, DVD, Music, Video); anything else is all-zero."""
    vec = np.zeros(len(GROUP_ORDER))
    idx = _GROUP_INDEX.get(group) if group is not None else None
    if idx is not None:
        vec[idx] = 1.0
    return vec


def pad_path(ids: Sequence[int], d_cat: int = DEFAULT_CAT_DEPTH) -> np.ndarray:
    """Truncate or sentinel-pad a category id path to fixed depth."""
    out = np.full(d_cat, PAD, dtype=np.int64)
    take = min(len(ids), d_cat)
    out[:take] = np.asarray(list(ids[:take]), dtype=np.int64)
    return out


def _path_ids(path) -> Sequence[int]:
    return getattr(path, "ids", path)


def category_similarity(paths_u: Iterable, paths_v: Iterable, d_cat: int = DEFAULT_CAT_DEPTH) -> np.ndarray:
    """Binary positionwise-match vector of the best-matching path pair.

    For every path pair the match vector marks positions where the padded
    cat_ids agree (sentinel positions never match).  The winning pair is the
    one whose deepest matching position is largest; remaining ties resolve to
    the lexicographically largest match vector, which makes the result
    symmetric in (u, v).  No match anywhere yields the zero vector.
    """
    pads_u = [pad_path(_path_ids(p), d_cat) for p in paths_u]
    pads_v = [pad_path(_path_ids(p), d_cat) for p in paths_v]
    best_key: tuple[int, tuple[int, ...]] | None = None
    best: np.ndarray | None = None
    for a in pads_u:
        for b in pads_v:
            match = (a == b) & (a != PAD)
            if not match.any():
                continue
            deepest = int(np.flatnonzero(match)[-1])
            key = (deepest, tuple(int(x) for x in match))
            if best_key is None or key > best_key:
                best_key = key
                best = match
    if best is None:
        return np.zeros(d_cat)
    return best.astype(float)


@dataclass(frozen=True)
class NodeFeature:
    group_onehot: np.ndarray
    log_degree: float
    clustering: float

    def vector(self) -> np.ndarray:
        return np.concatenate([self.group_onehot, [self.log_degree, self.clustering]])


def node_feature(g, v: int) -> NodeFeature:
    return NodeFeature(
        group_onehot=group_onehot(g.group(v)),
        log_degree=float(np.log1p(g.degree(v))),
        clustering=float(g.clustering(v)),
    )


def node_feature_vector(g, v: int) -> np.ndarray:
    return node_feature(g, v).vector()


@dataclass(frozen=True)
class PairFeature:
    source: NodeFeature
    target: NodeFeature
    sim_c: np.ndarray

    def vector(self, variant: str = "full", include_source_structural: bool = False) -> np.ndarray:
        dropped = _dropped_blocks(variant)
        parts: list[np.ndarray] = []
        if "group" not in dropped:
            parts += [self.source.group_onehot, self.target.group_onehot]
        if "category" not in dropped:
            parts.append(self.sim_c)
        if "degree" not in dropped:
            parts.append(np.array([self.target.log_degree]))
            if include_source_structural:
                parts.append(np.array([self.source.log_degree]))
        if "clustering" not in dropped:
            parts.append(np.array([self.target.clustering]))
            if include_source_structural:
                parts.append(np.array([self.source.clustering]))
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)


def _dropped_blocks(variant: str) -> frozenset[str]:
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown feature variant {variant!r}; known: {sorted(VARIANTS)}") from None


def pair_feature(g, u: int, v: int, d_cat: int = DEFAULT_CAT_DEPTH) -> PairFeature:
    return PairFeature(
        source=node_feature(g, u),
        target=node_feature(g, v),
        sim_c=category_similarity(g.paths(u), g.paths(v), d_cat),
    )


def feature_layout(
    variant: str = "full",
    d_cat: int = DEFAULT_CAT_DEPTH,
    include_source_structural: bool = False,
) -> list[tuple[str, int]]:
    """(block name, width) pairs describing the assembled vector, in order."""
    dropped = _dropped_blocks(variant)
    layout: list[tuple[str, int]] = []
    if "group" not in dropped:
        layout += [("src_group", len(GROUP_ORDER)), ("dst_group", len(GROUP_ORDER))]
    if "category" not in dropped:
        layout.append(("category_similarity", d_cat))
    if "degree" not in dropped:
        layout.append(("dst_log_degree", 1))
        if include_source_structural:
            layout.append(("src_log_degree", 1))
    if "clustering" not in dropped:
        layout.append(("dst_clustering", 1))
        if include_source_structural:
            layout.append(("src_clustering", 1))
    return layout


def feature_names(
    variant: str = "full",
    d_cat: int = DEFAULT_CAT_DEPTH,
    include_source_structural: bool = False,
) -> list[str]:
    names: list[str] = []
    for block, width in feature_layout(variant, d_cat, include_source_structural):
        if block.endswith("_group"):
            names += [f"{block}_{g.lower()}" for g in GROUP_ORDER]
        elif width == 1:
            names.append(block)
        else:
            names += [f"{block}_{i}" for i in range(width)]
    return names


def pair_feature_matrix(
    g,
    pairs: Iterable[tuple[int, int]],
    variant: str = "full",
    d_cat: int = DEFAULT_CAT_DEPTH,
    include_source_structural: bool = False,
) -> np.ndarray:
    """Assemble the feature matrix for (source, target) pairs.

    Vector length is constant across pairs for a fixed configuration.
    """
    rows = [
        pair_feature(g, u, v, d_cat).vector(variant, include_source_structural)
        for u, v in pairs
    ]
    width = sum(w for _, w in feature_layout(variant, d_cat, include_source_structural))
    if not rows:
        return np.zeros((0, width))
    return np.vstack(rows)


def save_feature_table(path, X: np.ndarray, labels, pairs, asins, variant: str,
                       d_cat: int = DEFAULT_CAT_DEPTH) -> None:
    """Columnar CSV: pair identity, label, then the named feature columns."""
    import csv

    names = feature_names(variant, d_cat)
    if X.shape[1] != len(names):
        raise ValueError(f"feature matrix width {X.shape[1]} != layout width {len(names)}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source_asin", "target_asin", "label", *names])
        for (u, v), y, row in zip(pairs, labels, X):
            w.writerow([asins[u], asins[v], int(y), *[repr(float(x)) for x in row]])
