"""Labeled pair dataset built from 1-degree nodes.

Positives pair a sampled 1-degree node with its unique neighbor; the single
edge is the ground truth a predictor must recover once the node is treated
as isolated.  Negatives pair 1-degree nodes with nodes they are not
connected to (or, optionally, with isolated nodes of the full graph).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

NEGATIVE_MODES = ("non_adjacent", "isolated")


@dataclass(frozen=True)
class PairSample:
    source: int
    target: int
    label: int


def one_degree_nodes(g) -> np.ndarray:
    """All nodes with degree exactly 1, ascending."""
    return np.flatnonzero(g.degrees == 1)


def make_training_set(
    g,
    n_pos: int = 10_000,
    n_neg: int = 10_000,
    seed: int = 0,
    negatives: str = "non_adjacent",
) -> list[PairSample]:
    """Sample labeled (source, target) pairs from 1-degree nodes.

    Positives: ``n_pos`` 1-degree nodes drawn without replacement, each
    paired with its unique neighbor (label 1).  Negatives: ``n_neg``
    1-degree nodes drawn with replacement, each paired with a uniformly
    random non-neighbor (label 0); ``negatives="isolated"`` draws targets
    from degree-0 nodes instead.  Output order is a seeded shuffle.
    """
    if negatives not in NEGATIVE_MODES:
        raise ValueError(f"negatives must be one of {NEGATIVE_MODES}, got {negatives!r}")
    pool = one_degree_nodes(g)
    if len(pool) < n_pos:
        raise ValueError(
            f"need {n_pos} 1-degree nodes for positives, only {len(pool)} available"
        )
    rng = np.random.default_rng(seed)

    pos_sources = rng.choice(pool, size=n_pos, replace=False)
    samples = [
        PairSample(int(s), int(g.neighbors(int(s))[0]), 1) for s in pos_sources
    ]

    if n_neg > 0:
        neg_sources = pool[rng.integers(0, len(pool), size=n_neg)]
        if negatives == "isolated":
            iso = np.flatnonzero(g.degrees == 0)
            if len(iso) == 0:
                raise ValueError("no isolated nodes available for negatives=isolated")
            targets = iso[rng.integers(0, len(iso), size=n_neg)]
            samples += [PairSample(int(s), int(t), 0) for s, t in zip(neg_sources, targets)]
        else:
            if g.n < 3:
                raise ValueError("graph too small: no non-adjacent negative targets exist")
            for s in neg_sources:
                s = int(s)
                only_neighbor = int(g.neighbors(s)[0])
                while True:
                    t = int(rng.integers(g.n))
                    if t != s and t != only_neighbor:
                        break
                samples.append(PairSample(s, t, 0))

    perm = rng.permutation(len(samples))
    return [samples[int(i)] for i in perm]


def split(
    samples: list[PairSample], train_fraction: float = 0.8, seed: int = 0
) -> tuple[list[PairSample], list[PairSample]]:
    """Stratified seeded shuffle-split.

    Per-label train counts are apportioned by largest remainder so the total
    train size is round(fraction * n) and each part keeps the overall label
    ratio as closely as integer counts allow.
    """
    if not samples:
        raise ValueError("cannot split an empty sample list")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)

    by_label: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        by_label.setdefault(s.label, []).append(i)
    labels = sorted(by_label)

    total_train = int(round(train_fraction * len(samples)))
    exact = {lab: train_fraction * len(by_label[lab]) for lab in labels}
    base = {lab: int(exact[lab]) for lab in labels}
    remaining = total_train - sum(base.values())
    order = sorted(labels, key=lambda lab: (-(exact[lab] - base[lab]), lab))
    for lab in order[:remaining]:
        base[lab] += 1

    train_idx: list[int] = []
    test_idx: list[int] = []
    for lab in labels:
        idx = np.array(by_label[lab])
        idx = idx[rng.permutation(len(idx))]
        train_idx += idx[: base[lab]].tolist()
        test_idx += idx[base[lab] :].tolist()

    train_idx = [train_idx[i] for i in rng.permutation(len(train_idx))]
    test_idx = [test_idx[i] for i in rng.permutation(len(test_idx))]
    return [samples[i] for i in train_idx], [samples[i] for i in test_idx]


def save_pairs_csv(path, samples: list[PairSample], asins: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source_asin", "target_asin", "label"])
        for s in samples:
            w.writerow([asins[s.source], asins[s.target], s.label])


def load_pairs_csv(path, asin_index: dict[str, int]) -> list[PairSample]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for src, dst, label in reader:
            out.append(PairSample(asin_index[src], asin_index[dst], int(label)))
    return out
