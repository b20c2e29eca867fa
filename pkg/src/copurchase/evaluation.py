"""Evaluation: classification metrics, top-k link-recovery protocol, ablation.

The protocol samples a connected subgraph by seeded BFS from the largest
component, treats every degree-1 node inside it as a query, hides that
node's single edge (making it an isolated product), scores the node against
every other subgraph node, and records the rank of the true neighbor.
Top-k accuracy is the fraction of queries whose truth lands in the first k.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import features as feat
from .forest import Forest
from .graph import EdgeMaskView, bfs_sample, graph_checksum, induced_subgraph
from .sage import SageHyper, SageParams, _neighbor_mean

DEFAULT_KS = (1, 5, 10, 20, 50, 100, 200, 300, 400, 500)


# -- classification metrics ----------------------------------------------------


@dataclass(frozen=True)
class ClassificationMetrics:
    precision: float
    recall: float
    f1: float
    zero_predicted_positives: bool = False


def precision_recall_f1(labels, scores, threshold: float = 0.5) -> ClassificationMetrics:
    """Standard metrics at a fixed threshold (predicted positive: score >= t).

    With no predicted positives, precision is defined as 0 and flagged.
    """
    y = np.asarray(labels).astype(int)
    pred = np.asarray(scores) >= threshold
    tp = int(np.count_nonzero(pred & (y == 1)))
    fp = int(np.count_nonzero(pred & (y == 0)))
    fn = int(np.count_nonzero(~pred & (y == 1)))
    zero_pred = (tp + fp) == 0
    precision = 0.0 if zero_pred else tp / (tp + fp)
    recall = 0.0 if (tp + fn) == 0 else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return ClassificationMetrics(precision, recall, f1, zero_pred)


def roc_auc(labels, scores) -> float:
    """Rank-statistic (Mann-Whitney) AUC with tie averaging."""
    y = np.asarray(labels).astype(int)
    s = np.asarray(scores, dtype=float)
    n_pos = int(np.count_nonzero(y == 1))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs at least one sample of each class")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average rank, 1-based
        i = j + 1
    pos_ranks = ranks[y == 1].sum()
    return float((pos_ranks - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# -- scorers ---------------------------------------------------------------------


class RandomScorer:
    """Seeded uniform(0,1) score per query-candidate pair."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def score_candidates(self, view, query: int, candidates: np.ndarray) -> np.ndarray:
        return self.rng.random(len(candidates))


class ForestScorer:
    """Scores pairs with a trained forest over view-local pair features."""

    def __init__(self, forest: Forest, variant: str = "full",
                 d_cat: int = feat.DEFAULT_CAT_DEPTH):
        self.forest = forest
        self.variant = variant
        self.d_cat = d_cat

    def score_candidates(self, view, query: int, candidates: np.ndarray) -> np.ndarray:
        X = feat.pair_feature_matrix(
            view, [(query, int(c)) for c in candidates], self.variant, self.d_cat
        )
        return self.forest.predict_proba(X)


class SageScorer:
    """Scores pairs with trained embedding parameters.

    Neighbor sampling draws from the scorer's own seeded generator, so a
    fixed seed gives a reproducible evaluation stream.
    """

    def __init__(self, params: SageParams, hyper: SageHyper, seed: int = 0):
        self.params = params
        self.hyper = hyper
        self.rng = np.random.default_rng(seed)

    def score_candidates(self, view, query: int, candidates: np.ndarray) -> np.ndarray:
        p = self.params
        h = p.hidden
        n_samples = self.hyper.neighbor_samples
        x_q = feat.node_feature_vector(view, query)
        proxy = self.hyper.proxy_aggregation and view.degree(query) == 0
        if not proxy:
            nbar_q = _neighbor_mean(view, query, n_samples, self.rng)
            h_q = np.maximum(p.w_self @ x_q + p.w_neigh @ nbar_q + p.b_emb, 0.0)
            base = float(p.w_head[:h] @ h_q + p.b_head)

        scores = np.empty(len(candidates))
        for i, c in enumerate(candidates):
            c = int(c)
            x_c = feat.node_feature_vector(view, c)
            nbar_c = _neighbor_mean(view, c, n_samples, self.rng)
            if proxy:
                # isolated query borrows the candidate's sampled neighborhood
                h_q = np.maximum(p.w_self @ x_q + p.w_neigh @ nbar_c + p.b_emb, 0.0)
                base = float(p.w_head[:h] @ h_q + p.b_head)
            h_c = np.maximum(p.w_self @ x_c + p.w_neigh @ nbar_c + p.b_emb, 0.0)
            sim_c = feat.category_similarity(view.paths(query), view.paths(c), self.hyper.d_cat)
            s = base + float(p.w_head[h : 2 * h] @ h_c + p.w_head[2 * h :] @ sim_c)
            scores[i] = 1.0 / (1.0 + np.exp(-s)) if s >= 0 else np.exp(s) / (1.0 + np.exp(s))
        return scores


# -- top-k protocol --------------------------------------------------------------


@dataclass
class EvalReport:
    """Metrics bundle with full provenance."""

    topk_curve: list[tuple[int, float]]
    top5: float | None
    mrr: float
    n_queries: int
    per_seed: list[dict]
    config: dict
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    roc_auc: float | None = None

    def to_dict(self) -> dict:
        return {
            "topk_curve": [[int(k), float(a)] for k, a in self.topk_curve],
            "top5": self.top5,
            "mrr": self.mrr,
            "n_queries": self.n_queries,
            "per_seed": self.per_seed,
            "config": self.config,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "roc_auc": self.roc_auc,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _ranks_for_subgraph(sub, scorer) -> list[int]:
    """Rank of the true neighbor for every degree-1 query in the subgraph."""
    queries = np.flatnonzero(sub.degrees == 1)
    ranks: list[int] = []
    all_nodes = np.arange(sub.n)
    for q in queries:
        q = int(q)
        truth = int(sub.neighbors(q)[0])
        view = EdgeMaskView(sub, q, truth)
        candidates = all_nodes[all_nodes != q]
        scores = scorer.score_candidates(view, q, candidates)
        t_pos = int(np.searchsorted(candidates, truth))
        s_t = scores[t_pos]
        higher = int(np.count_nonzero(scores > s_t))
        tied_before = int(np.count_nonzero((scores == s_t) & (candidates < truth)))
        ranks.append(1 + higher + tied_before)
    return ranks


def evaluate_protocol(
    g_lcc,
    scorer,
    n: int = 1000,
    ks: Sequence[int] = DEFAULT_KS,
    seed: int = 0,
    repeats: int = 5,
    model_id: str = "",
) -> EvalReport:
    """Run the BFS-subgraph top-k protocol, averaged over seeded repeats.

    Scoring happens on a per-query edge-masked view; the shared subgraph is
    verified byte-identical (checksum) after each repeat.  Raises when a
    sampled subgraph contains no degree-1 queries.
    """
    ks = sorted(int(k) for k in ks)
    per_seed: list[dict] = []
    curves = np.zeros((repeats, len(ks)))
    mrrs = []
    total_queries = 0
    for r in range(repeats):
        sub_seed = seed + r
        nodes = bfs_sample(g_lcc, n, seed=sub_seed)
        sub, _ = induced_subgraph(g_lcc, nodes)
        before = graph_checksum(sub)
        ranks = _ranks_for_subgraph(sub, scorer)
        if not ranks:
            raise ValueError(
                f"subgraph for seed {sub_seed} has no degree-1 queries; "
                f"increase n or try another seed"
            )
        if graph_checksum(sub) != before:
            raise AssertionError("evaluation mutated the shared subgraph")
        arr = np.array(ranks)
        accs = [float(np.mean(arr <= k)) for k in ks]
        curves[r] = accs
        mrr = float(np.mean(1.0 / arr))
        mrrs.append(mrr)
        total_queries += len(ranks)
        per_seed.append(
            {"seed": sub_seed, "n_queries": len(ranks), "mrr": mrr,
             "topk": {str(k): a for k, a in zip(ks, accs)}}
        )
    mean_curve = curves.mean(axis=0)
    if np.any(np.diff(mean_curve) < -1e-12):
        raise AssertionError("top-k accuracy curve must be non-decreasing in k")
    curve = list(zip(ks, mean_curve.tolist()))
    top5 = dict(curve).get(5)
    return EvalReport(
        topk_curve=curve,
        top5=top5,
        mrr=float(np.mean(mrrs)),
        n_queries=total_queries,
        per_seed=per_seed,
        config={
            "n": n, "ks": list(ks), "seed": seed, "repeats": repeats,
            "model": model_id,
            "topk_std": curves.std(axis=0).tolist(),
        },
    )


# -- ablation --------------------------------------------------------------------


@dataclass(frozen=True)
class AblationRow:
    variant: str
    precision: float
    recall: float
    f1: float
    roc_auc: float


def run_ablation(
    g,
    train_samples,
    test_samples,
    variants: Sequence[str],
    d_cat: int = feat.DEFAULT_CAT_DEPTH,
    forest_params=None,
    seed: int = 0,
    n_jobs: int = 1,
) -> list[AblationRow]:
    """Train one forest per feature variant on identical splits; evaluate held out.

    Unknown variant names raise before any training starts.
    """
    from .forest import train_forest

    for v in variants:
        feat.feature_layout(v, d_cat)  # validates the name
    rows: list[AblationRow] = []
    y_train = np.array([s.label for s in train_samples])
    y_test = np.array([s.label for s in test_samples])
    train_pairs = [(s.source, s.target) for s in train_samples]
    test_pairs = [(s.source, s.target) for s in test_samples]
    for variant in variants:
        X_train = feat.pair_feature_matrix(g, train_pairs, variant, d_cat)
        X_test = feat.pair_feature_matrix(g, test_pairs, variant, d_cat)
        model = train_forest(X_train, y_train, forest_params, seed=seed, n_jobs=n_jobs)
        scores = model.predict_proba(X_test)
        cm = precision_recall_f1(y_test, scores)
        rows.append(
            AblationRow(variant, cm.precision, cm.recall, cm.f1, roc_auc(y_test, scores))
        )
    return rows


def save_topk_csv(path, report: EvalReport) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "accuracy"])
        for k, a in report.topk_curve:
            w.writerow([k, repr(float(a))])


def save_ablation_csv(path, rows: list[AblationRow]) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "precision", "recall", "f1", "roc_auc"])
        for r in rows:
            w.writerow([r.variant, *(repr(float(x)) for x in
                                     (r.precision, r.recall, r.f1, r.roc_auc))])
