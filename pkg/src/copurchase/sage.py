"""One-hop GraphSAGE link scorer with hand-derived gradients.

Each endpoint is embedded from its own features plus the mean of a sampled
subset of its direct neighbors' features (one aggregation layer only: in a
co-purchase graph, two-hop neighbors carry no co-purchase signal).  The pair
score is a logistic head over [h_u, h_v, sim_c].  Training minimizes binary
cross-entropy with momentum SGD; for every positive pair the ground-truth
edge is masked out of the adjacency while embedding that pair, so a 1-degree
source is seen exactly as an isolated (newly listed) product, matching the
deployment condition and preventing label leakage.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features as feat
from .graph import EdgeMaskView


@dataclass
class SageHyper:
    hidden: int = 16
    neighbor_samples: int = 10
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 20
    seed: int = 0
    d_cat: int = feat.DEFAULT_CAT_DEPTH
    proxy_aggregation: bool = False  # isolated source borrows the target's neighborhood

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SageParams:
    w_self: np.ndarray  # (h, f)
    w_neigh: np.ndarray  # (h, f)
    b_emb: np.ndarray  # (h,)
    w_head: np.ndarray  # (2h + d_cat,)
    b_head: float

    @property
    def hidden(self) -> int:
        return self.w_self.shape[0]

    def copy(self) -> "SageParams":
        return SageParams(
            self.w_self.copy(), self.w_neigh.copy(), self.b_emb.copy(),
            self.w_head.copy(), float(self.b_head),
        )

    def zeros_like(self) -> "SageParams":
        return SageParams(
            np.zeros_like(self.w_self), np.zeros_like(self.w_neigh),
            np.zeros_like(self.b_emb), np.zeros_like(self.w_head), 0.0,
        )


def init_params(hyper: SageHyper, n_node_features: int = feat.NODE_FEATURE_DIM,
                seed: int | None = None) -> SageParams:
    """Symmetric uniform init scaled by 1/sqrt(fan_in); biases zero."""
    rng = np.random.default_rng(hyper.seed if seed is None else seed)
    h, f = hyper.hidden, n_node_features
    b_in = 1.0 / np.sqrt(f)
    b_head = 1.0 / np.sqrt(2 * h + hyper.d_cat)
    return SageParams(
        w_self=rng.uniform(-b_in, b_in, size=(h, f)),
        w_neigh=rng.uniform(-b_in, b_in, size=(h, f)),
        b_emb=np.zeros(h),
        w_head=rng.uniform(-b_head, b_head, size=2 * h + hyper.d_cat),
        b_head=0.0,
    )


def _sigmoid(s: float) -> float:
    if s >= 0:
        return 1.0 / (1.0 + np.exp(-s))
    e = np.exp(s)
    return e / (1.0 + e)


def _bce(s: float, y: float) -> float:
    # stable -[y log p + (1-y) log(1-p)] with p = sigmoid(s)
    return float(max(s, 0.0) - s * y + np.log1p(np.exp(-abs(s))))


def _neighbor_mean(g, v: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Mean feature vector over a sampled neighbor subset; zero if isolated."""
    nb = g.neighbors(v)
    if len(nb) == 0:
        return np.zeros(feat.NODE_FEATURE_DIM)
    if len(nb) > n_samples:
        nb = rng.choice(nb, size=n_samples, replace=False)
    acc = np.zeros(feat.NODE_FEATURE_DIM)
    for w in nb:
        acc += feat.node_feature_vector(g, int(w))
    return acc / len(nb)


def embed_node(g, v: int, params: SageParams, n_samples: int,
               rng: np.random.Generator) -> np.ndarray:
    """relu(W_self x_v + W_neigh mean(x_neighbors) + b).

    Sampling is without replacement when the degree exceeds the budget; an
    isolated node's neighbor term is the zero vector, so its embedding
    depends only on its own features.
    """
    x = feat.node_feature_vector(g, v)
    nbar = _neighbor_mean(g, v, n_samples, rng)
    z = params.w_self @ x + params.w_neigh @ nbar + params.b_emb
    return np.maximum(z, 0.0)


def score_pair(g, u: int, v: int, params: SageParams, sim_c: np.ndarray,
               n_samples: int, rng: np.random.Generator,
               proxy_aggregation: bool = False) -> float:
    """sigmoid(w_head . [h_u, h_v, sim_c] + b_head) in (0, 1).

    The head is ordered, so score(u, v) and score(v, u) differ in general;
    queries always put the isolated/new product first.
    """
    fwd = _pair_forward(g, u, v, params, sim_c, n_samples, rng, proxy_aggregation)
    return fwd["p"]


def _pair_forward(g, u, v, params, sim_c, n_samples, rng, proxy_aggregation):
    x_u = feat.node_feature_vector(g, u)
    x_v = feat.node_feature_vector(g, v)
    nbar_v = _neighbor_mean(g, v, n_samples, rng)
    if proxy_aggregation and g.degree(u) == 0:
        nbar_u = nbar_v
    else:
        nbar_u = _neighbor_mean(g, u, n_samples, rng)
    z_u = params.w_self @ x_u + params.w_neigh @ nbar_u + params.b_emb
    z_v = params.w_self @ x_v + params.w_neigh @ nbar_v + params.b_emb
    h_u = np.maximum(z_u, 0.0)
    h_v = np.maximum(z_v, 0.0)
    head_in = np.concatenate([h_u, h_v, sim_c])
    s = float(params.w_head @ head_in + params.b_head)
    p = min(max(_sigmoid(s), 1e-12), 1.0 - 1e-12)
    return {
        "x_u": x_u, "x_v": x_v, "nbar_u": nbar_u, "nbar_v": nbar_v,
        "z_u": z_u, "z_v": z_v, "h_u": h_u, "h_v": h_v,
        "head_in": head_in, "s": s, "p": p,
    }


def _sample_view(g, sample):
    """Adjacency used while embedding one sample: positives hide their edge."""
    if sample.label == 1:
        return EdgeMaskView(g, sample.source, sample.target)
    return g


def batch_loss_and_grads(g, samples, params: SageParams, hyper: SageHyper,
                         rng: np.random.Generator,
                         sim_cache: dict | None = None):
    """Mean BCE over the batch and its analytic gradients."""
    h = params.hidden
    grads = params.zeros_like()
    loss = 0.0
    for sample in samples:
        u, v, y = sample.source, sample.target, float(sample.label)
        view = _sample_view(g, sample)
        if sim_cache is not None and (u, v) in sim_cache:
            sim_c = sim_cache[(u, v)]
        else:
            sim_c = feat.category_similarity(g.paths(u), g.paths(v), hyper.d_cat)
            if sim_cache is not None:
                sim_cache[(u, v)] = sim_c
        fwd = _pair_forward(view, u, v, params, sim_c, hyper.neighbor_samples, rng,
                            hyper.proxy_aggregation)
        loss += _bce(fwd["s"], y)

        d = fwd["p"] - y  # dL/ds
        grads.w_head += d * fwd["head_in"]
        grads.b_head += d
        dz_u = d * params.w_head[:h] * (fwd["z_u"] > 0.0)
        dz_v = d * params.w_head[h : 2 * h] * (fwd["z_v"] > 0.0)
        grads.w_self += np.outer(dz_u, fwd["x_u"]) + np.outer(dz_v, fwd["x_v"])
        grads.w_neigh += np.outer(dz_u, fwd["nbar_u"]) + np.outer(dz_v, fwd["nbar_v"])
        grads.b_emb += dz_u + dz_v

    k = len(samples)
    grads.w_self /= k
    grads.w_neigh /= k
    grads.b_emb /= k
    grads.w_head /= k
    grads.b_head /= k
    return loss / k, grads


def train_sage(g, samples, hyper: SageHyper | None = None) -> tuple[SageParams, list[float]]:
    """Momentum-SGD training; returns final params and the per-epoch loss trace.

    Deterministic under the hyper seed: init, batch order, and neighbor
    sampling all draw from one generator.  Neighborhoods are resampled every
    epoch.  Zero epochs returns the initialization unchanged.
    """
    hyper = hyper or SageHyper()
    rng = np.random.default_rng(hyper.seed)
    params = init_params(hyper, seed=hyper.seed)
    vel = params.zeros_like()
    trace: list[float] = []
    sim_cache: dict = {}

    for _ in range(hyper.epochs):
        order = rng.permutation(len(samples))
        epoch_loss = 0.0
        for start in range(0, len(samples), hyper.batch_size):
            batch = [samples[int(i)] for i in order[start : start + hyper.batch_size]]
            loss, grads = batch_loss_and_grads(g, batch, params, hyper, rng, sim_cache)
            epoch_loss += loss * len(batch)
            for name in ("w_self", "w_neigh", "b_emb", "w_head"):
                v = getattr(vel, name)
                v *= hyper.momentum
                v -= hyper.learning_rate * getattr(grads, name)
                arr = getattr(params, name)
                arr += v
            vel.b_head = hyper.momentum * vel.b_head - hyper.learning_rate * grads.b_head
            params.b_head += vel.b_head
        mean_loss = epoch_loss / len(samples)
        if not np.isfinite(mean_loss):
            raise RuntimeError(
                f"training diverged (loss={mean_loss}); reduce the learning rate"
            )
        trace.append(mean_loss)
    return params, trace


# -- gradient verification -------------------------------------------------------


def _flatten(params: SageParams) -> np.ndarray:
    return np.concatenate([
        params.w_self.ravel(), params.w_neigh.ravel(), params.b_emb,
        params.w_head, [params.b_head],
    ])


def _unflatten(vec: np.ndarray, like: SageParams) -> SageParams:
    shapes = [like.w_self.shape, like.w_neigh.shape, like.b_emb.shape, like.w_head.shape]
    sizes = [int(np.prod(s)) for s in shapes]
    parts = np.split(vec, np.cumsum(sizes))
    return SageParams(
        w_self=parts[0].reshape(shapes[0]),
        w_neigh=parts[1].reshape(shapes[1]),
        b_emb=parts[2].copy(),
        w_head=parts[3].copy(),
        b_head=float(parts[4][0]),
    )


def grad_check(g, samples, params: SageParams, hyper: SageHyper,
               step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Requires a deterministic loss: use a fixture where every degree is at
    most ``hyper.neighbor_samples`` so no sampling randomness is consumed.
    """
    rng = np.random.default_rng(0)  # untouched when no node exceeds the budget
    _, grads = batch_loss_and_grads(g, samples, params, hyper, rng)
    analytic = _flatten(grads)

    theta = _flatten(params)
    numeric = np.zeros_like(theta)
    for i in range(len(theta)):
        for sign, slot in ((+1.0, 0), (-1.0, 1)):
            bumped = theta.copy()
            bumped[i] += sign * step
            loss, _ = batch_loss_and_grads(g, samples, _unflatten(bumped, params), hyper, rng)
            numeric[i] += sign * loss
        numeric[i] /= 2.0 * step
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    rel[np.maximum(np.abs(analytic), np.abs(numeric)) < 1e-10] = 0.0
    return float(rel.max())


# -- persistence ------------------------------------------------------------------

_SAGE_FORMAT = 1


def save_params(params: SageParams, hyper: SageHyper, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in ("w_self", "w_neigh", "b_emb", "w_head"):
        np.save(directory / f"{name}.npy", getattr(params, name))
    meta = {
        "format": _SAGE_FORMAT,
        "b_head": params.b_head,
        "hyper": hyper.to_dict(),
        "shapes": {
            "w_self": list(params.w_self.shape),
            "w_neigh": list(params.w_neigh.shape),
            "b_emb": list(params.b_emb.shape),
            "w_head": list(params.w_head.shape),
        },
    }
    (directory / "sage.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_params(directory) -> tuple[SageParams, SageHyper]:
    directory = Path(directory)
    meta = json.loads((directory / "sage.json").read_text())
    if meta.get("format") != _SAGE_FORMAT:
        raise ValueError(f"unsupported sage format {meta.get('format')!r}")
    arrays = {
        name: np.load(directory / f"{name}.npy")
        for name in ("w_self", "w_neigh", "b_emb", "w_head")
    }
    for name, shape in meta["shapes"].items():
        if list(arrays[name].shape) != shape:
            raise ValueError(f"shape mismatch for {name}")
    if not all(np.isfinite(a).all() for a in arrays.values()):
        raise ValueError("non-finite parameter values")
    params = SageParams(b_head=float(meta["b_head"]), **arrays)
    return params, SageHyper(**meta["hyper"])


def save_loss_trace(path, trace: list[float]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(trace):
            w.writerow([i, repr(float(loss))])
