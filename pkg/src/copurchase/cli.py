"""Pipeline CLI: stage-per-subcommand with cached, manifest-checked artifacts.

Stages write versioned artifacts under the workspace directory; each stage
verifies its upstream artifact hashes before running.  Heavy steps (parsing
the ~1 GB dump, building the graph) run once and everything downstream
iterates on the cached binaries.

Exit codes: 0 success, 1 usage error, 2 data error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import gzip
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, artifacts, community, dataset, evaluation, features, forest, graph, metadata, sage
from .artifacts import DataError, InvariantError, UsageError, dump_json, require_artifact, write_manifest
from .config import PipelineConfig

log = logging.getLogger("copurchase")

ABLATION_VARIANTS = ("full", "no_group", "no_category", "no_degree", "no_clustering")


# -- record store -----------------------------------------------------------------


def _record_to_json(rec: metadata.ProductRecord) -> dict:
    row = {"id": rec.id, "asin": rec.asin, "discontinued": rec.discontinued}
    if rec.title is not None:
        row["title"] = rec.title
    if rec.group is not None:
        row["group"] = rec.group
    if rec.salesrank is not None:
        row["salesrank"] = rec.salesrank
    if rec.similar_asins:
        row["similar"] = list(rec.similar_asins)
    if rec.category_paths:
        row["categories"] = [p.format() for p in rec.category_paths]
    if rec.review_summary is not None:
        s = rec.review_summary
        row["reviews"] = {"total": s.total, "downloaded": s.downloaded, "avg_rating": s.avg_rating}
    if rec.count_mismatch:
        row["count_mismatch"] = True
    return row


def _record_from_json(row: dict) -> metadata.ProductRecord:
    summary = None
    if "reviews" in row:
        r = row["reviews"]
        summary = metadata.ReviewSummary(r["total"], r["downloaded"], r["avg_rating"])
    return metadata.ProductRecord(
        id=row["id"],
        asin=row["asin"],
        title=row.get("title"),
        group=row.get("group"),
        salesrank=row.get("salesrank"),
        similar_asins=tuple(row.get("similar", ())),
        category_paths=tuple(metadata.parse_category_line(c) for c in row.get("categories", ())),
        review_summary=summary,
        discontinued=row.get("discontinued", False),
        count_mismatch=row.get("count_mismatch", False),
    )


def iter_record_store(path):
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        for line in fh:
            yield _record_from_json(json.loads(line))


# -- stage helpers ------------------------------------------------------------------


def _ws(cfg: PipelineConfig) -> Path:
    ws = cfg.resolved_workspace()
    ws.mkdir(parents=True, exist_ok=True)
    return ws


def _load_graph(cfg: PipelineConfig, force: bool) -> graph.CoPurchaseGraph:
    ws = _ws(cfg)
    require_artifact(ws / "graph", "build-graph", force)
    return graph.load_graph(ws / "graph" / "store")


def _load_scoped_graph(cfg: PipelineConfig, scope: str, force: bool) -> graph.CoPurchaseGraph:
    g = _load_graph(cfg, force)
    if scope == "lcc":
        g, _ = graph.largest_cc(g)
    return g


# -- stages --------------------------------------------------------------------------


def stage_parse(cfg: PipelineConfig, args) -> int:
    if not args.input:
        raise UsageError("parse requires --input <amazon-meta[.gz]>")
    src = Path(args.input)
    if not src.exists():
        raise DataError(f"input file not found: {src}")
    ws = _ws(cfg)
    out_dir = ws / "records"
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "records.jsonl.gz"
    n = kept = 0
    with artifacts.open_gzip_writer(out_path) as fh:
        for rec in metadata.parse_metadata(str(src), on_error=args.on_error):
            fh.write(json.dumps(_record_to_json(rec), sort_keys=True, separators=(",", ":")).encode())
            fh.write(b"\n")
            n += 1
            if not rec.discontinued and rec.title is not None and rec.group is not None:
                kept += 1
    if n == 0:
        log.warning("no records parsed from %s (empty input)", src)
    write_manifest(
        out_dir, "parse",
        inputs={"metadata": str(src)},
        outputs=["records.jsonl.gz"],
        config=cfg.to_dict(),
        extra={"counts": {"records": n, "valid": kept}},
    )
    print(f"parsed {n} records ({kept} valid) -> {out_path}")
    return 0


def stage_build_graph(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    require_artifact(ws / "records", "parse", args.force)
    records_path = ws / "records" / "records.jsonl.gz"
    g = graph.build_graph(metadata.filter_valid(iter_record_store(records_path)))
    try:
        g.validate()
    except AssertionError as exc:
        raise InvariantError(f"built graph failed validation: {exc}") from exc
    out_dir = ws / "graph"
    graph.save_graph(g, out_dir / "store")
    write_manifest(
        out_dir, "build-graph",
        inputs={"records": str(records_path)},
        outputs=["store"],
        config=cfg.to_dict(),
        extra={"graph": {"nodes": g.n, "edges": g.m, **g.build_info}},
    )
    print(f"graph: {g.n} nodes, {g.m} edges, {g.isolated_count()} isolated")
    return 0


def _ccdf_csv(path, dist: graph.DegreeDistribution) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("degree,ccdf\n")
        for k, p in dist.points():
            fh.write(f"{k},{p!r}\n")


def stage_stats(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    g = _load_graph(cfg, args.force)
    labels, sizes = graph.connected_components(g)
    lcc, _ = graph.largest_cc(g)
    full_dist = graph.DegreeDistribution.from_degrees(g.degrees)
    lcc_dist = graph.DegreeDistribution.from_degrees(lcc.degrees)
    fit = graph.fit_power_law_ccdf(lcc_dist, k_min=args.k_min)
    deg = g.degrees
    top = np.lexsort((np.arange(g.n), -deg))[:10]
    stats = {
        "nodes": g.n,
        "edges": g.m,
        "isolated": g.isolated_count(),
        "components": int(len(sizes)),
        "non_singleton_components": int(np.count_nonzero(sizes >= 2)),
        "lcc_nodes": lcc.n,
        "lcc_edges": lcc.m,
        "assortativity_group_lcc": graph.attribute_assortativity(lcc, lcc.groups),
        "power_law": {
            "alpha_ccdf": fit.alpha,
            "alpha_hill": fit.alpha_hill,
            "r_squared": fit.r_squared,
            "k_min": fit.k_min,
            "n_points": fit.n_points,
        },
        "degree_centrality": {
            "max_degree": int(deg.max()) if g.n else 0,
            "max_normalized": float(deg.max() / (g.n - 1)) if g.n > 1 else 0.0,
            "top10": [
                {"asin": g.asins[int(v)], "degree": int(deg[v]),
                 "normalized": float(deg[v] / (g.n - 1))}
                for v in top
            ],
        },
        "build_info": g.build_info,
    }
    out_dir = ws / "stats"
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(out_dir / "stats.json", stats)
    _ccdf_csv(out_dir / "ccdf_full.csv", full_dist)
    _ccdf_csv(out_dir / "ccdf_lcc.csv", lcc_dist)
    write_manifest(
        out_dir, "stats",
        inputs={"graph": str(ws / "graph" / artifacts.MANIFEST_NAME)},
        outputs=["stats.json", "ccdf_full.csv", "ccdf_lcc.csv"],
        config=cfg.to_dict(),
    )
    print(json.dumps(stats, indent=2, sort_keys=True))
    return 0


def stage_communities(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    lcc = _load_scoped_graph(cfg, "lcc", args.force)
    result = community.louvain(lcc, seed=cfg.seed)
    q_group = community.modularity_by_attribute(lcc, lcc.groups)

    def sim(u: int, v: int):
        return features.category_similarity(lcc.paths(u), lcc.paths(v), cfg.d_cat)

    q_sim = community.modularity_by_category_similarity(
        lcc, sim, pair_sample_size=cfg.modularity_pair_samples, seed=cfg.seed
    )
    out_dir = ws / "communities"
    out_dir.mkdir(parents=True, exist_ok=True)
    community.save_partition(result.partition, out_dir / "partition.csv")
    report = {
        "louvain": {
            "modularity": result.modularity,
            "n_communities": result.partition.n_communities,
            "n_levels": result.n_levels,
            "sweep_modularity": list(result.sweep_modularity),
            "seed": cfg.seed,
        },
        "by_group_attribute": q_group,
        "by_category_similarity": {
            "q": q_sim.q,
            "q_edge_only": q_sim.q_edge_only,
            "null_term_stderr": q_sim.null_term_stderr,
            "exact": q_sim.exact,
            "pair_samples": q_sim.pair_samples,
        },
    }
    dump_json(out_dir / "modularity.json", report)
    write_manifest(
        out_dir, "communities",
        inputs={"graph": str(ws / "graph" / artifacts.MANIFEST_NAME)},
        outputs=["partition.csv", "modularity.json"],
        config=cfg.to_dict(), seed=cfg.seed,
    )
    print(json.dumps(report["louvain"] | {"by_group": q_group, "by_category_sim": q_sim.q},
                     indent=2, sort_keys=True, default=float))
    return 0


def _dataset_scope(cfg: PipelineConfig) -> str:
    # isolated negatives only exist outside the LCC
    return "lcc" if cfg.negatives == "non_adjacent" else "full"


def stage_make_dataset(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    scope = _dataset_scope(cfg)
    g = _load_scoped_graph(cfg, scope, args.force)
    samples = dataset.make_training_set(
        g, n_pos=cfg.n_pos, n_neg=cfg.n_neg, seed=cfg.seed, negatives=cfg.negatives
    )
    out_dir = ws / "dataset"
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset.save_pairs_csv(out_dir / "pairs.csv", samples, g.asins)
    info = {
        "graph_scope": scope,
        "n_pos": cfg.n_pos,
        "n_neg": cfg.n_neg,
        "negatives": cfg.negatives,
        "seed": cfg.seed,
        "one_degree_nodes": int(len(dataset.one_degree_nodes(g))),
    }
    dump_json(out_dir / "dataset.json", info)
    write_manifest(
        out_dir, "make-dataset",
        inputs={"graph": str(ws / "graph" / artifacts.MANIFEST_NAME)},
        outputs=["pairs.csv", "dataset.json"],
        config=cfg.to_dict(), seed=cfg.seed,
    )
    print(f"dataset: {len(samples)} pairs ({info['one_degree_nodes']} 1-degree nodes available)")
    return 0


def _load_dataset(cfg: PipelineConfig, force: bool):
    ws = _ws(cfg)
    manifest = require_artifact(ws / "dataset", "make-dataset", force)
    info = artifacts.load_json(ws / "dataset" / "dataset.json")
    g = _load_scoped_graph(cfg, info["graph_scope"], force)
    samples = dataset.load_pairs_csv(ws / "dataset" / "pairs.csv", g.asin_index)
    return g, samples, info, manifest


def stage_features(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    g, samples, _, _ = _load_dataset(cfg, args.force)
    pairs = [(s.source, s.target) for s in samples]
    labels = [s.label for s in samples]
    X = features.pair_feature_matrix(g, pairs, cfg.variant, cfg.d_cat)
    out_dir = ws / "features"
    out_dir.mkdir(parents=True, exist_ok=True)
    np.save(out_dir / "features.npy", X)
    features.save_feature_table(out_dir / "features.csv", X, labels, pairs, g.asins,
                                cfg.variant, cfg.d_cat)
    write_manifest(
        out_dir, "features",
        inputs={"pairs": str(ws / "dataset" / "pairs.csv")},
        outputs=["features.npy", "features.csv"],
        config=cfg.to_dict(),
        extra={"variant": cfg.variant, "width": int(X.shape[1])},
    )
    print(f"features: {X.shape[0]} x {X.shape[1]} ({cfg.variant})")
    return 0


def stage_train_rf(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    g, samples, _, _ = _load_dataset(cfg, args.force)
    train, test = dataset.split(samples, cfg.train_fraction, seed=cfg.seed)
    X_train = features.pair_feature_matrix(g, [(s.source, s.target) for s in train],
                                           cfg.variant, cfg.d_cat)
    X_test = features.pair_feature_matrix(g, [(s.source, s.target) for s in test],
                                          cfg.variant, cfg.d_cat)
    y_train = np.array([s.label for s in train])
    y_test = np.array([s.label for s in test])
    model = forest.train_forest(X_train, y_train, cfg.forest, seed=cfg.seed,
                                n_jobs=cfg.n_jobs())
    scores = model.predict_proba(X_test)
    cm = evaluation.precision_recall_f1(y_test, scores)
    auc = evaluation.roc_auc(y_test, scores)
    out_dir = ws / "rf"
    forest.save_forest(model, out_dir / "model")
    metrics = {
        "variant": cfg.variant,
        "precision": cm.precision,
        "recall": cm.recall,
        "f1": cm.f1,
        "roc_auc": auc,
        "zero_predicted_positives": cm.zero_predicted_positives,
        "n_train": len(train),
        "n_test": len(test),
        "seed": cfg.seed,
    }
    dump_json(out_dir / "metrics.json", metrics)
    write_manifest(
        out_dir, "train-rf",
        inputs={"pairs": str(ws / "dataset" / "pairs.csv")},
        outputs=["model", "metrics.json"],
        config=cfg.to_dict(), seed=cfg.seed,
    )
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def stage_train_sage(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    g, samples, info, _ = _load_dataset(cfg, args.force)
    train, test = dataset.split(samples, cfg.train_fraction, seed=cfg.seed)
    hyper = sage.SageHyper(**{**cfg.sage.to_dict(), "seed": cfg.seed, "d_cat": cfg.d_cat})
    params, trace = sage.train_sage(g, train, hyper)
    out_dir = ws / "sage"
    sage.save_params(params, hyper, out_dir / "model")
    sage.save_loss_trace(out_dir / "loss_trace.csv", trace)

    # held-out pair metrics with the same per-sample masking used in training
    rng = np.random.default_rng(hyper.seed + 1)
    scores = []
    for s in test:
        view = sage._sample_view(g, s)
        sim_c = features.category_similarity(g.paths(s.source), g.paths(s.target), hyper.d_cat)
        scores.append(sage.score_pair(view, s.source, s.target, params, sim_c,
                                      hyper.neighbor_samples, rng, hyper.proxy_aggregation))
    y_test = np.array([s.label for s in test])
    cm = evaluation.precision_recall_f1(y_test, np.array(scores))
    auc = evaluation.roc_auc(y_test, np.array(scores))
    metrics = {
        "precision": cm.precision, "recall": cm.recall, "f1": cm.f1, "roc_auc": auc,
        "final_loss": trace[-1] if trace else None,
        "n_train": len(train), "n_test": len(test), "seed": cfg.seed,
    }
    dump_json(out_dir / "metrics.json", metrics)
    write_manifest(
        out_dir, "train-sage",
        inputs={"pairs": str(ws / "dataset" / "pairs.csv")},
        outputs=["model", "loss_trace.csv", "metrics.json"],
        config=cfg.to_dict(), seed=cfg.seed,
    )
    print(json.dumps(metrics, indent=2, sort_keys=True))
    return 0


def _build_scorer(cfg: PipelineConfig, ws: Path, model: str, force: bool):
    if model == "random":
        return evaluation.RandomScorer(seed=cfg.seed)
    if model == "rf":
        require_artifact(ws / "rf", "train-rf", force)
        return evaluation.ForestScorer(forest.load_forest(ws / "rf" / "model"),
                                       cfg.variant, cfg.d_cat)
    if model == "sage":
        require_artifact(ws / "sage", "train-sage", force)
        params, hyper = sage.load_params(ws / "sage" / "model")
        return evaluation.SageScorer(params, hyper, seed=cfg.seed)
    raise UsageError(f"unknown model {model!r}; choose rf, sage, or random")


def stage_evaluate(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    lcc = _load_scoped_graph(cfg, "lcc", args.force)
    models = args.model.split(",") if args.model else ["random"]
    out_dir = ws / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for model in models:
        scorer = _build_scorer(cfg, ws, model, args.force)
        report = evaluation.evaluate_protocol(
            lcc, scorer, n=cfg.eval_n, ks=cfg.eval_ks, seed=cfg.seed,
            repeats=cfg.eval_repeats, model_id=model,
        )
        # attach held-out classification metrics when the stage produced them
        metrics_path = ws / {"rf": "rf", "sage": "sage"}.get(model, "") / "metrics.json"
        if model in ("rf", "sage") and metrics_path.exists():
            m = artifacts.load_json(metrics_path)
            report.precision = m.get("precision")
            report.recall = m.get("recall")
            report.f1 = m.get("f1")
            report.roc_auc = m.get("roc_auc")
        (out_dir / f"eval_{model}.json").write_text(report.to_json(), encoding="utf-8")
        evaluation.save_topk_csv(out_dir / f"topk_{model}.csv", report)
        outputs += [f"eval_{model}.json", f"topk_{model}.csv"]
        top5 = f"{report.top5:.4f}" if report.top5 is not None else "n/a"
        print(f"{model}: top5={top5} mrr={report.mrr:.4f} queries={report.n_queries}")
    write_manifest(
        out_dir, "evaluate",
        inputs={"graph": str(ws / "graph" / artifacts.MANIFEST_NAME)},
        outputs=outputs,
        config=cfg.to_dict(), seed=cfg.seed,
        extra={"models": models},
    )
    return 0


def stage_ablate(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    g, samples, _, _ = _load_dataset(cfg, args.force)
    train, test = dataset.split(samples, cfg.train_fraction, seed=cfg.seed)
    variants = args.variants.split(",") if args.variants else list(ABLATION_VARIANTS)
    rows = evaluation.run_ablation(
        g, train, test, variants, d_cat=cfg.d_cat, forest_params=cfg.forest,
        seed=cfg.seed, n_jobs=cfg.n_jobs(),
    )
    out_dir = ws / "ablation"
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.save_ablation_csv(out_dir / "ablation.csv", rows)
    dump_json(
        out_dir / "ablation.json",
        {
            "rows": [
                {"variant": r.variant, "precision": r.precision, "recall": r.recall,
                 "f1": r.f1, "roc_auc": r.roc_auc}
                for r in rows
            ],
            "seed": cfg.seed,
        },
    )
    write_manifest(
        out_dir, "ablate",
        inputs={"pairs": str(ws / "dataset" / "pairs.csv")},
        outputs=["ablation.csv", "ablation.json"],
        config=cfg.to_dict(), seed=cfg.seed,
    )
    for r in rows:
        print(f"{r.variant:>14}: P={r.precision:.4f} R={r.recall:.4f} "
              f"F1={r.f1:.4f} AUC={r.roc_auc:.4f}")
    return 0


def stage_export_viz(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    g = _load_graph(cfg, args.force)
    sub, orig = graph.top_degree_neighborhood(g, k=args.top)
    out_dir = ws / "viz"
    out_dir.mkdir(parents=True, exist_ok=True)
    graph.export_gexf(sub, out_dir / f"top{args.top}.gexf")
    graph.save_edges_csv(sub, out_dir / f"top{args.top}_edges.csv")
    graph.save_node_table_csv(sub, out_dir / f"top{args.top}_nodes.csv")
    write_manifest(
        out_dir, "export-viz",
        inputs={"graph": str(ws / "graph" / artifacts.MANIFEST_NAME)},
        outputs=[f"top{args.top}.gexf", f"top{args.top}_edges.csv", f"top{args.top}_nodes.csv"],
        config=cfg.to_dict(),
        extra={"subgraph": {"nodes": sub.n, "edges": sub.m, "top": args.top}},
    )
    print(f"viz subgraph: {sub.n} nodes, {sub.m} edges -> {out_dir}")
    return 0


def stage_repro_report(cfg: PipelineConfig, args) -> int:
    ws = _ws(cfg)
    wanted = {
        "stats": ws / "stats" / "stats.json",
        "communities": ws / "communities" / "modularity.json",
        "ablate": ws / "ablation" / "ablation.json",
    }
    bundle: dict = {"tool_version": __version__, "config": cfg.to_dict()}
    missing = []
    for stage, path in wanted.items():
        if path.exists():
            bundle[stage] = artifacts.load_json(path)
        else:
            missing.append(stage)
    evals = {}
    eval_dir = ws / "eval"
    if eval_dir.exists():
        for p in sorted(eval_dir.glob("eval_*.json")):
            evals[p.stem.removeprefix("eval_")] = artifacts.load_json(p)
    if evals:
        bundle["evaluate"] = evals
    else:
        missing.append("evaluate")
    if missing and not args.force:
        raise DataError(
            "repro-report needs artifacts from stage(s): " + ", ".join(missing)
            + " (run them first, or use --force for a partial report)"
        )
    out_dir = ws / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(out_dir / "repro_report.json", bundle)
    (out_dir / "repro_report.md").write_text(_report_markdown(bundle), encoding="utf-8")
    write_manifest(
        out_dir, "repro-report",
        outputs=["repro_report.json", "repro_report.md"],
        config=cfg.to_dict(),
        extra={"missing": missing},
    )
    print(f"report -> {out_dir / 'repro_report.md'}" + (f" (missing: {missing})" if missing else ""))
    return 0


def _report_markdown(bundle: dict) -> str:
    lines = ["# Pipeline reproduction report", ""]
    stats = bundle.get("stats")
    if stats:
        lines += [
            "## Graph statistics", "",
            "| quantity | value |", "| --- | --- |",
            f"| nodes | {stats['nodes']} |",
            f"| edges | {stats['edges']} |",
            f"| isolated nodes | {stats['isolated']} |",
            f"| connected components | {stats['components']} |",
            f"| non-singleton components | {stats['non_singleton_components']} |",
            f"| LCC nodes | {stats['lcc_nodes']} |",
            f"| LCC edges | {stats['lcc_edges']} |",
            f"| group assortativity (LCC) | {stats['assortativity_group_lcc']:.4f} |",
            f"| power-law exponent (CCDF fit) | {stats['power_law']['alpha_ccdf']:.3f} |",
            f"| power-law exponent (Hill) | {stats['power_law']['alpha_hill']:.3f} |",
            "",
        ]
    com = bundle.get("communities")
    if com:
        lines += [
            "## Modularity", "",
            "| score | value |", "| --- | --- |",
            f"| Louvain | {com['louvain']['modularity']:.4f} |",
            f"| by group attribute | {com['by_group_attribute']:.4f} |",
            f"| by category similarity | {com['by_category_similarity']['q']:.4f} |",
            "",
        ]
    abl = bundle.get("ablate")
    if abl:
        lines += ["## Feature ablation (random forest)", "",
                  "| variant | precision | recall | F1 | ROC AUC |",
                  "| --- | --- | --- | --- | --- |"]
        for r in abl["rows"]:
            lines.append(
                f"| {r['variant']} | {r['precision']:.4f} | {r['recall']:.4f} "
                f"| {r['f1']:.4f} | {r['roc_auc']:.4f} |"
            )
        lines.append("")
    evals = bundle.get("evaluate")
    if evals:
        lines += ["## Top-k link recovery", "",
                  "| model | top-5 | MRR | queries |", "| --- | --- | --- | --- |"]
        for model, rep in sorted(evals.items()):
            top5 = f"{rep['top5']:.4f}" if rep.get("top5") is not None else "n/a"
            lines.append(f"| {model} | {top5} | {rep['mrr']:.4f} | {rep['n_queries']} |")
        lines.append("")
    return "\n".join(lines) + "\n"


# -- argument parsing -----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workspace", help="artifact directory (default: ./workspace or $COPURCHASE_WORKSPACE)")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--threads", type=int, help="worker cap for parallel stages (0 = all cores)")
    p.add_argument("--force", action="store_true", help="ignore stale manifest hashes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> _Parser:
    parser = _Parser(prog="copurchase", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    stages = {
        "parse": (stage_parse, "parse the metadata dump into the record store"),
        "build-graph": (stage_build_graph, "build the co-purchase graph from parsed records"),
        "stats": (stage_stats, "graph statistics: components, LCC, assortativity, power law"),
        "communities": (stage_communities, "Louvain partition and modularity scores"),
        "features": (stage_features, "materialize the pair feature table"),
        "make-dataset": (stage_make_dataset, "sample the labeled pair dataset"),
        "train-rf": (stage_train_rf, "train the random-forest baseline"),
        "train-sage": (stage_train_sage, "train the one-hop GraphSAGE model"),
        "evaluate": (stage_evaluate, "run the top-k link-recovery protocol"),
        "ablate": (stage_ablate, "feature-ablation table for the forest"),
        "export-viz": (stage_export_viz, "export the top-degree neighborhood for viewers"),
        "repro-report": (stage_repro_report, "assemble one report from all artifacts"),
    }
    for name, (fn, help_text) in stages.items():
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(func=fn)

    sp = sub.choices
    sp["parse"].add_argument("--input", help="path to amazon-meta[.gz]")
    sp["parse"].add_argument("--on-error", choices=["skip", "raise"], default="skip",
                             help="malformed record policy (default: skip and log)")
    sp["stats"].add_argument("--k-min", type=int, default=1, help="power-law fit lower cutoff")
    for name in ("make-dataset",):
        sp[name].add_argument("--n-pos", type=int)
        sp[name].add_argument("--n-neg", type=int)
        sp[name].add_argument("--negatives", choices=dataset.NEGATIVE_MODES)
    for name in ("features", "train-rf", "train-sage", "evaluate", "ablate"):
        sp[name].add_argument("--variant", choices=sorted(features.VARIANTS))
        sp[name].add_argument("--d-cat", type=int)
    for name in ("train-rf", "train-sage", "ablate"):
        sp[name].add_argument("--train-fraction", type=float)
    sp["train-sage"].add_argument("--epochs", type=int)
    sp["train-sage"].add_argument("--learning-rate", type=float)
    sp["ablate"].add_argument("--variants",
                              help="comma list of feature variants (default: all)")
    sp["evaluate"].add_argument("--model", default="random",
                                help="comma list of rf,sage,random (default: random)")
    sp["evaluate"].add_argument("--eval-n", type=int)
    sp["evaluate"].add_argument("--eval-repeats", type=int)
    sp["export-viz"].add_argument("--top", type=int, default=50,
                                  help="how many highest-degree nodes to seed the subgraph")
    return parser


def _resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {
        "workspace": getattr(args, "workspace", None),
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", None),
        "variant": getattr(args, "variant", None),
        "d_cat": getattr(args, "d_cat", None),
        "n_pos": getattr(args, "n_pos", None),
        "n_neg": getattr(args, "n_neg", None),
        "negatives": getattr(args, "negatives", None),
        "train_fraction": getattr(args, "train_fraction", None),
        "eval_n": getattr(args, "eval_n", None),
        "eval_repeats": getattr(args, "eval_repeats", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "epochs", None) is not None:
        cfg.sage.epochs = args.epochs
    if getattr(args, "learning_rate", None) is not None:
        cfg.sage.learning_rate = args.learning_rate
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if getattr(args, "verbose", False):
            logging.getLogger().setLevel(logging.INFO)
        cfg = _resolve_config(args)
        return args.func(cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, metadata.MetadataParseError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
