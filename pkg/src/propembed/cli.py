"""Command-line surface: generate, cluster, sample, train, eval,
analyze-bias, and the full pipeline.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. ``--threads`` caps worker pools globally (set before numpy is
imported); results are independent of the setting.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propembed",
        description="Property-graph embedding toolkit")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (results are identical "
                             "for any value)")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic planted "
                                          "property graph as TSV files")
    gen.add_argument("--out-dir", required=True)
    gen.add_argument("--n-nodes", type=int, default=2000)
    gen.add_argument("--communities", type=int, default=10)
    gen.add_argument("--intra", type=float, default=0.02)
    gen.add_argument("--inter", type=float, default=0.002)
    gen.add_argument("--dim", type=int, default=32)
    gen.add_argument("--separation", type=float, default=3.0)
    gen.add_argument("--signed-edges", action="store_true",
                     help="label intra-community edges positive, "
                          "inter-community negative")
    gen.add_argument("--seed", type=int, default=0)

    def add_graph_args(p):
        p.add_argument("--nodes", required=True)
        p.add_argument("--edges", required=True)
        p.add_argument("--labels", default=None)
        p.add_argument("--directed", action="store_true")

    def add_cluster_args(p):
        p.add_argument("--method", default="auto",
                       choices=["auto", "kmeans", "dbscan"])
        p.add_argument("--k", type=int, default=None)
        p.add_argument("--eps", type=float, default=None)
        p.add_argument("--min-pts", type=int, default=4)

    def add_bias_args(p):
        p.add_argument("--b-s", type=float, default=1.0)
        p.add_argument("--b-d", type=float, default=1000.0)
        p.add_argument("--sample-size", type=int, default=25)

    clu = sub.add_parser("cluster", help="cluster nodes by properties")
    add_graph_args(clu)
    add_cluster_args(clu)
    clu.add_argument("--seed", type=int, default=0)
    clu.add_argument("--out", required=True)

    smp = sub.add_parser("sample", help="export a biased two-hop sample")
    add_graph_args(smp)
    add_cluster_args(smp)
    add_bias_args(smp)
    smp.add_argument("--seed", type=int, default=0)
    smp.add_argument("--out", required=True)

    trn = sub.add_parser("train", help="train encoder parameters")
    add_graph_args(trn)
    add_cluster_args(trn)
    add_bias_args(trn)
    trn.add_argument("--task", default="node_class",
                     choices=["node_class", "link_pred"])
    trn.add_argument("--edge-info", action="store_true")
    trn.add_argument("--k-e", type=int, default=2)
    trn.add_argument("--epochs", type=int, default=None)
    trn.add_argument("--learning-rate", type=float, default=0.01)
    trn.add_argument("--batch-size", type=int, default=512)
    trn.add_argument("--hidden-dim", type=int, default=128)
    trn.add_argument("--seed", type=int, default=0)
    trn.add_argument("--out-dir", required=True)

    evl = sub.add_parser("eval", help="score trained parameters")
    add_graph_args(evl)
    add_cluster_args(evl)
    add_bias_args(evl)
    evl.add_argument("--task", default="node_class",
                     choices=["node_class", "link_pred"])
    evl.add_argument("--edge-info", action="store_true")
    evl.add_argument("--k-e", type=int, default=2)
    evl.add_argument("--params", required=True)
    evl.add_argument("--seed", type=int, default=0)
    evl.add_argument("--out", default=None)

    ana = sub.add_parser("analyze-bias",
                         help="(k, b_d) grid sweep of classification F1")
    ana.add_argument("--config", default=None)
    ana.add_argument("--k-grid", required=True,
                     help="comma-separated cluster counts")
    ana.add_argument("--bd-grid", required=True,
                     help="comma-separated b_d values")
    ana.add_argument("--epochs", type=int, default=10)
    ana.add_argument("--seeds", default="0", help="comma-separated seeds")
    ana.add_argument("--out", required=True)

    pipe = sub.add_parser("pipeline", help="run the full pipeline")
    pipe.add_argument("--config", default=None)
    pipe.add_argument("--from-manifest", default=None,
                      help="re-run with the config stored in a manifest")
    pipe.add_argument("--set", action="append", default=[],
                      metavar="KEY=VALUE", help="override a config key")
    pipe.add_argument("--out-dir", default=None)
    pipe.add_argument("--seed", type=int, default=None)
    pipe.add_argument("--unbiased", action="store_true",
                      help="force b_d = b_s (ablation)")
    pipe.add_argument("--no-edge-info", action="store_true",
                      help="ignore edge clusters (ablation)")
    pipe.add_argument("--resample-per-epoch", dest="resample",
                      default=None, choices=["true", "false"])
    return parser


def _cmd_generate(args):
    from .graph import save_edges
    from .synthetic import EDGE_SIGN_INTRA_POSITIVE, SyntheticSpec, \
        generate_synthetic
    from pathlib import Path

    spec = SyntheticSpec(
        n_nodes=args.n_nodes, n_communities=args.communities,
        intra_edge_prob=args.intra, inter_edge_prob=args.inter,
        property_dim=args.dim, blob_separation=args.separation,
        edge_sign_rule=(EDGE_SIGN_INTRA_POSITIVE if args.signed_edges
                        else None))
    g = generate_synthetic(spec, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "nodes.tsv", "w", encoding="utf-8") as fh:
        for v in range(g.n_nodes):
            vals = ",".join(repr(float(x)) for x in g.node_props[v])
            fh.write(f"{g.node_ids[v]}\t{vals}\n")
    save_edges(g, out / "edges.tsv")
    with open(out / "labels.tsv", "w", encoding="utf-8") as fh:
        for v in range(g.n_nodes):
            idxs = ",".join(str(i) for i in g.node_labels[v].nonzero()[0])
            fh.write(f"{g.node_ids[v]}\t{idxs}\n")
    print(f"wrote {g.n_nodes} nodes, {g.n_edges} edge slots to {out}")
    return 0


def _load(args):
    from .graph import load_graph
    return load_graph(args.nodes, args.edges, getattr(args, "labels", None),
                      directed=args.directed)


def _cluster(args, g):
    from .clustering import cluster_nodes
    return cluster_nodes(g, method=args.method, k=args.k, eps=args.eps,
                         min_pts=args.min_pts, seed=args.seed)


def _cmd_cluster(args):
    from .clustering import export_assignment
    g = _load(args)
    clusters = _cluster(args, g)
    export_assignment(clusters.assignment, g, args.out)
    print(f"{clusters.method}: k={clusters.k} -> {args.out}")
    return 0


def _cmd_sample(args):
    from .sampler import BiasConfig, export_sampled_tsv, sample_neighborhood
    g = _load(args)
    clusters = _cluster(args, g)
    cfg = BiasConfig(b_s=args.b_s, b_d=args.b_d,
                     sample_size=args.sample_size, seed=args.seed)
    sampled = sample_neighborhood(g, clusters, cfg)
    export_sampled_tsv(sampled, g, args.out)
    print(f"sampled {g.n_nodes} nodes -> {args.out}")
    return 0


def _cmd_train(args):
    from pathlib import Path

    from . import trainer as tr
    from .clustering import cluster_edges
    from .encoder import save_params
    from .graph import split_nodes
    from .sampler import BiasConfig
    from .seeds import derive_seed

    g = _load(args)
    clusters = _cluster(args, g)
    eclusters = cluster_edges(g, args.k_e, seed=args.seed) \
        if args.edge_info else None
    bias = BiasConfig(b_s=args.b_s, b_d=args.b_d,
                      sample_size=args.sample_size,
                      seed=derive_seed(args.seed, "sample"))
    cfg = tr.TrainConfig(task=args.task, learning_rate=args.learning_rate,
                         epochs=args.epochs, batch_size=args.batch_size,
                         hidden_dim=args.hidden_dim,
                         seed=derive_seed(args.seed, "train"))
    split = split_nodes(g, (0.7, 0.1, 0.2), seed=derive_seed(args.seed, "split"))
    params, history = tr.train(g, clusters, eclusters, cfg, bias, split)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_params(params, out / "params.bin")
    with open(out / "loss.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(history):
            fh.write(f"{epoch},{repr(float(loss))}\n")
    print(f"final loss {history[-1]:.6f} -> {out}")
    return 0


def _cmd_eval(args):
    import numpy as np

    from . import trainer as tr
    from .clustering import cluster_edges
    from .encoder import load_params
    from .evaluation import Metrics, build_link_queries, f1_scores, mrr, \
        rank_link_queries
    from .graph import split_nodes
    from .sampler import BiasConfig
    from .seeds import derive_seed

    g = _load(args)
    clusters = _cluster(args, g)
    eclusters = cluster_edges(g, args.k_e, seed=args.seed) \
        if args.edge_info else None
    params = load_params(args.params)
    bias = BiasConfig(b_s=args.b_s, b_d=args.b_d,
                      sample_size=args.sample_size,
                      seed=derive_seed(args.seed, "eval_sample"))
    emb = tr.embed_nodes(g, clusters, params, bias, ec=eclusters,
                         normalize=args.task == "link_pred")
    if args.task == "node_class":
        split = split_nodes(g, (0.7, 0.1, 0.2),
                            seed=derive_seed(args.seed, "split"))
        multi = bool(np.any(g.node_labels.sum(axis=1) > 1))
        pred = tr.predict_labels(emb[split.test], multi)
        micro, macro = f1_scores(pred, g.node_labels[split.test])
        metrics = Metrics(f1_micro=micro, f1_macro=macro,
                          n_evaluated=len(split.test))
    else:
        _, _, test_pairs = tr.edge_split(
            g, derive_seed(derive_seed(args.seed, "train"), "edges"))
        queries = build_link_queries(g, test_pairs,
                                     seed=derive_seed(args.seed, "queries"))
        metrics = Metrics(mrr=mrr(rank_link_queries(emb, queries)),
                          n_evaluated=len(queries))
    line = metrics.to_json_line(task=args.task, seed=args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(line + "\n")
    print(line)
    return 0


def _cmd_analyze_bias(args):
    from .pipeline import RunConfig, parse_config_file, run_bias_sweep
    cfg = parse_config_file(args.config) if args.config else RunConfig()
    k_grid = [int(t) for t in args.k_grid.split(",")]
    bd_grid = [float(t) for t in args.bd_grid.split(",")]
    seeds = [int(t) for t in args.seeds.split(",")]
    rows = run_bias_sweep(cfg, k_grid, bd_grid, args.epochs, seeds, args.out)
    print(f"wrote {len(rows)} sweep rows -> {args.out}")
    return 0


def _cmd_pipeline(args):
    from .errors import ConfigError
    from .pipeline import RunConfig, config_from_dict, parse_config_file, \
        run_pipeline
    from dataclasses import asdict

    if args.from_manifest:
        first = open(args.from_manifest, encoding="utf-8").readline()
        stored = json.loads(first)
        if stored.get("stage") != "config":
            raise ConfigError("manifest does not start with a config record")
        raw = {k: ("" if v is None else str(v))
               for k, v in stored["config"].items()}
        cfg = config_from_dict(raw)
    elif args.config:
        cfg = parse_config_file(args.config)
    else:
        cfg = RunConfig()
    overrides = dict(asdict(cfg))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    cfg = config_from_dict({k: ("" if v is None else str(v))
                            for k, v in overrides.items()})
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    if args.seed is not None:
        cfg.seed = args.seed
    if args.unbiased:
        cfg.unbiased = True
    if args.no_edge_info:
        cfg.edge_info = False
    if args.resample is not None:
        cfg.resample_per_epoch = args.resample == "true"
    result = run_pipeline(cfg)
    print(json.dumps(result["metrics"], sort_keys=True))
    print(f"artifacts in {result['out_dir']}")
    return 0


_HANDLERS = {
    "generate": _cmd_generate,
    "cluster": _cmd_cluster,
    "sample": _cmd_sample,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "analyze-bias": _cmd_analyze_bias,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .errors import ConfigError, DataError, NumericError
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
