"""End-to-end runs: cluster, sample, train, evaluate, with a manifest.

A run is described by a flat ``key=value`` config (file or dict). Every
stage seed derives from the single global seed by stable hashing, the
resolved config is hashed into every manifest line, and outputs carry no
timestamps, so re-running a config reproduces every artifact byte for
byte. Each written artifact is re-parsed once as a self-check.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import trainer as tr
from .analysis import bias_sweep, write_sweep_csv
from .clustering import cluster_edges, cluster_nodes, export_assignment
from .encoder import save_params
from .errors import ConfigError, DataError
from .evaluation import Metrics, build_link_queries, f1_scores, mrr, \
    rank_link_queries
from .graph import load_graph, save_id_map, split_nodes
from .sampler import BiasConfig
from .seeds import derive_seed
from .synthetic import EDGE_SIGN_INTRA_POSITIVE, SyntheticSpec, \
    generate_synthetic

__all__ = ["RunConfig", "parse_config_file", "run_pipeline", "config_hash"]

_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


@dataclass
class RunConfig:
    task: str = "node_class"
    # input: either synthetic generation or files
    synthetic: bool = True
    n_nodes: int = 2000
    n_communities: int = 10
    intra_edge_prob: float = 0.02
    inter_edge_prob: float = 0.002
    property_dim: int = 32
    blob_separation: float = 3.0
    edge_signs: bool = False
    nodes: str | None = None
    edges: str | None = None
    labels: str | None = None
    directed: bool = False
    # clustering
    cluster_method: str = "auto"
    k: int | None = None
    eps: float | None = None
    min_pts: int = 4
    # edge-aware encoding
    edge_info: bool = False
    k_e: int = 2
    split_by_direction: bool = False
    # sampling biases
    b_s: float = 1.0
    b_d: float = 1000.0
    sample_size: int = 25
    unbiased: bool = False
    # training
    learning_rate: float = 0.01
    epochs: int | None = None
    batch_size: int = 512
    neg_samples: int = 20
    hidden_dim: int = 128
    out_dim: int | None = None
    resample_per_epoch: bool = True
    # split and bookkeeping
    train_ratio: float = 0.7
    val_ratio: float = 0.1
    test_ratio: float = 0.2
    seed: int = 0
    out_dir: str = "run"

    def validate(self):
        if self.task not in ("node_class", "link_pred"):
            raise ConfigError(f"unknown task {self.task!r}")
        if not self.synthetic:
            for name in ("nodes", "edges"):
                path = getattr(self, name)
                if path is None:
                    raise ConfigError(f"file input needs the {name!r} path")
                if not Path(path).exists():
                    raise ConfigError(f"{name} file not found: {path}")
            if self.labels is not None and not Path(self.labels).exists():
                raise ConfigError(f"label file not found: {self.labels}")
        if abs(self.train_ratio + self.val_ratio + self.test_ratio - 1) > 1e-9:
            raise ConfigError("split ratios must sum to 1")
        if self.cluster_method not in ("auto", "kmeans", "dbscan"):
            raise ConfigError(f"unknown cluster_method {self.cluster_method!r}")


def _coerce(name: str, kind, text: str):
    text = text.strip()
    if kind == bool or (kind is not None and "bool" in str(kind)):
        if text.lower() not in _BOOL:
            raise ConfigError(f"{name}: expected a boolean, got {text!r}")
        return _BOOL[text.lower()]
    if text.lower() in ("none", ""):
        return None
    try:
        if kind == int or "int" in str(kind):
            return int(text)
        if kind == float or "float" in str(kind):
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: bad value {text!r}") from None
    return text


def config_from_dict(raw: dict[str, str]) -> RunConfig:
    known = {f.name: f.type for f in fields(RunConfig)}
    cfg = RunConfig()
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, known[key], str(value)))
    cfg.validate()
    return cfg


def parse_config_file(path) -> RunConfig:
    """Read a flat ``key=value`` config file (``#`` comments allowed)."""
    raw: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        raw[key.strip()] = value.strip()
    return config_from_dict(raw)


def config_hash(cfg: RunConfig) -> str:
    text = "\n".join(f"{k}={v}" for k, v in sorted(asdict(cfg).items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _checksum(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


class _Manifest:
    def __init__(self, path: Path, cfg: RunConfig):
        self.path = path
        self.hash = config_hash(cfg)
        self.seed = cfg.seed
        path.write_text(json.dumps(
            {"stage": "config", "config_hash": self.hash,
             "config": asdict(cfg)}, sort_keys=True) + "\n", encoding="utf-8")

    def record(self, stage: str, output: Path):
        line = json.dumps(
            {"stage": stage, "config_hash": self.hash, "seed": self.seed,
             "output_path": output.name, "checksum": _checksum(output)},
            sort_keys=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def record_failure(self, stage: str, error: Exception):
        line = json.dumps(
            {"stage": stage, "config_hash": self.hash, "seed": self.seed,
             "status": "incomplete", "error": str(error)}, sort_keys=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def _validate_tsv(path: Path, n_fields: int | None = None,
                  numeric_from: int | None = None):
    for lineno, line in enumerate(path.read_text(encoding="utf-8")
                                  .splitlines(), 1):
        parts = line.split("\t")
        if n_fields is not None and len(parts) != n_fields:
            raise DataError(f"{path}:{lineno}: bad field count")
        if numeric_from is not None:
            for token in parts[numeric_from:]:
                float(token)


def _validate_csv_loss(path: Path):
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "epoch,loss":
        raise DataError(f"{path}: bad loss CSV header")
    for line in lines[1:]:
        epoch, loss = line.split(",")
        int(epoch), float(loss)


def _validate_jsonl(path: Path):
    for line in path.read_text(encoding="utf-8").splitlines():
        json.loads(line)


def _write_embeddings(path: Path, g, emb: np.ndarray):
    with open(path, "w", encoding="utf-8") as fh:
        for v in range(len(emb)):
            vals = "\t".join(repr(float(x)) for x in emb[v])
            fh.write(f"{g.node_ids[v]}\t{vals}\n")


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute cluster -> sample/train -> evaluate; returns artifact paths."""
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(out_dir / "manifest.jsonl", cfg)
    result = {"out_dir": str(out_dir), "config_hash": manifest.hash}

    def run_stage(name, fn):
        try:
            return fn()
        except Exception as exc:
            manifest.record_failure(name, exc)
            raise type(exc)(f"stage {name!r} failed: {exc}") from exc

    # --- load -------------------------------------------------------------
    def load():
        if cfg.synthetic:
            spec = SyntheticSpec(
                n_nodes=cfg.n_nodes, n_communities=cfg.n_communities,
                intra_edge_prob=cfg.intra_edge_prob,
                inter_edge_prob=cfg.inter_edge_prob,
                property_dim=cfg.property_dim,
                blob_separation=cfg.blob_separation,
                edge_sign_rule=(EDGE_SIGN_INTRA_POSITIVE if cfg.edge_signs
                                else None))
            return generate_synthetic(spec, derive_seed(cfg.seed, "graph"))
        return load_graph(cfg.nodes, cfg.edges, cfg.labels,
                          directed=cfg.directed)

    g = run_stage("load", load)
    id_map = out_dir / "id_map.tsv"
    save_id_map(g, id_map)
    _validate_tsv(id_map, n_fields=2)
    manifest.record("load", id_map)

    # --- cluster ----------------------------------------------------------
    def cluster():
        c = cluster_nodes(g, method=cfg.cluster_method, k=cfg.k, eps=cfg.eps,
                          min_pts=cfg.min_pts,
                          seed=derive_seed(cfg.seed, "cluster"))
        ec = None
        if cfg.edge_info:
            ec = cluster_edges(g, cfg.k_e,
                               seed=derive_seed(cfg.seed, "edge_cluster"),
                               split_by_direction=cfg.split_by_direction)
        return c, ec

    clusters, eclusters = run_stage("cluster", cluster)
    cluster_path = out_dir / "clusters.tsv"
    export_assignment(clusters.assignment, g, cluster_path)
    _validate_tsv(cluster_path, n_fields=2)
    manifest.record("cluster", cluster_path)

    # --- train ------------------------------------------------------------
    bias = BiasConfig(b_s=cfg.b_s,
                      b_d=cfg.b_s if cfg.unbiased else cfg.b_d,
                      sample_size=cfg.sample_size,
                      seed=derive_seed(cfg.seed, "sample"))
    train_cfg = tr.TrainConfig(
        task=cfg.task, learning_rate=cfg.learning_rate, epochs=cfg.epochs,
        batch_size=cfg.batch_size, neg_samples=cfg.neg_samples,
        seed=derive_seed(cfg.seed, "train"), hidden_dim=cfg.hidden_dim,
        out_dim=cfg.out_dim, resample_per_epoch=cfg.resample_per_epoch)
    split = split_nodes(g, (cfg.train_ratio, cfg.val_ratio, cfg.test_ratio),
                        seed=derive_seed(cfg.seed, "split"))

    def run_train():
        return tr.train(g, clusters, eclusters, train_cfg, bias, split)

    params, history = run_stage("train", run_train)
    loss_path = out_dir / "loss.csv"
    with open(loss_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(history):
            fh.write(f"{epoch},{repr(float(loss))}\n")
    _validate_csv_loss(loss_path)
    manifest.record("train", loss_path)
    params_path = out_dir / "params.bin"
    save_params(params, params_path)
    manifest.record("train", params_path)

    # --- evaluate ---------------------------------------------------------
    def evaluate():
        eval_bias = BiasConfig(b_s=bias.b_s, b_d=bias.b_d,
                               sample_size=cfg.sample_size,
                               seed=derive_seed(cfg.seed, "eval_sample"))
        emb = tr.embed_nodes(g, clusters, params, eval_bias, ec=eclusters,
                             normalize=cfg.task == "link_pred")
        if cfg.task == "node_class":
            multi = bool(np.any(g.node_labels.sum(axis=1) > 1))
            pred = tr.predict_labels(emb[split.test], multi)
            micro, macro = f1_scores(pred, g.node_labels[split.test])
            metrics = Metrics(f1_micro=micro, f1_macro=macro,
                              n_evaluated=len(split.test))
        else:
            _, _, test_pairs = tr.edge_split(
                g, derive_seed(train_cfg.seed, "edges"))
            queries = build_link_queries(
                g, test_pairs, seed=derive_seed(cfg.seed, "queries"))
            ranks = rank_link_queries(emb, queries)
            metrics = Metrics(mrr=mrr(ranks), n_evaluated=len(ranks))
        return emb, metrics

    emb, metrics = run_stage("eval", evaluate)
    emb_path = out_dir / "embeddings.tsv"
    _write_embeddings(emb_path, g, emb)
    _validate_tsv(emb_path, n_fields=1 + emb.shape[1], numeric_from=1)
    manifest.record("eval", emb_path)
    metrics_path = out_dir / "metrics.jsonl"
    metrics_path.write_text(
        metrics.to_json_line(task=cfg.task, seed=cfg.seed,
                             config_hash=manifest.hash) + "\n",
        encoding="utf-8")
    _validate_jsonl(metrics_path)
    manifest.record("eval", metrics_path)

    result.update(metrics=vars(metrics), loss=history,
                  embeddings=str(emb_path), metrics_path=str(metrics_path))
    return result


def run_bias_sweep(cfg: RunConfig, k_grid, bd_grid, epochs: int,
                   seeds, out_path) -> list[dict]:
    """Generate/load the graph from ``cfg`` and write a sweep CSV."""
    cfg.validate()
    if cfg.synthetic:
        spec = SyntheticSpec(
            n_nodes=cfg.n_nodes, n_communities=cfg.n_communities,
            intra_edge_prob=cfg.intra_edge_prob,
            inter_edge_prob=cfg.inter_edge_prob,
            property_dim=cfg.property_dim,
            blob_separation=cfg.blob_separation)
        g = generate_synthetic(spec, derive_seed(cfg.seed, "graph"))
    else:
        g = load_graph(cfg.nodes, cfg.edges, cfg.labels,
                       directed=cfg.directed)
    rows = bias_sweep(g, k_grid, bd_grid, epochs=epochs, seeds=seeds,
                      sample_size=cfg.sample_size,
                      hidden_dim=cfg.hidden_dim,
                      batch_size=cfg.batch_size,
                      learning_rate=cfg.learning_rate)
    write_sweep_csv(rows, out_path)
    return rows
