"""Desk-scale analysis of biased neighbor-selection strategies.

Node similarity combines a cosine property kernel with a Jaccard
neighborhood kernel through a convex mix. Selection strategies are
row-stochastic matrices supported exactly on the out-adjacency; the
biased strategy delegates its rows to the sampler so the analyzed
probabilities are the sampled ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterAssignment, kmeans, normalize_rows
from .errors import DataError
from .evaluation import f1_scores
from .graph import PropertyGraph, split_nodes
from .sampler import BiasConfig, bias_probabilities
from .seeds import derive_seed
from .trainer import TrainConfig, embed_nodes, predict_labels, train

__all__ = [
    "SimilarityModel",
    "StrategyMatrix",
    "similarity",
    "pairwise_similarity",
    "strategy_unbiased",
    "strategy_biased",
    "expected_step_similarity",
    "step_similarity_report",
    "within_cluster_gap",
    "l1_strategy_distance",
    "fit_bias_to_target",
    "bias_sweep",
    "write_sweep_csv",
]


@dataclass
class SimilarityModel:
    """Convex mix of cosine property similarity and Jaccard topology similarity."""

    alpha: float = 0.5
    property_kernel: str = "cosine"
    topology_kernel: str = "jaccard"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DataError("alpha must lie in [0, 1]")
        if self.property_kernel != "cosine" or self.topology_kernel != "jaccard":
            raise DataError("unsupported kernel")


def _cosine(p: np.ndarray, u: int, v: int) -> float:
    nu, nv = np.linalg.norm(p[u]), np.linalg.norm(p[v])
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(p[u] @ p[v] / (nu * nv))


def _jaccard(g: PropertyGraph, u: int, v: int) -> float:
    su = set(g.out_row(u).tolist())
    sv = set(g.out_row(v).tolist())
    union = len(su | sv)
    return len(su & sv) / union if union else 0.0


def similarity(model: SimilarityModel, g: PropertyGraph, u: int, v: int) -> float:
    """Symmetric node similarity in [0, 1] (cosine clipped at 0)."""
    if not (0 <= u < g.n_nodes and 0 <= v < g.n_nodes):
        raise DataError("node id out of range")
    s_p = max(0.0, _cosine(g.node_props, u, v))
    s_t = _jaccard(g, u, v)
    return model.alpha * s_p + (1.0 - model.alpha) * s_t


def pairwise_similarity(model: SimilarityModel, g: PropertyGraph) -> np.ndarray:
    """Dense n-by-n similarity matrix (desk-scale graphs only)."""
    unit = normalize_rows(g.node_props)
    cos = np.maximum(unit @ unit.T, 0.0)
    adj = np.zeros((g.n_nodes, g.n_nodes), dtype=bool)
    src = g.edge_sources()
    adj[src, g.out_targets] = True
    sizes = adj.sum(axis=1).astype(np.float64)
    inter = (adj.astype(np.float64) @ adj.T.astype(np.float64))
    union = sizes[:, None] + sizes[None, :] - inter
    jac = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)
    return model.alpha * cos + (1.0 - model.alpha) * jac


@dataclass
class StrategyMatrix:
    """Row-stochastic neighbor-selection probabilities on the out-adjacency."""

    offsets: np.ndarray
    targets: np.ndarray
    probs: np.ndarray
    n_nodes: int = field(init=False)

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        self.targets = np.asarray(self.targets)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.n_nodes = len(self.offsets) - 1
        if len(self.probs) != len(self.targets):
            raise DataError("one probability per adjacency slot required")
        if np.any(self.probs < 0):
            raise DataError("strategy probabilities must be nonnegative")
        deg = np.diff(self.offsets)
        sums = np.zeros(self.n_nodes)
        np.add.at(sums, np.repeat(np.arange(self.n_nodes), deg), self.probs)
        if np.any(np.abs(sums[deg > 0] - 1.0) > 1e-12):
            raise DataError("non-isolated strategy rows must sum to 1")

    def row(self, v: int) -> np.ndarray:
        return self.probs[self.offsets[v]:self.offsets[v + 1]]

    def same_support(self, other: "StrategyMatrix") -> bool:
        return (np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.targets, other.targets))


def strategy_unbiased(g: PropertyGraph) -> StrategyMatrix:
    """Uniform selection over each node's out-neighbors."""
    deg = g.out_degrees
    probs = 1.0 / np.repeat(np.maximum(deg, 1), deg).astype(np.float64)
    return StrategyMatrix(offsets=g.out_offsets, targets=g.out_targets,
                          probs=probs)


def strategy_biased(g: PropertyGraph, clusters: ClusterAssignment,
                    cfg: BiasConfig) -> StrategyMatrix:
    """Rows are the sampler's normalized biases (same code path)."""
    return StrategyMatrix(offsets=g.out_offsets, targets=g.out_targets,
                          probs=bias_probabilities(g, clusters, cfg))


def expected_step_similarity(strategy: StrategyMatrix,
                             model: SimilarityModel,
                             g: PropertyGraph) -> float:
    """Per-step expected similarity of a (node, selected neighbor) pair.

    Averages the strategy-weighted neighbor similarity over all nodes
    with at least one neighbor.
    """
    if not (np.array_equal(strategy.offsets, g.out_offsets)
            and np.array_equal(strategy.targets, g.out_targets)):
        raise DataError("strategy support does not match graph adjacency")
    sims = pairwise_similarity(model, g)
    src = g.edge_sources()
    per_edge = strategy.probs * sims[src, g.out_targets]
    n_live = int((g.out_degrees > 0).sum())
    if n_live == 0:
        return 0.0
    return float(per_edge.sum() / n_live)


def step_similarity_report(g: PropertyGraph, clusters: ClusterAssignment,
                           cfg: BiasConfig, model: SimilarityModel) -> dict:
    """Cluster-partitioned decomposition of the step similarity.

    Reproduces the two-term report form (same-cluster term over |E|/k,
    cross-cluster term over |E|(k-1)/k) next to the implementable
    per-step expectation used everywhere else.
    """
    sims = pairwise_similarity(model, g)
    probs = bias_probabilities(g, clusters, cfg)
    src = g.edge_sources()
    same = clusters.assignment[src] == clusters.assignment[g.out_targets]
    weighted = probs * sims[src, g.out_targets]
    k = clusters.k
    e = g.n_edges
    term_same = float(weighted[same].sum() / (e / k))
    term_diff = (float(weighted[~same].sum() / (e * (k - 1) / k))
                 if k > 1 else 0.0)
    strategy = StrategyMatrix(g.out_offsets, g.out_targets, probs)
    return {
        "same_cluster_term": term_same,
        "cross_cluster_term": term_diff,
        "partitioned_total": term_same + term_diff,
        "per_step_expectation": expected_step_similarity(strategy, model, g),
    }


def within_cluster_gap(g: PropertyGraph, clusters: ClusterAssignment,
                       model: SimilarityModel) -> tuple[float, float]:
    """Mean similarity over same-cluster pairs vs over all pairs."""
    if clusters.k < 2:
        raise DataError("need at least two clusters")
    sims = pairwise_similarity(model, g)
    n = g.n_nodes
    iu = np.triu_indices(n, k=1)
    total_pairs = len(iu[0])
    if total_pairs == 0:
        raise DataError("need at least two nodes")
    same = clusters.assignment[iu[0]] == clusters.assignment[iu[1]]
    n_within = int(same.sum())
    if n_within == 0:
        raise DataError("no same-cluster pair (singleton-only clustering)")
    within = float(sims[iu][same].sum() / n_within)
    overall = float(sims[iu].sum() / total_pairs)
    return within, overall


def l1_strategy_distance(a: StrategyMatrix, b: StrategyMatrix) -> float:
    """Entrywise L1 distance between strategies on a shared support."""
    if not a.same_support(b):
        raise DataError("strategies live on different supports")
    return float(np.abs(a.probs - b.probs).sum())


def fit_bias_to_target(g: PropertyGraph, clusters: ClusterAssignment,
                       target: StrategyMatrix, bd_grid,
                       b_s: float = 1.0):
    """Grid-search b_d minimizing the L1 distance to a target strategy.

    Returns (best_b_d, [(b_d, distance), ...]).
    """
    bd_grid = list(bd_grid)
    if not bd_grid:
        raise DataError("empty b_d grid")
    curve = []
    for b_d in bd_grid:
        cand = strategy_biased(g, clusters, BiasConfig(b_s=b_s, b_d=float(b_d)))
        curve.append((float(b_d), l1_strategy_distance(target, cand)))
    best = min(curve, key=lambda item: item[1])
    return best[0], curve


def bias_sweep(g: PropertyGraph, k_grid, bd_grid, epochs: int = 10,
               seeds=(0,), sample_size: int = 25, hidden_dim: int = 64,
               batch_size: int = 512, learning_rate: float = 0.01):
    """Grid of (k, b_d, seed) -> node-classification F1 on the test split.

    Each cell re-clusters with k-means(k), trains the plain encoder for
    ``epochs`` epochs, and scores F1 on held-out nodes.
    """
    if g.node_labels is None:
        raise DataError("bias sweep needs node labels")
    k_grid, bd_grid, seeds = list(k_grid), list(bd_grid), list(seeds)
    if not k_grid or not bd_grid or not seeds:
        raise DataError("grids and seeds must be nonempty")
    unit = normalize_rows(g.node_props)
    multi = bool(np.any(g.node_labels.sum(axis=1) > 1))
    rows = []
    for seed in seeds:
        split = split_nodes(g, (0.7, 0.1, 0.2), seed=derive_seed(seed, "split"))
        for k in k_grid:
            clusters = kmeans(unit, k, seed=derive_seed(seed, "cluster", k))
            for b_d in bd_grid:
                bias = BiasConfig(b_s=1.0, b_d=float(b_d),
                                  sample_size=sample_size,
                                  seed=derive_seed(seed, "bias", k, b_d))
                cfg = TrainConfig(task="node_class", epochs=epochs,
                                  seed=derive_seed(seed, "train", k, b_d),
                                  hidden_dim=hidden_dim,
                                  batch_size=batch_size,
                                  learning_rate=learning_rate)
                params, _ = train(g, clusters, None, cfg, bias, split)
                emb = embed_nodes(g, clusters, params, bias, nodes=split.test)
                micro, macro = f1_scores(predict_labels(emb, multi),
                                         g.node_labels[split.test])
                rows.append({"k": k, "b_d": float(b_d), "seed": seed,
                             "f1_micro": micro, "f1_macro": macro})
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["k", "b_d", "seed", "f1_micro", "f1_macro"])
        writer.writeheader()
        writer.writerows(rows)
