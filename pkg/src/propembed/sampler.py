"""Biased fixed-size two-hop neighborhood sampling (pipeline step 2).

Each neighbor of a node gets bias b_s when it shares the node's property
cluster and b_d otherwise; normalized biases are the per-neighbor
selection probabilities, and ``sample_size`` neighbors are drawn i.i.d.
with replacement per hop. Draws come from a counter-based generator
keyed by (seed, node, hop, slot), so results are bit-identical no matter
how the work is scheduled, and a node's sample row does not depend on
which other nodes were sampled.

Undirected graphs sample from the stored adjacency; directed graphs
sample from the union of out- and in-neighbors (an in-traversal records
the virtual slot ``n_edges + e`` so edge-cluster lookups can tell the
two roles apart). Nodes without neighbors fall back to sampling
themselves, with edge slot -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterAssignment
from .errors import DataError
from .graph import PropertyGraph

__all__ = [
    "BiasConfig",
    "SampledGraph",
    "assign_biases",
    "normalize_biases",
    "bias_probabilities",
    "sample_neighborhood",
    "counter_uniforms",
    "export_sampled_tsv",
]

SELF_SLOT = -1

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = 0xFFFFFFFFFFFFFFFF


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


def counter_uniforms(seed: int, node, hop: int, slot) -> np.ndarray:
    """Uniform [0,1) floats keyed by (seed, node, hop, slot), broadcast."""
    node = np.asarray(node, dtype=np.uint64)
    slot = np.asarray(slot, dtype=np.uint64)
    with np.errstate(over="ignore"):  # modular 64-bit mixing is intended
        x = _mix64(np.uint64(seed & _MASK) + _GAMMA)
        x = _mix64(x ^ (node * _GAMMA + _GAMMA))
        x = _mix64(x ^ (np.uint64(hop & _MASK) + _GAMMA))
        x = _mix64(x ^ (slot * _GAMMA + _GAMMA))
    return (x >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


@dataclass
class BiasConfig:
    """Bias parameters for neighborhood sampling."""

    b_s: float = 1.0
    b_d: float = 1000.0
    sample_size: int = 25
    hops: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.b_s <= 0 or self.b_d <= 0:
            raise DataError("biases must be positive")
        if self.sample_size < 1:
            raise DataError("sample_size must be >= 1")
        if self.hops != 2:
            raise DataError("only two-hop sampling is supported")


@dataclass
class SampledGraph:
    """Fixed-size biased neighbor samples for a set of nodes.

    ``hop1[r, j]`` is the j-th sampled neighbor of ``nodes[r]`` and
    ``hop2[r, j, t]`` the t-th sampled neighbor of that occurrence;
    ``eslot1``/``eslot2`` hold the matching edge slots (virtual in-slots
    are >= n_edges, self-fallback is -1).
    """

    nodes: np.ndarray
    hop1: np.ndarray
    eslot1: np.ndarray
    hop2: np.ndarray
    eslot2: np.ndarray
    seed: int
    sample_size: int
    n_nodes: int
    n_edges: int

    def rows_for(self, node_ids) -> np.ndarray:
        """Row indices of the given nodes within the sample arrays."""
        node_ids = np.asarray(node_ids)
        if len(self.nodes) == self.n_nodes and \
                np.array_equal(self.nodes, np.arange(self.n_nodes)):
            return node_ids
        lookup = np.full(self.n_nodes, -1, dtype=np.int64)
        lookup[self.nodes] = np.arange(len(self.nodes))
        rows = lookup[node_ids]
        if np.any(rows < 0):
            raise DataError("node not present in this sample")
        return rows


def assign_biases(g: PropertyGraph, clusters: ClusterAssignment,
                  cfg: BiasConfig, v: int) -> np.ndarray:
    """Per-neighbor bias over the out-neighbors of ``v``.

    Every neighbor gets b_d + (b_s - b_d) * [same cluster as v].
    """
    nbrs = g.out_row(v)
    same = (clusters.assignment[nbrs] == clusters.assignment[v]).astype(float)
    return cfg.b_d + (cfg.b_s - cfg.b_d) * same


def normalize_biases(raw: np.ndarray) -> np.ndarray:
    """Normalize positive biases into selection probabilities."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise DataError("cannot normalize an empty bias vector")
    if np.any(raw <= 0):
        raise DataError("biases must be positive")
    return raw / raw.sum()


def bias_probabilities(g: PropertyGraph, clusters: ClusterAssignment,
                       cfg: BiasConfig) -> np.ndarray:
    """Normalized selection probability of every out-adjacency slot."""
    src = g.edge_sources()
    same = clusters.assignment[src] == clusters.assignment[g.out_targets]
    biases = np.where(same, cfg.b_s, cfg.b_d)
    sums = np.zeros(g.n_nodes)
    np.add.at(sums, src, biases)
    return biases / sums[src]


class _Pool:
    """Flattened per-node sampling pool with cumulative inverse-CDF table."""

    def __init__(self, g: PropertyGraph, clusters: ClusterAssignment,
                 cfg: BiasConfig):
        if len(clusters.assignment) != g.n_nodes:
            raise DataError("clustering does not cover this graph")
        n = g.n_nodes
        if g.directed:
            out_deg, in_deg = g.out_degrees, g.in_degrees
            deg = out_deg + in_deg
            offsets = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(deg, out=offsets[1:])
            targets = np.empty(offsets[-1], dtype=np.int64)
            slots = np.empty(offsets[-1], dtype=np.int64)
            for v in range(n):
                lo = offsets[v]
                o0, o1 = g.out_offsets[v], g.out_offsets[v + 1]
                i0, i1 = g.in_offsets[v], g.in_offsets[v + 1]
                targets[lo:lo + o1 - o0] = g.out_targets[o0:o1]
                slots[lo:lo + o1 - o0] = np.arange(o0, o1)
                targets[lo + o1 - o0:lo + deg[v]] = g.in_targets[i0:i1]
                slots[lo + o1 - o0:lo + deg[v]] = \
                    g.in_slots[i0:i1].astype(np.int64) + g.n_edges
        else:
            offsets = g.out_offsets
            targets = g.out_targets.astype(np.int64)
            slots = np.arange(g.n_edges, dtype=np.int64)
            deg = g.out_degrees

        src = np.repeat(np.arange(n, dtype=np.int64), deg)
        same = clusters.assignment[src] == clusters.assignment[targets]
        biases = np.where(same, cfg.b_s, cfg.b_d)
        sums = np.zeros(n)
        np.add.at(sums, src, biases)
        probs = biases / sums[src]

        csum = np.cumsum(probs)
        starts = offsets[:-1][deg > 0]
        base = np.zeros(n)
        base[deg > 0] = csum[starts] - probs[starts]
        table = (csum - np.repeat(base, deg)) + src.astype(np.float64)
        ends = offsets[1:][deg > 0] - 1
        table[ends] = np.flatnonzero(deg > 0) + 1.0  # exact row upper bounds

        self.deg = np.asarray(deg)
        self.targets = targets
        self.slots = slots
        self.table = table

    def draw(self, sources: np.ndarray, uniforms: np.ndarray):
        """Inverse-CDF draw of one neighbor per (source, uniform) pair."""
        sources = np.asarray(sources, dtype=np.int64)
        ids = np.empty(sources.shape, dtype=np.int32)
        slots = np.empty(sources.shape, dtype=np.int64)
        live = self.deg[sources] > 0
        pos = np.searchsorted(self.table,
                              sources[live] + uniforms[live], side="right")
        ids[live] = self.targets[pos]
        slots[live] = self.slots[pos]
        ids[~live] = sources[~live]  # self-fallback for isolated nodes
        slots[~live] = SELF_SLOT
        return ids, slots


def sample_neighborhood(g: PropertyGraph, clusters: ClusterAssignment,
                        cfg: BiasConfig,
                        nodes: np.ndarray | None = None) -> SampledGraph:
    """Draw the two-hop biased sample for ``nodes`` (default: all nodes)."""
    pool = _Pool(g, clusters, cfg)
    if nodes is None:
        nodes = np.arange(g.n_nodes, dtype=np.int64)
    else:
        nodes = np.asarray(nodes, dtype=np.int64)
    s = cfg.sample_size
    m = len(nodes)

    u1 = counter_uniforms(cfg.seed, nodes[:, None], 1, np.arange(s)[None, :])
    src1 = np.repeat(nodes, s)
    hop1, eslot1 = pool.draw(src1, u1.ravel())
    hop1 = hop1.reshape(m, s)
    eslot1 = eslot1.reshape(m, s)

    u2 = counter_uniforms(cfg.seed, nodes[:, None], 2,
                          np.arange(s * s)[None, :])
    src2 = np.repeat(hop1.ravel().astype(np.int64), s)
    hop2, eslot2 = pool.draw(src2, u2.ravel())
    return SampledGraph(
        nodes=nodes, hop1=hop1, eslot1=eslot1,
        hop2=hop2.reshape(m, s, s), eslot2=eslot2.reshape(m, s, s),
        seed=cfg.seed, sample_size=s, n_nodes=g.n_nodes, n_edges=g.n_edges)


def export_sampled_tsv(sampled: SampledGraph, g: PropertyGraph, path):
    """Debug dump: ``<v>\\t<hop>\\t<slot>\\t<sampled_id>`` with original ids."""
    s = sampled.sample_size
    with open(path, "w", encoding="utf-8") as fh:
        for r, v in enumerate(sampled.nodes.tolist()):
            vid = g.node_ids[v]
            for j in range(s):
                fh.write(f"{vid}\t1\t{j}\t{g.node_ids[sampled.hop1[r, j]]}\n")
            for j in range(s):
                for t in range(s):
                    fh.write(f"{vid}\t2\t{j * s + t}\t"
                             f"{g.node_ids[sampled.hop2[r, j, t]]}\n")
