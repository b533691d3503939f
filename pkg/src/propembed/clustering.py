"""Property-based clustering of nodes and edges (pipeline step 1).

K-means is Lloyd's algorithm with seeded k-means++ initialization and
empty-cluster repair; DBSCAN uses KD-tree region queries and assigns
every non-core point (border or noise) to its nearest core point's
cluster, so both methods label every row. Both are deterministic for a
fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError
from .graph import PropertyGraph

__all__ = [
    "ClusterAssignment",
    "EdgeClusterAssignment",
    "kmeans",
    "dbscan",
    "choose_k",
    "cluster_edges",
    "cluster_nodes",
    "suggest_eps",
    "normalize_rows",
    "export_assignment",
    "MAX_EDGE_CLUSTERS",
]

MAX_EDGE_CLUSTERS = 8


@dataclass
class ClusterAssignment:
    """Node -> cluster id map; every id in 0..k-1 is used."""

    assignment: np.ndarray
    k: int
    method: str
    inertia_or_eps: float
    centroids: np.ndarray | None = None
    inertia_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.k < 1:
            raise DataError("cluster count must be >= 1")
        used = np.unique(self.assignment)
        if used.min() < 0 or used.max() >= self.k or len(used) != self.k:
            raise DataError("every cluster id in 0..k-1 must be used")


@dataclass
class EdgeClusterAssignment:
    """Edge slot -> edge-cluster id map.

    With ``direction_split`` (directed graphs), the id space splits into
    an out-edge half [0, k_e/2) and an in-edge half [k_e/2, k_e);
    ``assignment`` holds the out-role ids and ``assignment_in`` the
    in-role ids. ``ids_for_slots`` resolves sampled slots, where values
    >= n_edges encode traversal against the stored direction and -1 is
    the isolated-node sentinel.
    """

    assignment: np.ndarray
    k_e: int
    n_edges: int
    direction_split: bool = False
    assignment_in: np.ndarray | None = None
    method: str = "kmeans"

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if not 1 <= self.k_e <= MAX_EDGE_CLUSTERS:
            raise DataError(f"k_e must be in 1..{MAX_EDGE_CLUSTERS}")
        if self.assignment.shape != (self.n_edges,):
            raise DataError("edge assignment must cover every edge slot")
        used = set(np.unique(self.assignment).tolist())
        if self.assignment_in is not None:
            self.assignment_in = np.asarray(self.assignment_in, dtype=np.int64)
            used |= set(np.unique(self.assignment_in).tolist())
        if used != set(range(self.k_e)):
            raise DataError("every edge-cluster id in 0..k_e-1 must be used")

    def ids_for_slots(self, slots: np.ndarray) -> np.ndarray:
        slots = np.asarray(slots)
        ids = np.full(slots.shape, -1, dtype=np.int64)
        m_out = (slots >= 0) & (slots < self.n_edges)
        ids[m_out] = self.assignment[slots[m_out]]
        m_in = slots >= self.n_edges
        if m_in.any():
            table = (self.assignment_in if self.assignment_in is not None
                     else self.assignment)
            ids[m_in] = table[slots[m_in] - self.n_edges]
        return ids


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """L2-normalize rows; all-zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def _squared_distances(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d2 = ((x ** 2).sum(1)[:, None] - 2.0 * (x @ c.T) + (c ** 2).sum(1)[None, :])
    return np.maximum(d2, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = _squared_distances(x, centroids[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[j] = x[rng.integers(n)]
            continue
        centroids[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, _squared_distances(x, centroids[j:j + 1]).ravel())
    return centroids


def kmeans(props: np.ndarray, k: int, seed: int = 0,
           max_iter: int = 100) -> ClusterAssignment:
    """Seeded Lloyd's k-means over the rows of ``props``.

    Runs until the assignment stops changing or ``max_iter`` is hit.
    Empty clusters are repaired by reseeding their centroid onto the
    point farthest from its current centroid.
    """
    x = np.asarray(props, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("props must be a 2-D matrix")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise DataError(f"k must be in 1..{n}, got {k}")
    if max_iter < 1:
        raise DataError("max_iter must be >= 1")
    if not np.all(np.isfinite(x)):
        raise DataError("props contains non-finite values")
    if k > 1 and np.all(x == x[0]):
        raise DataError("degenerate input: all rows identical but k > 1")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, k, rng)
    assign = None
    history: list[float] = []
    for _ in range(max_iter):
        d2 = _squared_distances(x, centroids)
        new_assign = d2.argmin(axis=1)
        dmin = d2[np.arange(n), new_assign]
        history.append(float(dmin.sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=k)
        empties = np.flatnonzero(counts == 0)
        if len(empties):
            # Reseed each empty centroid onto a distinct farthest point.
            far_order = np.argsort(-dmin, kind="stable")
            for c, pt in zip(empties, far_order[: len(empties)]):
                centroids[c] = x[pt]
                assign[pt] = c
            counts = np.bincount(assign, minlength=k)
        for c in range(k):
            if counts[c]:
                centroids[c] = x[assign == c].mean(axis=0)

    counts = np.bincount(assign, minlength=k)
    if np.any(counts == 0):  # pathological duplicates; pin farthest points
        d2 = _squared_distances(x, centroids)
        dmin = d2[np.arange(n), assign]
        far_order = np.argsort(-dmin, kind="stable")
        it = iter(far_order)
        for c in np.flatnonzero(counts == 0):
            assign[next(it)] = c
    inertia = float(_squared_distances(x, centroids)[np.arange(n), assign].sum())
    return ClusterAssignment(assignment=assign, k=k, method="kmeans",
                             inertia_or_eps=inertia, centroids=centroids,
                             inertia_history=history)


def suggest_eps(props: np.ndarray, k: int = 4) -> float:
    """k-distance heuristic: median distance to the k-th nearest neighbor."""
    x = np.asarray(props, dtype=np.float64)
    kk = min(k + 1, len(x))
    dist, _ = cKDTree(x).query(x, k=kk)
    return float(np.median(dist[:, -1])) if kk > 1 else 1.0


def dbscan(props: np.ndarray, eps: float, min_pts: int = 4) -> ClusterAssignment:
    """Density clustering; every row ends up labeled.

    Clusters are the connected components of core points under
    eps-reachability; non-core points (border and noise alike) join the
    cluster of their nearest core point, so the result is independent of
    row order up to relabeling.
    """
    x = np.asarray(props, dtype=np.float64)
    if eps <= 0:
        raise DataError("eps must be > 0")
    if min_pts < 1:
        raise DataError("min_pts must be >= 1")
    n = x.shape[0]
    tree = cKDTree(x)
    neigh = tree.query_ball_point(x, r=eps)
    core = np.array([len(nb) >= min_pts for nb in neigh])
    if not core.any():
        raise DataError(
            "no core point found (all points noise); try eps around "
            f"{suggest_eps(x):.6g}")

    labels = np.full(n, -1, dtype=np.int64)
    k = 0
    for start in np.flatnonzero(core):
        if labels[start] != -1:
            continue
        stack = [start]
        labels[start] = k
        while stack:
            node = stack.pop()
            for nb in neigh[node]:
                if core[nb] and labels[nb] == -1:
                    labels[nb] = k
                    stack.append(nb)
        k += 1

    rest = np.flatnonzero(~core)
    if len(rest):
        core_idx = np.flatnonzero(core)
        _, nearest = cKDTree(x[core_idx]).query(x[rest])
        labels[rest] = labels[core_idx[nearest]]
    return ClusterAssignment(assignment=labels, k=k, method="dbscan",
                             inertia_or_eps=float(eps))


def choose_k(g: PropertyGraph) -> int:
    """Cluster count near the average degree: max(2, round(|E|/|V|))."""
    if g.n_edges < 1:
        raise DataError("graph has no edges")
    undirected_edges = g.n_edges if g.directed else g.n_edges // 2
    avg = undirected_edges / g.n_nodes
    return max(2, int(np.floor(avg + 0.5)))


def cluster_edges(g: PropertyGraph, k_e: int, seed: int = 0,
                  split_by_direction: bool = False) -> EdgeClusterAssignment:
    """Cluster edges by their property vectors (or pass labels through).

    Integer edge labels act as a trivial clustering: distinct values map
    to ids 0..k_e-1 and must number exactly ``k_e``. With
    ``split_by_direction`` on a directed graph, the out-edge and in-edge
    roles are clustered by two independent k-means runs over k_e/2
    clusters each, with the in-role ids offset into the upper half.
    """
    if not 1 <= k_e <= MAX_EDGE_CLUSTERS:
        raise DataError(f"k_e must be in 1..{MAX_EDGE_CLUSTERS}")
    if g.edge_props is None and g.edge_labels is None:
        raise DataError("graph has neither edge properties nor edge labels")

    if g.edge_props is None:
        if split_by_direction:
            raise DataError("direction split requires edge properties")
        values = np.unique(g.edge_labels)
        if len(values) != k_e:
            raise DataError(
                f"edge labels have {len(values)} distinct values, expected {k_e}")
        lut = {v: i for i, v in enumerate(values.tolist())}
        assignment = np.array([lut[v] for v in g.edge_labels.tolist()])
        return EdgeClusterAssignment(assignment=assignment, k_e=k_e,
                                     n_edges=g.n_edges, method="labels")

    if split_by_direction:
        if not g.directed:
            raise DataError("direction split only applies to directed graphs")
        if k_e % 2:
            raise DataError("direction split needs an even k_e")
        half = k_e // 2
        out_part = kmeans(g.edge_props, half, seed=seed)
        in_part = kmeans(g.edge_props, half, seed=seed + 1)
        return EdgeClusterAssignment(
            assignment=out_part.assignment, k_e=k_e, n_edges=g.n_edges,
            direction_split=True, assignment_in=in_part.assignment + half)

    part = kmeans(g.edge_props, k_e, seed=seed)
    return EdgeClusterAssignment(assignment=part.assignment, k_e=k_e,
                                 n_edges=g.n_edges)


def cluster_nodes(g: PropertyGraph, method: str = "auto",
                  k: int | None = None, eps: float | None = None,
                  min_pts: int = 4, seed: int = 0) -> ClusterAssignment:
    """Cluster nodes on L2-normalized property vectors.

    ``auto`` follows the scale rule: DBSCAN up to 100k nodes, otherwise
    k-means with k from ``choose_k``.
    """
    x = normalize_rows(g.node_props)
    if method == "auto":
        method = "dbscan" if g.n_nodes <= 100_000 else "kmeans"
    if method == "kmeans":
        return kmeans(x, k if k is not None else choose_k(g), seed=seed)
    if method == "dbscan":
        return dbscan(x, eps if eps is not None else suggest_eps(x),
                      min_pts=min_pts)
    raise DataError(f"unknown clustering method {method!r}")


def export_assignment(assignment: np.ndarray, g: PropertyGraph, path):
    """Write ``<node_id>\\t<cluster_id>`` lines (original ids)."""
    with open(path, "w", encoding="utf-8") as fh:
        for v, c in enumerate(np.asarray(assignment).tolist()):
            fh.write(f"{g.node_ids[v]}\t{c}\n")
