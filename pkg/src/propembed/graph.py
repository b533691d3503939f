"""Immutable CSR-backed property graphs: loading, neighbor queries, node splits.

File formats (UTF-8, lines starting with ``#`` are ignored):

* node file:  ``<node_id>\\t<f_1>,<f_2>,...,<f_dp>``
* edge file:  ``<src_id>\\t<dst_id>[\\t<e_1>,...,<e_de>]``
* label file: ``<node_id>\\t<label_idx>[,<label_idx>...]``

Node ids in the files may be arbitrary strings; they are densified to
0..n-1 in first-seen node-file order and the mapping is kept on the graph
(and persisted by the pipeline). Undirected input edges are expanded into
two directed slots each, so ``n_edges`` always counts directed slots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = [
    "PropertyGraph",
    "NodeSplit",
    "load_graph",
    "neighbors",
    "split_nodes",
    "save_edges",
    "save_id_map",
]


@dataclass
class PropertyGraph:
    """A loaded property graph. Arrays are read-only after construction.

    ``out_offsets``/``out_targets`` are the CSR adjacency; edge slot ``i``
    (0..n_edges-1) is the i-th entry of ``out_targets`` and indexes the
    rows of ``edge_props`` / ``edge_labels``. For undirected graphs both
    directions of every input edge are stored, each with its own slot.
    """

    n_nodes: int
    n_edges: int
    directed: bool
    out_offsets: np.ndarray
    out_targets: np.ndarray
    node_props: np.ndarray
    in_offsets: np.ndarray | None = None
    in_targets: np.ndarray | None = None
    in_slots: np.ndarray | None = None  # edge slot of each in_adj entry
    edge_props: np.ndarray | None = None
    node_labels: np.ndarray | None = None
    edge_labels: np.ndarray | None = None
    node_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.out_offsets = np.asarray(self.out_offsets, dtype=np.int64)
        self.out_targets = np.asarray(self.out_targets, dtype=np.int32)
        self.node_props = np.asarray(self.node_props, dtype=np.float64)
        self._validate()
        for arr in (self.out_offsets, self.out_targets, self.node_props,
                    self.in_offsets, self.in_targets, self.in_slots,
                    self.edge_props, self.node_labels, self.edge_labels):
            if arr is not None:
                arr.setflags(write=False)
        if not self.node_ids:
            self.node_ids = [str(i) for i in range(self.n_nodes)]

    def _validate(self):
        off, tgt = self.out_offsets, self.out_targets
        if off.shape != (self.n_nodes + 1,):
            raise DataError("CSR offsets must have length n_nodes+1")
        if np.any(np.diff(off) < 0):
            raise DataError("CSR offsets must be nondecreasing")
        if off[0] != 0 or off[-1] != self.n_edges or tgt.shape != (self.n_edges,):
            raise DataError("CSR offsets/targets inconsistent with n_edges")
        if self.n_edges and (tgt.min() < 0 or tgt.max() >= self.n_nodes):
            raise DataError("edge target id out of range")
        if self.node_props.shape[0] != self.n_nodes:
            raise DataError("node_props must have one row per node")
        if not np.all(np.isfinite(self.node_props)):
            raise DataError("node_props contains non-finite values")
        if self.directed:
            if self.in_offsets is None or self.in_targets is None:
                raise DataError("directed graph requires in-adjacency")
        elif self.n_edges:
            self._check_symmetry()
        if self.node_labels is not None:
            self.node_labels = np.asarray(self.node_labels)
            if self.node_labels.shape[0] != self.n_nodes:
                raise DataError("node_labels must have one row per node")
            if np.any(self.node_labels.sum(axis=1) < 1):
                raise DataError("every node must carry at least one label")
        if self.edge_props is not None and self.edge_props.shape[0] != self.n_edges:
            raise DataError("edge_props must have one row per edge slot")
        if self.edge_labels is not None and self.edge_labels.shape[0] != self.n_edges:
            raise DataError("edge_labels must have one entry per edge slot")

    def _check_symmetry(self):
        src = np.repeat(np.arange(self.n_nodes, dtype=np.int64), self.out_degrees)
        fwd = src * self.n_nodes + self.out_targets
        rev = self.out_targets.astype(np.int64) * self.n_nodes + src
        if not np.array_equal(np.sort(fwd), np.sort(rev)):
            raise DataError("undirected graph requires a symmetric edge multiset")

    @property
    def out_degrees(self) -> np.ndarray:
        return np.diff(self.out_offsets)

    @property
    def in_degrees(self) -> np.ndarray:
        if not self.directed:
            return self.out_degrees
        return np.diff(self.in_offsets)

    @property
    def property_dim(self) -> int:
        return self.node_props.shape[1]

    @property
    def label_dim(self) -> int:
        if self.node_labels is None:
            raise DataError("graph has no node labels")
        return self.node_labels.shape[1]

    def out_row(self, v: int) -> np.ndarray:
        return self.out_targets[self.out_offsets[v]:self.out_offsets[v + 1]]

    def out_slot_range(self, v: int) -> tuple[int, int]:
        return int(self.out_offsets[v]), int(self.out_offsets[v + 1])

    def in_row(self, v: int) -> np.ndarray:
        if not self.directed:
            return self.out_row(v)
        return self.in_targets[self.in_offsets[v]:self.in_offsets[v + 1]]

    def edge_sources(self) -> np.ndarray:
        """Source node of every edge slot, in slot order."""
        return np.repeat(np.arange(self.n_nodes, dtype=np.int32), self.out_degrees)

    def neighbor_sets(self) -> list[np.ndarray]:
        """Deduplicated out-neighbor id array per node (sorted)."""
        return [np.unique(self.out_row(v)) for v in range(self.n_nodes)]


@dataclass
class NodeSplit:
    """Disjoint train/val/test node-id arrays covering all nodes."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self):
        self.train = np.sort(np.asarray(self.train, dtype=np.int64))
        self.val = np.sort(np.asarray(self.val, dtype=np.int64))
        self.test = np.sort(np.asarray(self.test, dtype=np.int64))
        merged = np.concatenate([self.train, self.val, self.test])
        if len(np.unique(merged)) != len(merged):
            raise DataError("split sets must be disjoint")


def _parse_float_list(text: str, path: str, lineno: int) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",")], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}:{lineno}: bad numeric list: {exc}") from None


def _iter_lines(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def _build_csr(n: int, src: np.ndarray, dst: np.ndarray):
    """Counting-sort edges by source; within a row, input order is kept."""
    order = np.argsort(src, kind="stable")
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    offsets = np.cumsum(offsets)
    return offsets, dst[order].astype(np.int32), order


def load_graph(node_file: str | Path, edge_file: str | Path,
               label_file: str | Path | None = None,
               directed: bool = False) -> PropertyGraph:
    """Load a property graph from TSV files (formats in the module docstring).

    Undirected edges are expanded into both directions; self-loops are
    rejected; parallel edges are kept. Errors report file and line.
    """
    node_file, edge_file = str(node_file), str(edge_file)
    ids: list[str] = []
    index: dict[str, int] = {}
    feats: list[np.ndarray] = []
    dim = None
    for lineno, line in _iter_lines(node_file):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{node_file}:{lineno}: expected '<id>\\t<features>'")
        nid, ftext = parts
        if nid in index:
            raise DataError(f"{node_file}:{lineno}: duplicate node id {nid!r}")
        row = _parse_float_list(ftext, node_file, lineno)
        if dim is None:
            dim = len(row)
        elif len(row) != dim:
            raise DataError(
                f"{node_file}:{lineno}: feature dimension {len(row)} != {dim}")
        if not np.all(np.isfinite(row)):
            raise DataError(f"{node_file}:{lineno}: non-finite feature value")
        index[nid] = len(ids)
        ids.append(nid)
        feats.append(row)
    if not ids:
        raise DataError(f"{node_file}: no nodes")
    props = np.vstack(feats)
    n = len(ids)

    srcs, dsts, eprops = [], [], []
    e_dim = None
    for lineno, line in _iter_lines(edge_file):
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise DataError(f"{edge_file}:{lineno}: expected 2 or 3 tab fields")
        for endpoint in parts[:2]:
            if endpoint not in index:
                raise DataError(
                    f"{edge_file}:{lineno}: unknown node id {endpoint!r}")
        u, w = index[parts[0]], index[parts[1]]
        if u == w:
            raise DataError(f"{edge_file}:{lineno}: self-loop on {parts[0]!r}")
        prow = None
        if len(parts) == 3:
            prow = _parse_float_list(parts[2], edge_file, lineno)
            if e_dim is None:
                e_dim = len(prow)
            elif len(prow) != e_dim:
                raise DataError(
                    f"{edge_file}:{lineno}: edge feature dimension "
                    f"{len(prow)} != {e_dim}")
        elif e_dim is not None:
            raise DataError(f"{edge_file}:{lineno}: missing edge features")
        if directed:
            srcs.append(u); dsts.append(w)
            if prow is not None:
                eprops.append(prow)
        else:
            srcs.extend((u, w)); dsts.extend((w, u))
            if prow is not None:
                eprops.extend((prow, prow))

    src = np.asarray(srcs, dtype=np.int64)
    dst = np.asarray(dsts, dtype=np.int64)
    out_offsets, out_targets, order = _build_csr(n, src, dst)
    edge_props = None
    if eprops:
        edge_props = np.vstack(eprops)[order]

    in_offsets = in_targets = in_slots = None
    if directed:
        # In-adjacency mirrors the same slots, sorted by target.
        in_offsets, in_targets, in_order = _build_csr(
            n, dst[order], src[order].astype(np.int64))
        in_slots = in_order.astype(np.int32)

    labels = None
    if label_file is not None:
        label_file = str(label_file)
        seen: dict[int, list[int]] = {}
        max_idx = -1
        for lineno, line in _iter_lines(label_file):
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{label_file}:{lineno}: expected '<id>\\t<labels>'")
            if parts[0] not in index:
                raise DataError(
                    f"{label_file}:{lineno}: unknown node id {parts[0]!r}")
            try:
                idxs = [int(t) for t in parts[1].split(",")]
            except ValueError:
                raise DataError(f"{label_file}:{lineno}: bad label index") from None
            if any(i < 0 for i in idxs):
                raise DataError(f"{label_file}:{lineno}: negative label index")
            seen.setdefault(index[parts[0]], []).extend(idxs)
            max_idx = max(max_idx, max(idxs))
        missing = set(range(n)) - set(seen)
        if missing:
            raise DataError(
                f"{label_file}: {len(missing)} node(s) without any label "
                f"(first: {ids[min(missing)]!r})")
        labels = np.zeros((n, max_idx + 1), dtype=np.int8)
        for node, idxs in seen.items():
            labels[node, idxs] = 1

    return PropertyGraph(
        n_nodes=n, n_edges=len(src), directed=directed,
        out_offsets=out_offsets, out_targets=out_targets,
        in_offsets=in_offsets, in_targets=in_targets, in_slots=in_slots,
        node_props=props, edge_props=edge_props, node_labels=labels,
        node_ids=ids)


def neighbors(g: PropertyGraph, v: int, direction: str = "out") -> np.ndarray:
    """Neighbor ids of ``v`` in stored order. ``in`` equals ``out`` when undirected."""
    if not 0 <= v < g.n_nodes:
        raise DataError(f"node id {v} out of range [0, {g.n_nodes})")
    if direction == "out":
        return g.out_row(v)
    if direction == "in":
        return g.in_row(v)
    raise DataError(f"direction must be 'out' or 'in', got {direction!r}")


def split_nodes(g: PropertyGraph, ratios: tuple[float, float, float],
                seed: int) -> NodeSplit:
    """Seeded train/val/test partition.

    Set sizes are floor(ratio*n) for val and test; the division remainder
    goes to train. Deterministic for a fixed seed.
    """
    if g.n_nodes < 3:
        raise DataError("need at least 3 nodes to split")
    r_train, r_val, r_test = ratios
    if min(ratios) <= 0:
        raise DataError("split ratios must be positive")
    if abs(r_train + r_val + r_test - 1.0) > 1e-9:
        raise DataError("split ratios must sum to 1")
    n = g.n_nodes
    n_val = int(np.floor(r_val * n))
    n_test = int(np.floor(r_test * n))
    n_train = n - n_val - n_test  # floor(train*n) plus the remainder
    perm = np.random.default_rng(seed).permutation(n)
    return NodeSplit(train=perm[:n_train],
                     val=perm[n_train:n_train + n_val],
                     test=perm[n_train + n_val:],
                     seed=seed)


def save_edges(g: PropertyGraph, path: str | Path):
    """Write all directed edge slots back out in edge-file format."""
    src = g.edge_sources()
    with open(path, "w", encoding="utf-8") as fh:
        for e in range(g.n_edges):
            u, w = g.node_ids[src[e]], g.node_ids[g.out_targets[e]]
            if g.edge_props is not None:
                ptxt = ",".join(repr(x) for x in g.edge_props[e])
                fh.write(f"{u}\t{w}\t{ptxt}\n")
            else:
                fh.write(f"{u}\t{w}\n")


def save_id_map(g: PropertyGraph, path: str | Path):
    """Persist the original-id -> dense-id mapping as TSV."""
    with open(path, "w", encoding="utf-8") as fh:
        for dense, orig in enumerate(g.node_ids):
            fh.write(f"{orig}\t{dense}\n")
