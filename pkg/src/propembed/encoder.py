"""Two-hop neighborhood aggregation encoders (pipeline step 3).

Plain mode uses one weight matrix per hop: a node's hop-1 representation
concatenates its own property vector with the mean property vector of
its sampled neighbors, and the final embedding concatenates the node's
hop-1 representation with the mean hop-1 representation of its sampled
neighbors. Edge-aware mode keeps one matrix per edge cluster (plus a
self matrix) per hop and concatenates per-cluster mean blocks, so
neighbors reached over differently-clustered edges are transformed
differently; empty cluster blocks contribute zeros.

Hidden transforms use the configured activation; the final output is an
affine head when ``out_W`` is set, otherwise plain mode emits the raw
top-level affine map (logits) and edge-aware mode the activated block
concatenation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .clustering import EdgeClusterAssignment
from .errors import DataError
from .graph import PropertyGraph
from .sampler import SampledGraph

__all__ = [
    "EncoderParams",
    "init_params",
    "encode_plain",
    "encode_edge_aware",
    "forward",
    "backward",
    "save_params",
    "load_params",
]

PLAIN = "plain"
EDGE_AWARE = "edge_aware"
_ACTIVATIONS = ("relu", "identity")


def _act(x: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(x, 0.0) if kind == "relu" else x


def _act_grad(pre: np.ndarray, kind: str) -> np.ndarray:
    return (pre > 0.0).astype(np.float64) if kind == "relu" else np.ones_like(pre)


@dataclass
class EncoderParams:
    """Trainable weight matrices for one encoder mode."""

    mode: str
    W1_set: list[np.ndarray]
    W2_set: list[np.ndarray]
    out_W: np.ndarray | None
    out_b: np.ndarray | None
    dims: tuple[int, int, int]  # (input, hidden, output)
    activation: str = "relu"
    k_e: int = 0

    def __post_init__(self):
        if self.mode not in (PLAIN, EDGE_AWARE):
            raise DataError(f"unknown encoder mode {self.mode!r}")
        if self.activation not in _ACTIVATIONS:
            raise DataError(f"unknown activation {self.activation!r}")
        for _, arr in self.arrays():
            if not np.all(np.isfinite(arr)):
                raise DataError("encoder parameters must be finite")

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        """Named parameter arrays in declaration order."""
        named = [(f"W1_{i}", w) for i, w in enumerate(self.W1_set)]
        named += [(f"W2_{i}", w) for i, w in enumerate(self.W2_set)]
        if self.out_W is not None:
            named += [("out_W", self.out_W), ("out_b", self.out_b)]
        return named

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            mode=self.mode,
            W1_set=[w.copy() for w in self.W1_set],
            W2_set=[w.copy() for w in self.W2_set],
            out_W=None if self.out_W is None else self.out_W.copy(),
            out_b=None if self.out_b is None else self.out_b.copy(),
            dims=self.dims, activation=self.activation, k_e=self.k_e)

    @property
    def out_dim(self) -> int:
        if self.out_W is not None:
            return self.out_W.shape[0]
        if self.mode == PLAIN:
            return self.W1_set[0].shape[0]
        return self.W1_set[0].shape[0] * (self.k_e + 1)


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def block_width(hidden: int, k_e: int) -> int:
    """Per-block width in edge-aware mode: hidden split over k_e+1 blocks."""
    return -(-hidden // (k_e + 1))


def init_params(dims: tuple[int, int, int], mode: str, k_e: int = 0,
                seed: int = 0, activation: str = "relu",
                out_proj: bool | None = None) -> EncoderParams:
    """Glorot-uniform initialization, deterministic per seed.

    Edge-aware mode defaults to a trained affine output head mapping the
    block concatenation to ``dims[2]``; pass ``out_proj=False`` for the
    literal activated concatenation output.
    """
    d_in, d_h, d_out = dims
    if min(dims) < 1:
        raise DataError("all dims must be positive")
    rng = np.random.default_rng(seed)
    if mode == PLAIN:
        if out_proj:
            raise DataError("plain mode has no output head; size W1 instead")
        w1 = [_glorot(rng, d_out, 2 * d_h)]
        w2 = [_glorot(rng, d_h, 2 * d_in)]
        return EncoderParams(mode=mode, W1_set=w1, W2_set=w2, out_W=None,
                             out_b=None, dims=dims, activation=activation)
    if mode != EDGE_AWARE:
        raise DataError(f"unknown encoder mode {mode!r}")
    if k_e < 1:
        raise DataError("edge-aware mode needs k_e >= 1")
    if out_proj is None:
        out_proj = True
    width = block_width(d_h, k_e)
    d1 = (k_e + 1) * width
    w1 = [_glorot(rng, width, d1) for _ in range(k_e + 1)]
    w2 = [_glorot(rng, width, d_in) for _ in range(k_e + 1)]
    out_w = out_b = None
    if out_proj:
        out_w = _glorot(rng, d_out, (k_e + 1) * width)
        out_b = np.zeros(d_out)
    return EncoderParams(mode=EDGE_AWARE, W1_set=w1, W2_set=w2, out_W=out_w,
                         out_b=out_b, dims=dims, activation=activation, k_e=k_e)


# ---------------------------------------------------------------------------
# plain mode

@dataclass
class _PlainCache:
    batch: np.ndarray
    x1: np.ndarray       # level-2 inputs, self units first
    pre1: np.ndarray
    x0: np.ndarray       # level-1 inputs
    pre0: np.ndarray
    h0: np.ndarray | None
    out: np.ndarray


def _plain_forward(g: PropertyGraph, s: SampledGraph, params: EncoderParams,
                   batch: np.ndarray) -> _PlainCache:
    if params.mode != PLAIN:
        raise DataError("params are not for plain mode")
    w1, w2 = params.W1_set[0], params.W2_set[0]
    d_p = g.property_dim
    if w2.shape[1] != 2 * d_p:
        raise DataError(f"W2 expects input dim {w2.shape[1] // 2}, graph has {d_p}")
    batch = np.asarray(batch, dtype=np.int64)
    rows = s.rows_for(batch)
    h1 = s.hop1[rows]
    h2 = s.hop2[rows]
    m, size = h1.shape
    p = g.node_props

    own = np.concatenate([p[batch], p[h1].reshape(m * size, d_p)])
    mean_self = p[h1].mean(axis=1)
    mean_nb = p[h2].reshape(m * size, size, d_p).mean(axis=1)
    x1 = np.concatenate([own, np.concatenate([mean_self, mean_nb])], axis=1)
    pre1 = x1 @ w2.T
    z1 = _act(pre1, params.activation)

    x0 = np.concatenate([z1[:m], z1[m:].reshape(m, size, -1).mean(axis=1)],
                        axis=1)
    pre0 = x0 @ w1.T
    h0 = None
    out = pre0
    if params.out_W is not None:
        h0 = _act(pre0, params.activation)
        out = h0 @ params.out_W.T + params.out_b
    return _PlainCache(batch=batch, x1=x1, pre1=pre1, x0=x0, pre0=pre0,
                       h0=h0, out=out)


def _plain_backward(cache: _PlainCache, params: EncoderParams,
                    dout: np.ndarray) -> list[np.ndarray]:
    w1 = params.W1_set[0]
    d_h = params.W2_set[0].shape[0]
    m = len(cache.batch)
    size = (cache.x1.shape[0] - m) // m
    grads = {}
    if params.out_W is not None:
        grads["out_W"] = dout.T @ cache.h0
        grads["out_b"] = dout.sum(axis=0)
        dpre0 = (dout @ params.out_W) * _act_grad(cache.pre0, params.activation)
    else:
        dpre0 = dout
    grads["W1_0"] = dpre0.T @ cache.x0
    dx0 = dpre0 @ w1
    dz1 = np.empty((m * (1 + size), d_h))
    dz1[:m] = dx0[:, :d_h]
    dz1[m:] = np.repeat(dx0[:, d_h:] / size, size, axis=0)
    dpre1 = dz1 * _act_grad(cache.pre1, params.activation)
    grads["W2_0"] = dpre1.T @ cache.x1
    return [grads[name] for name, _ in params.arrays()]


# ---------------------------------------------------------------------------
# edge-aware mode

@dataclass
class _EdgeCache:
    batch: np.ndarray
    p_units: np.ndarray        # property vector per level-2 unit
    means2: np.ndarray         # (k_e, units, d_p) per-cluster hop-2 means
    counts2: np.ndarray
    pre1: np.ndarray
    z1: np.ndarray
    cid1: np.ndarray           # (batch, S) hop-1 edge clusters
    means1: np.ndarray         # (k_e, batch, d1) per-cluster hop-1 means
    counts1: np.ndarray
    pre0: np.ndarray
    z0: np.ndarray
    out: np.ndarray


def _cluster_means(values: np.ndarray, cids: np.ndarray, k_e: int):
    """Mean of ``values`` rows per unit and cluster; zero where empty.

    values: (units, S, d); cids: (units, S) in [-1, k_e).
    Returns means (k_e, units, d) and counts (k_e, units).
    """
    units, _, d = values.shape
    means = np.zeros((k_e, units, d))
    counts = np.zeros((k_e, units), dtype=np.int64)
    for i in range(k_e):
        mask = cids == i
        counts[i] = mask.sum(axis=1)
        sums = np.einsum("us,usd->ud", mask.astype(np.float64), values)
        nz = counts[i] > 0
        means[i][nz] = sums[nz] / counts[i][nz, None]
    return means, counts


def _edge_forward(g: PropertyGraph, s: SampledGraph,
                  ec: EdgeClusterAssignment, params: EncoderParams,
                  batch: np.ndarray) -> _EdgeCache:
    if params.mode != EDGE_AWARE:
        raise DataError("params are not for edge-aware mode")
    if ec.k_e != params.k_e:
        raise DataError(f"edge clustering has k_e={ec.k_e}, params expect "
                        f"{params.k_e}")
    if ec.n_edges != g.n_edges:
        raise DataError("edge clustering does not match this graph")
    d_p = g.property_dim
    if params.W2_set[0].shape[1] != d_p:
        raise DataError("W2 input dim does not match graph properties")
    k_e = params.k_e
    batch = np.asarray(batch, dtype=np.int64)
    rows = s.rows_for(batch)
    h1, e1 = s.hop1[rows], s.eslot1[rows]
    h2, e2 = s.hop2[rows], s.eslot2[rows]
    m, size = h1.shape
    p = g.node_props

    # Level-2 units: the batch nodes themselves, then every hop-1 occurrence.
    nid = np.concatenate([batch, h1.ravel()])
    sample_ids = np.concatenate([h1, h2.reshape(m * size, size)])
    sample_cids = np.concatenate([ec.ids_for_slots(e1),
                                  ec.ids_for_slots(e2.reshape(m * size, size))])
    p_units = p[nid]
    means2, counts2 = _cluster_means(p[sample_ids], sample_cids, k_e)

    blocks = [p_units @ params.W2_set[0].T]
    blocks += [means2[i] @ params.W2_set[i + 1].T for i in range(k_e)]
    pre1 = np.concatenate(blocks, axis=1)
    z1 = _act(pre1, params.activation)

    cid1 = ec.ids_for_slots(e1)
    z1_nb = z1[m:].reshape(m, size, -1)
    means1, counts1 = _cluster_means(z1_nb, cid1, k_e)
    blocks = [z1[:m] @ params.W1_set[0].T]
    blocks += [means1[i] @ params.W1_set[i + 1].T for i in range(k_e)]
    pre0 = np.concatenate(blocks, axis=1)
    z0 = _act(pre0, params.activation)
    out = z0 if params.out_W is None else z0 @ params.out_W.T + params.out_b
    return _EdgeCache(batch=batch, p_units=p_units, means2=means2,
                      counts2=counts2, pre1=pre1, z1=z1, cid1=cid1,
                      means1=means1, counts1=counts1, pre0=pre0, z0=z0,
                      out=out)


def _edge_backward(cache: _EdgeCache, params: EncoderParams,
                   dout: np.ndarray) -> list[np.ndarray]:
    k_e = params.k_e
    width1 = params.W1_set[0].shape[0]
    width2 = params.W2_set[0].shape[0]
    m, size = cache.cid1.shape
    grads = {}
    if params.out_W is not None:
        grads["out_W"] = dout.T @ cache.z0
        grads["out_b"] = dout.sum(axis=0)
        dz0 = dout @ params.out_W
    else:
        dz0 = dout
    dpre0 = dz0 * _act_grad(cache.pre0, params.activation)

    d1 = cache.z1.shape[1]
    dz1 = np.zeros_like(cache.z1)
    db0 = dpre0[:, :width1]
    grads["W1_0"] = db0.T @ cache.z1[:m]
    dz1[:m] = db0 @ params.W1_set[0]
    dz1_nb = np.zeros((m, size, d1))
    for i in range(k_e):
        dbi = dpre0[:, (i + 1) * width1:(i + 2) * width1]
        grads[f"W1_{i + 1}"] = dbi.T @ cache.means1[i]
        dmean = dbi @ params.W1_set[i + 1]
        nz = cache.counts1[i] > 0
        scaled = np.zeros_like(dmean)
        scaled[nz] = dmean[nz] / cache.counts1[i][nz, None]
        dz1_nb += scaled[:, None, :] * (cache.cid1 == i)[:, :, None]
    dz1[m:] = dz1_nb.reshape(m * size, d1)

    dpre1 = dz1 * _act_grad(cache.pre1, params.activation)
    grads["W2_0"] = dpre1[:, :width2].T @ cache.p_units
    for i in range(k_e):
        dai = dpre1[:, (i + 1) * width2:(i + 2) * width2]
        grads[f"W2_{i + 1}"] = dai.T @ cache.means2[i]
    return [grads[name] for name, _ in params.arrays()]


# ---------------------------------------------------------------------------
# public surface

def forward(g: PropertyGraph, s: SampledGraph, params: EncoderParams,
            batch, ec: EdgeClusterAssignment | None = None):
    """Run the encoder for ``batch``; returns (output rows, cache)."""
    if params.mode == PLAIN:
        cache = _plain_forward(g, s, params, batch)
    else:
        if ec is None:
            raise DataError("edge-aware mode needs an edge clustering")
        cache = _edge_forward(g, s, ec, params, batch)
    return cache.out, cache


def backward(cache, params: EncoderParams, dout: np.ndarray):
    """Parameter gradients for a cached forward pass, in arrays() order."""
    if params.mode == PLAIN:
        return _plain_backward(cache, params, dout)
    return _edge_backward(cache, params, dout)


def encode_plain(g: PropertyGraph, s: SampledGraph, params: EncoderParams,
                 batch) -> np.ndarray:
    """Plain-mode embedding rows for ``batch``."""
    return _plain_forward(g, s, params, batch).out


def encode_edge_aware(g: PropertyGraph, s: SampledGraph,
                      ec: EdgeClusterAssignment, params: EncoderParams,
                      batch) -> np.ndarray:
    """Edge-aware embedding rows for ``batch``."""
    return _edge_forward(g, s, ec, params, batch).out


# ---------------------------------------------------------------------------
# serialization: little-endian header + row-major float64 payloads

_MAGIC = b"NEMB"
_MODES = {PLAIN: 0, EDGE_AWARE: 1}
_ACTS = {"relu": 0, "identity": 1}


def save_params(params: EncoderParams, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack(
            "<BBBBiiiiii", _MODES[params.mode], _ACTS[params.activation],
            int(params.out_W is not None), 0, params.k_e, *params.dims,
            len(params.W1_set), len(params.W2_set)))
        for _, arr in params.arrays():
            arr2 = np.atleast_2d(np.asarray(arr, dtype=np.float64))
            fh.write(struct.pack("<ii", *arr2.shape))
            fh.write(arr2.astype("<f8").tobytes())


def load_params(path) -> EncoderParams:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise DataError(f"{path}: not a parameter file")
        mode_i, act_i, has_out, _, k_e, d_in, d_h, d_out, n1, n2 = \
            struct.unpack("<BBBBiiiiii", fh.read(28))

        def read_matrix():
            rows, cols = struct.unpack("<ii", fh.read(8))
            data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
            return data.reshape(rows, cols).astype(np.float64)

        w1 = [read_matrix() for _ in range(n1)]
        w2 = [read_matrix() for _ in range(n2)]
        out_w = out_b = None
        if has_out:
            out_w = read_matrix()
            out_b = read_matrix().ravel()
    mode = {v: k for k, v in _MODES.items()}[mode_i]
    act = {v: k for k, v in _ACTS.items()}[act_i]
    return EncoderParams(mode=mode, W1_set=w1, W2_set=w2, out_W=out_w,
                         out_b=out_b, dims=(d_in, d_h, d_out),
                         activation=act, k_e=k_e)
