"""Minibatch training of encoder parameters with hand-written backprop.

Gradients flow through every aggregation stage (means, concatenations,
affine maps, activations) but not through the sampling step, which is a
fixed stochastic structure per epoch. Parameters are updated with
bias-corrected Adam. Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit as _sigmoid

from . import encoder
from .clustering import ClusterAssignment, EdgeClusterAssignment
from .encoder import EncoderParams, init_params
from .errors import DataError, NumericError
from .graph import NodeSplit, PropertyGraph
from .sampler import BiasConfig, sample_neighborhood
from .seeds import derive_seed

__all__ = [
    "TrainConfig",
    "AdamState",
    "bce_loss",
    "link_loss",
    "adam_step",
    "init_adam",
    "train",
    "loss_and_grads",
    "link_batch_loss_and_grads",
    "normalize_embeddings",
    "edge_split",
    "sample_negatives",
    "predict_labels",
    "embed_nodes",
    "default_epochs",
]

NODE_CLASS = "node_class"
LINK_PRED = "link_pred"


@dataclass
class TrainConfig:
    task: str = NODE_CLASS
    learning_rate: float = 0.01
    epochs: int | None = None  # None: task default (see default_epochs)
    batch_size: int = 512
    neg_samples: int = 20
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    resample_per_epoch: bool = True
    hidden_dim: int = 128
    out_dim: int | None = None  # None: label count / hidden_dim by task

    def __post_init__(self):
        if self.task not in (NODE_CLASS, LINK_PRED):
            raise DataError(f"unknown task {self.task!r}")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if self.epochs is not None and self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.task == LINK_PRED and self.neg_samples < 1:
            raise DataError("link prediction needs neg_samples >= 1")


def default_epochs(task: str, g: PropertyGraph) -> int:
    """Task defaults; sparse graphs get extra link-prediction epochs."""
    if task == NODE_CLASS:
        return 100
    undirected = g.n_edges if g.directed else g.n_edges // 2
    return 10 if undirected / max(g.n_nodes, 1) < 5.0 else 1


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


def init_adam(params: EncoderParams) -> AdamState:
    arrays = [a for _, a in params.arrays()]
    return AdamState(m=[np.zeros_like(a) for a in arrays],
                     v=[np.zeros_like(a) for a in arrays])


def adam_step(params: EncoderParams, grads: list[np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """In-place bias-corrected Adam update; returns (params, state)."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for (name, arr), g, m, v in zip(params.arrays(), grads, state.m, state.v):
        if g.shape != arr.shape:
            raise DataError(f"gradient shape mismatch for {name}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        arr -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


def bce_loss(logits: np.ndarray, targets: np.ndarray):
    """Mean element-wise binary cross entropy on logits; returns (loss, grad)."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise DataError("logits and targets must share a shape")
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    elems = np.maximum(logits, 0.0) - logits * targets + \
        np.log1p(np.exp(-np.abs(logits)))
    grad = (_sigmoid(logits) - targets) / logits.size
    return float(elems.mean()), grad


def _softplus(x):
    return np.logaddexp(0.0, x)


def link_loss(z_u: np.ndarray, z_v: np.ndarray, negatives):
    """Negative-sampling link loss on dot-product scores.

    Returns (loss, (grad_u, grad_v, grad_negatives)).
    """
    z_u = np.asarray(z_u, dtype=np.float64)
    z_v = np.asarray(z_v, dtype=np.float64)
    negs = np.atleast_2d(np.asarray(negatives, dtype=np.float64))
    if z_u.size == 0 or z_v.size == 0:
        raise DataError("embeddings must be non-empty vectors")
    if negs.shape[0] < 1:
        raise DataError("need at least one negative sample")
    s_pos = float(z_u @ z_v)
    s_neg = negs @ z_u
    loss = float(_softplus(-s_pos) + _softplus(s_neg).sum())
    a_pos = -_sigmoid(-s_pos)
    a_neg = _sigmoid(s_neg)
    grad_u = a_pos * z_v + a_neg @ negs
    grad_v = a_pos * z_u
    grad_negs = np.outer(a_neg, z_u)
    return loss, (grad_u, grad_v, grad_negs)


def loss_and_grads(g: PropertyGraph, sampled, params: EncoderParams,
                   batch, targets: np.ndarray,
                   ec: EdgeClusterAssignment | None = None):
    """Classification loss and parameter gradients for one batch."""
    out, cache = encoder.forward(g, sampled, params, batch, ec=ec)
    loss, dout = bce_loss(out, targets)
    return loss, encoder.backward(cache, params, dout)


def normalize_embeddings(z: np.ndarray):
    """Row-wise L2 normalization with a backward closure.

    Link-prediction scores operate on unit vectors; otherwise shrinking
    every embedding toward zero is a stationary point of the
    negative-sampling loss.
    """
    norms = np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-6)
    zn = z / norms

    def backward(dzn: np.ndarray) -> np.ndarray:
        radial = (dzn * zn).sum(axis=1, keepdims=True)
        return (dzn - zn * radial) / norms

    return zn, backward


def link_batch_loss_and_grads(g: PropertyGraph, sampled,
                              params: EncoderParams, pairs: np.ndarray,
                              negatives: np.ndarray,
                              ec: EdgeClusterAssignment | None = None):
    """Mean link loss over edge ``pairs`` with per-edge ``negatives`` ids."""
    pairs = np.asarray(pairs)
    touched = np.unique(np.concatenate([pairs.ravel(), negatives.ravel()]))
    out, cache = encoder.forward(g, sampled, params, touched, ec=ec)
    zn, norm_backward = normalize_embeddings(out)
    row = {int(node): i for i, node in enumerate(touched)}
    dzn = np.zeros_like(zn)
    total = 0.0
    n = len(pairs)
    for (u, v), negs in zip(pairs.tolist(), negatives.tolist()):
        iu, iv = row[u], row[v]
        ins = [row[w] for w in negs]
        loss, (gu, gv, gn) = link_loss(zn[iu], zn[iv], zn[ins])
        total += loss
        dzn[iu] += gu / n
        dzn[iv] += gv / n
        for i, w in enumerate(ins):
            dzn[w] += gn[i] / n
    return total / n, encoder.backward(cache, params, norm_backward(dzn))


def edge_split(g: PropertyGraph, seed: int,
               ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)):
    """Split edges into train/val/test pair lists, by undirected pair.

    Both directions of an undirected edge always land in the same fold.
    """
    if g.n_edges < 1:
        raise DataError("graph has no edges")
    src = g.edge_sources()
    dst = g.out_targets
    if g.directed:
        pairs = np.column_stack([src, dst]).astype(np.int64)
    else:
        keep = src < dst
        pairs = np.column_stack([src[keep], dst[keep]]).astype(np.int64)
    perm = np.random.default_rng(seed).permutation(len(pairs))
    n_val = int(np.floor(ratios[1] * len(pairs)))
    n_test = int(np.floor(ratios[2] * len(pairs)))
    n_train = len(pairs) - n_val - n_test
    return (pairs[perm[:n_train]], pairs[perm[n_train:n_train + n_val]],
            pairs[perm[n_train + n_val:]])


def _neighbor_sets(g: PropertyGraph) -> list[set]:
    sets = [set(g.out_row(v).tolist()) for v in range(g.n_nodes)]
    if g.directed:
        for v in range(g.n_nodes):
            sets[v].update(g.in_row(v).tolist())
    return sets


def sample_negatives(g: PropertyGraph, pairs: np.ndarray, count: int,
                     rng: np.random.Generator,
                     neighbor_sets: list[set] | None = None) -> np.ndarray:
    """Uniform non-neighbor negatives per edge; never the source or target."""
    if neighbor_sets is None:
        neighbor_sets = _neighbor_sets(g)
    negs = np.empty((len(pairs), count), dtype=np.int64)
    for i, (u, v) in enumerate(np.asarray(pairs).tolist()):
        forbidden = neighbor_sets[u] | {u, v}
        if len(forbidden) >= g.n_nodes:
            raise DataError(f"node {u} has no non-neighbors to sample")
        got = 0
        while got < count:
            draw = rng.integers(0, g.n_nodes, size=2 * (count - got))
            for w in draw.tolist():
                if w not in forbidden:
                    negs[i, got] = w
                    got += 1
                    if got == count:
                        break
    return negs


def predict_labels(logits: np.ndarray, multi_label: bool) -> np.ndarray:
    """Rounded sigmoid per label (multi-label) or one-hot argmax (single)."""
    logits = np.asarray(logits)
    if multi_label:
        return (logits >= 0.0).astype(np.int8)
    pred = np.zeros(logits.shape, dtype=np.int8)
    pred[np.arange(len(logits)), logits.argmax(axis=1)] = 1
    return pred


def embed_nodes(g: PropertyGraph, clusters: ClusterAssignment,
                params: EncoderParams, bias_cfg: BiasConfig,
                ec: EdgeClusterAssignment | None = None,
                nodes: np.ndarray | None = None,
                batch_size: int = 1024, normalize: bool = False) -> np.ndarray:
    """Embedding rows for ``nodes`` under a sample drawn with ``bias_cfg``.

    Pass ``normalize=True`` for link-prediction scoring (unit rows, as
    during training).
    """
    if nodes is None:
        nodes = np.arange(g.n_nodes)
    sampled = sample_neighborhood(g, clusters, bias_cfg, nodes=nodes)
    rows = []
    for lo in range(0, len(nodes), batch_size):
        batch = nodes[lo:lo + batch_size]
        out, _ = encoder.forward(g, sampled, params, batch, ec=ec)
        rows.append(out)
    emb = np.concatenate(rows) if rows else np.empty((0, params.out_dim))
    if normalize:
        emb, _ = normalize_embeddings(emb)
    return emb


def train(g: PropertyGraph, clusters: ClusterAssignment,
          edge_clusters: EdgeClusterAssignment | None,
          cfg: TrainConfig, bias_cfg: BiasConfig, split: NodeSplit):
    """Run the minibatch loop; returns (EncoderParams, per-epoch mean loss)."""
    epochs = cfg.epochs if cfg.epochs is not None else default_epochs(cfg.task, g)
    if cfg.task == NODE_CLASS and g.node_labels is None:
        raise DataError("node classification needs node labels")
    if cfg.task == LINK_PRED and g.n_edges < 1:
        raise DataError("link prediction needs at least one edge")

    mode = encoder.PLAIN if edge_clusters is None else encoder.EDGE_AWARE
    k_e = 0 if edge_clusters is None else edge_clusters.k_e
    if cfg.task == NODE_CLASS:
        d_out = g.label_dim if cfg.out_dim is None else cfg.out_dim
    else:
        d_out = cfg.hidden_dim if cfg.out_dim is None else cfg.out_dim
    params = init_params((g.property_dim, cfg.hidden_dim, d_out), mode,
                         k_e=k_e, seed=derive_seed(cfg.seed, "init"))
    state = init_adam(params)

    if cfg.task == LINK_PRED:
        train_pairs, _, _ = edge_split(g, derive_seed(cfg.seed, "edges"))
        if len(train_pairs) == 0:
            raise DataError("edge split left no training edges")
        nbr_sets = _neighbor_sets(g)

    history: list[float] = []
    for epoch in range(epochs):
        sample_seed = (derive_seed(bias_cfg.seed, "sample", epoch)
                       if cfg.resample_per_epoch else bias_cfg.seed)
        bias_ep = replace(bias_cfg, seed=sample_seed)
        shuffle = np.random.default_rng(derive_seed(cfg.seed, "shuffle", epoch))

        total, weight = 0.0, 0
        if cfg.task == NODE_CLASS:
            sampled = sample_neighborhood(g, clusters, bias_ep,
                                          nodes=split.train)
            order = shuffle.permutation(split.train)
            for lo in range(0, len(order), cfg.batch_size):
                batch = order[lo:lo + cfg.batch_size]
                loss, grads = loss_and_grads(
                    g, sampled, params, batch, g.node_labels[batch],
                    ec=edge_clusters)
                _check_finite(loss, epoch, lo // cfg.batch_size)
                adam_step(params, grads, state, cfg.learning_rate,
                          cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
                total += loss * len(batch)
                weight += len(batch)
        else:
            sampled = sample_neighborhood(g, clusters, bias_ep)
            order = shuffle.permutation(len(train_pairs))
            neg_rng = np.random.default_rng(derive_seed(cfg.seed, "neg", epoch))
            for lo in range(0, len(order), cfg.batch_size):
                pairs = train_pairs[order[lo:lo + cfg.batch_size]]
                negs = sample_negatives(g, pairs, cfg.neg_samples, neg_rng,
                                        neighbor_sets=nbr_sets)
                loss, grads = link_batch_loss_and_grads(
                    g, sampled, params, pairs, negs, ec=edge_clusters)
                _check_finite(loss, epoch, lo // cfg.batch_size)
                adam_step(params, grads, state, cfg.learning_rate,
                          cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
                total += loss * len(pairs)
                weight += len(pairs)
        history.append(total / weight)
    return params, history


def _check_finite(loss: float, epoch: int, batch: int):
    if not np.isfinite(loss):
        raise NumericError(
            f"training diverged: loss={loss} at epoch {epoch}, batch {batch}; "
            "try a smaller learning rate")
