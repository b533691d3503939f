"""Shared helpers for the test suite: tiny graph builders and oracles."""

from __future__ import annotations

import numpy as np

from propembed.graph import PropertyGraph


def graph_from_edges(n_nodes, undirected_edges, props=None, directed=False,
                     edge_props=None, node_labels=None, edge_labels=None):
    """Build a PropertyGraph from an undirected (or directed) edge list.

    For undirected graphs each input pair is mirrored; per-edge data is
    duplicated onto both slots.
    """
    pairs = list(undirected_edges)
    src, dst, rows, labels = [], [], [], []
    for idx, (u, w) in enumerate(pairs):
        if directed:
            ends = [(u, w)]
        else:
            ends = [(u, w), (w, u)]
        for a, b in ends:
            src.append(a)
            dst.append(b)
            if edge_props is not None:
                rows.append(edge_props[idx])
            if edge_labels is not None:
                labels.append(edge_labels[idx])
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    order = np.argsort(src, kind="stable")
    offsets = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    offsets = np.cumsum(offsets)

    in_offsets = in_targets = in_slots = None
    if directed:
        sorted_src = src[order]
        sorted_dst = dst[order]
        in_order = np.argsort(sorted_dst, kind="stable")
        in_offsets = np.zeros(n_nodes + 1, dtype=np.int64)
        np.add.at(in_offsets, sorted_dst + 1, 1)
        in_offsets = np.cumsum(in_offsets)
        in_targets = sorted_src[in_order].astype(np.int32)
        in_slots = in_order.astype(np.int32)

    if props is None:
        props = np.arange(n_nodes, dtype=np.float64)[:, None] + 1.0
    eprops = None
    if edge_props is not None:
        eprops = np.asarray(rows, dtype=np.float64)[order]
    elabels = None
    if edge_labels is not None:
        elabels = np.asarray(labels, dtype=np.int64)[order]
    return PropertyGraph(
        n_nodes=n_nodes, n_edges=len(src), directed=directed,
        out_offsets=offsets, out_targets=dst[order].astype(np.int32),
        in_offsets=in_offsets, in_targets=in_targets, in_slots=in_slots,
        node_props=np.asarray(props, dtype=np.float64),
        edge_props=eprops, node_labels=node_labels, edge_labels=elabels)


def numeric_param_gradients(loss_fn, params, h=1e-6):
    """Central finite differences of ``loss_fn()`` w.r.t. every parameter."""
    grads = []
    for _, arr in params.arrays():
        flat = arr.ravel()
        g = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            g[i] = (lp - lm) / (2.0 * h)
        grads.append(g.reshape(arr.shape))
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def brute_force_f1(pred, truth):
    """Loop-based confusion tally, independent of the library implementation."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    n, c = truth.shape
    tp = [0] * c
    fp = [0] * c
    fn = [0] * c
    for i in range(n):
        for j in range(c):
            if pred[i, j] and truth[i, j]:
                tp[j] += 1
            elif pred[i, j] and not truth[i, j]:
                fp[j] += 1
            elif not pred[i, j] and truth[i, j]:
                fn[j] += 1
    tp_sum, fp_sum, fn_sum = sum(tp), sum(fp), sum(fn)
    micro = 2 * tp_sum / (2 * tp_sum + fp_sum + fn_sum) \
        if (2 * tp_sum + fp_sum + fn_sum) else 0.0
    per_class = []
    for j in range(c):
        denom = 2 * tp[j] + fp[j] + fn[j]
        per_class.append(2 * tp[j] / denom if denom else 0.0)
    return micro, sum(per_class) / c
