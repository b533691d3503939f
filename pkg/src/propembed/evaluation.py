"""Embedding quality metrics: micro/macro F1 and mean reciprocal rank."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import PropertyGraph

__all__ = [
    "Metrics",
    "f1_scores",
    "mrr",
    "rank_of_true",
    "rank_link_queries",
    "build_link_queries",
]


@dataclass
class Metrics:
    f1_micro: float | None = None
    f1_macro: float | None = None
    mrr: float | None = None
    n_evaluated: int = 0

    def __post_init__(self):
        for name in ("f1_micro", "f1_macro"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise DataError(f"{name} out of range: {v}")
        if self.mrr is not None and not 0.0 < self.mrr <= 1.0:
            raise DataError(f"mrr out of range: {self.mrr}")
        if self.n_evaluated <= 0:
            raise DataError("n_evaluated must be positive")

    def to_json_line(self, **metadata) -> str:
        record = {k: v for k, v in vars(self).items() if v is not None}
        record.update(metadata)
        return json.dumps(record, sort_keys=True)


def f1_scores(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """Micro and macro F1 over 0/1 indicator matrices.

    Micro pools TP/FP/FN over all entries; macro averages per-class F1,
    scoring 0 for classes with an empty denominator.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DataError("pred and truth must share a shape")
    if pred.ndim != 2:
        raise DataError("expected 2-D indicator matrices")
    if np.any(truth.sum(axis=1) < 1):
        raise DataError("every truth row needs at least one positive")
    pred = pred.astype(bool)
    truth = truth.astype(bool)
    tp = (pred & truth).sum(axis=0).astype(np.float64)
    fp = (pred & ~truth).sum(axis=0).astype(np.float64)
    fn = (~pred & truth).sum(axis=0).astype(np.float64)

    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = 2 * tp.sum() / denom if denom > 0 else 0.0
    per_class_denom = 2 * tp + fp + fn
    per_class = np.divide(2 * tp, per_class_denom,
                          out=np.zeros_like(tp), where=per_class_denom > 0)
    return float(micro), float(per_class.mean())


def mrr(ranks) -> float:
    """Mean of 1/rank over ranking queries."""
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise DataError("no ranks to average")
    if np.any(ranks < 1):
        raise DataError("ranks must be >= 1")
    return float((1.0 / ranks).mean())


def rank_of_true(scores: np.ndarray, true_index: int) -> int:
    """Pessimistic rank: 1 + number of other candidates scoring >= true."""
    scores = np.asarray(scores, dtype=np.float64)
    true_score = scores[true_index]
    others = np.delete(scores, true_index)
    return int(1 + (others >= true_score).sum())


def rank_link_queries(emb: np.ndarray, queries) -> list[int]:
    """Rank the true target among candidates by source dot-product score.

    Each query is ``(source, true_target, candidate_ids)`` where the
    candidates include the true target. Ties count against the true
    target.
    """
    emb = np.asarray(emb)
    ranks = []
    for source, true_target, candidates in queries:
        candidates = np.asarray(candidates)
        if len(candidates) < 2:
            raise DataError("need at least two candidates")
        hits = np.flatnonzero(candidates == true_target)
        if len(hits) == 0:
            raise DataError("candidate set does not contain the true target")
        scores = emb[candidates] @ emb[source]
        ranks.append(rank_of_true(scores, int(hits[0])))
    return ranks


def build_link_queries(g: PropertyGraph, pairs: np.ndarray, seed: int,
                       n_candidates: int = 100) -> list[tuple]:
    """One query per held-out edge: true target plus sampled non-neighbors."""
    rng = np.random.default_rng(seed)
    nbr_sets = [set(g.out_row(v).tolist()) for v in range(g.n_nodes)]
    if g.directed:
        for v in range(g.n_nodes):
            nbr_sets[v].update(g.in_row(v).tolist())
    queries = []
    for u, v in np.asarray(pairs).tolist():
        allowed = np.array(sorted(set(range(g.n_nodes)) - nbr_sets[u]
                                  - {u, v}), dtype=np.int64)
        take = min(n_candidates - 1, len(allowed))
        if take < 1:
            continue
        sampled = rng.choice(allowed, size=take, replace=False)
        queries.append((u, v, np.concatenate([[v], sampled])))
    if not queries:
        raise DataError("no usable link queries (graph too dense)")
    return queries
