"""Exact (non-differentiable) ranking primitives and IR metrics.

Hard rank indicators obtained by sorting, plus exact P@K, AP and NDCG@K.
These serve both as evaluation metrics and as the reference values that the
smooth approximations converge to.
"""

from __future__ import annotations

import math

import numpy as np


class UndefinedMetricError(ValueError):
    """The metric has no defined value for this query (zero relevance)."""


def as_scores(scores, strict: bool = False) -> np.ndarray:
    """Validate a score vector and return it as a float64 array.

    With ``strict=True`` the scores must additionally be strictly positive
    and pairwise distinct, which is what the smooth-indicator error bounds
    assume.
    """
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"scores must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores contain NaN or Inf")
    if strict:
        if np.any(arr <= 0.0):
            raise ValueError("strict mode requires strictly positive scores")
        if np.unique(arr).size != arr.size:
            raise ValueError("strict mode requires pairwise distinct scores (ties present)")
    return arr


def as_relevance(rel, n: int, binary: bool = False) -> np.ndarray:
    """Validate a relevance-grade vector paired with ``n`` scores."""
    arr = np.asarray(rel, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"relevance has shape {arr.shape}, expected ({n},)")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
        raise ValueError("relevance grades must be finite and non-negative")
    if binary and not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError("binary relevance required, got graded values")
    return arr


def rank_permutation(scores) -> np.ndarray:
    """Document indices in descending score order, ties broken by index."""
    arr = as_scores(scores)
    return np.argsort(-arr, kind="stable")


def hard_indicator(scores, r: int) -> np.ndarray:
    """One-hot vector marking the document at rank ``r`` (1-based)."""
    arr = as_scores(scores)
    if not 1 <= r <= arr.size:
        raise ValueError(f"rank r={r} out of range [1, {arr.size}]")
    out = np.zeros(arr.size)
    out[rank_permutation(arr)[r - 1]] = 1.0
    return out


def hard_indicator_matrix(scores, k: int) -> np.ndarray:
    """Hard indicators for ranks 1..k stacked into a (k, n) 0/1 matrix."""
    arr = as_scores(scores)
    if not 1 <= k <= arr.size:
        raise ValueError(f"k={k} out of range [1, {arr.size}]")
    perm = rank_permutation(arr)
    out = np.zeros((k, arr.size))
    out[np.arange(k), perm[:k]] = 1.0
    return out


def precision_at_k(rel, scores, k: int) -> float:
    """Fraction of relevant documents among the top ``k`` by score."""
    arr = as_scores(scores)
    rel = as_relevance(rel, arr.size, binary=True)
    if not 1 <= k <= arr.size:
        raise ValueError(f"k={k} out of range [1, {arr.size}]")
    perm = rank_permutation(arr)
    return float(rel[perm[:k]].sum() / k)


def average_precision(rel, scores) -> float:
    """Mean of P@k over the ranks k holding a relevant document."""
    arr = as_scores(scores)
    rel = as_relevance(rel, arr.size, binary=True)
    total = rel.sum()
    if total == 0.0:
        raise UndefinedMetricError("AP is undefined: no relevant document")
    ranked = rel[rank_permutation(arr)]
    prec = np.cumsum(ranked) / np.arange(1, arr.size + 1)
    # fsum: the sum is exactly rounded, not summation-order dependent
    return math.fsum(ranked * prec) / total


def ideal_dcg_at_k(rel, k: int) -> float:
    """DCG@k of the best possible ordering (grades sorted descending)."""
    arr = np.asarray(rel, dtype=np.float64)
    top = np.sort(arr)[::-1][:k]
    return math.fsum((np.exp2(top) - 1.0) / np.log2(np.arange(2.0, top.size + 2.0)))


def ndcg_at_k(rel, scores, k: int) -> float:
    """DCG@k of the score-induced ordering, normalized by the ideal DCG@k.

    Gains are 2^grade - 1 with a log2(rank + 1) position discount; grades may
    be non-binary.
    """
    arr = as_scores(scores)
    rel = as_relevance(rel, arr.size)
    if not 1 <= k <= arr.size:
        raise ValueError(f"k={k} out of range [1, {arr.size}]")
    ideal = ideal_dcg_at_k(rel, k)
    if ideal == 0.0:
        raise UndefinedMetricError("NDCG is undefined: all relevance grades are zero")
    perm = rank_permutation(arr)
    gains = np.exp2(rel[perm[:k]]) - 1.0
    dcg = math.fsum(gains / np.log2(np.arange(2.0, k + 2.0)))
    return dcg / ideal
