"""Differentiable approximations of P@K, AP and NDCG@K, and training losses.

Each smooth metric replaces the hard "grade of the document at rank r" with
the indicator-weighted grade sum ``u_r = sum_j rel[j] * rows[r, j]`` computed
from the smooth rank indicator rows, so the metric becomes a smooth function
of the scores. The training loss is ``1 - metric`` evaluated on scores
shifted to be strictly positive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .rank_core import UndefinedMetricError, as_relevance, as_scores, ideal_dcg_at_k
from .smoothi import SmoothIParams, smooth_indicators

SMOOTH_P_AT_K = "p@k"
SMOOTH_AP = "ap"
SMOOTH_NDCG_AT_K = "ndcg@k"
LOSS_KINDS = (SMOOTH_P_AT_K, SMOOTH_AP, SMOOTH_NDCG_AT_K)

# AP walks every rank, so its cost is quadratic in list length; lists longer
# than this are truncated to their top-scoring documents (LETOR lists are
# typically well under this).
DEFAULT_AP_LIST_CAP = 128


@dataclass(frozen=True)
class LossSpec:
    """Which smooth metric to optimize, at which cutoff, with which params.

    ``k`` is the metric cutoff; ``None`` means the full list length (used for
    AP and for NDCG without cutoff). AP always walks every rank regardless of
    ``k``. ``shift_margin`` is the minimum value raw scores are shifted to
    before entering the smooth indicator.
    """

    kind: str
    params: SmoothIParams
    k: int | None = None
    shift_margin: float = 1.0
    ap_list_cap: int = DEFAULT_AP_LIST_CAP

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.k is not None and self.k < 1:
            raise ValueError(f"cutoff k must be >= 1, got {self.k}")
        if self.shift_margin <= 0.0:
            raise ValueError(f"shift_margin must be positive, got {self.shift_margin}")
        if self.ap_list_cap < 1:
            raise ValueError(f"ap_list_cap must be >= 1, got {self.ap_list_cap}")

    def resolve_k(self, n: int) -> int:
        """Cutoff for an ``n``-document list; rejects cutoffs past the list end."""
        if self.k is None:
            return n
        if self.k > n:
            raise ValueError(f"cutoff k={self.k} exceeds list length {n}")
        return self.k

    def label(self) -> str:
        if self.kind == SMOOTH_AP:
            return "smooth-ap"
        cut = "N" if self.k is None else str(self.k)
        base = "p" if self.kind == SMOOTH_P_AT_K else "ndcg"
        return f"smooth-{base}@{cut}"


def make_loss_spec(
    kind: str,
    k: int | None = None,
    alpha: float = 1.0,
    delta: float = 0.1,
    grad_mode: str = "stop_gradient",
    shift_margin: float = 1.0,
) -> LossSpec:
    """Convenience constructor building the indicator params alongside."""
    params = SmoothIParams(alpha=alpha, delta=delta, grad_mode=grad_mode)
    return LossSpec(kind=kind, params=params, k=k, shift_margin=shift_margin)


def shift_scores(raw_scores, margin: float = 1.0) -> np.ndarray:
    """Shift scores so the minimum equals ``margin`` (> 0), preserving order.

    The smooth indicator requires strictly positive scores; adding a constant
    never changes the ranking. Ties survive the shift, which strict-mode
    consumers will reject, hence the warning.
    """
    arr = as_scores(raw_scores)
    if margin <= 0.0:
        raise ValueError(f"margin must be positive, got {margin}")
    out = arr - arr.min() + margin
    if np.unique(out).size != out.size:
        warnings.warn("shifted scores contain ties; strict-mode consumers will reject them")
    return out


def _ap_truncation(scores: np.ndarray, cap: int) -> np.ndarray | None:
    """Indices of the top-``cap`` documents when the list is longer, else None."""
    if scores.size <= cap:
        return None
    return np.argsort(-scores, kind="stable")[:cap]


def metric_from_weighted_sums(u: np.ndarray, kind: str, k: int, rel_total: float, ideal: float) -> float:
    """Evaluate a smooth metric given the weighted row sums ``u``.

    Shared by the forward path, the analytic gradients, and the
    finite-difference harness (which re-evaluates it on perturbed rows).
    """
    if kind == SMOOTH_P_AT_K:
        return float(u[:k].sum() / k)
    if kind == SMOOTH_AP:
        prec = np.cumsum(u) / np.arange(1.0, u.size + 1.0)
        return float((u * prec).sum() / rel_total)
    if kind == SMOOTH_NDCG_AT_K:
        gains = np.exp2(u[:k]) - 1.0
        return float((gains / np.log2(np.arange(2.0, k + 2.0))).sum() / ideal)
    raise ValueError(f"unknown loss kind {kind!r}")


def _prepare(rel, scores, spec: LossSpec):
    """Validate inputs and assemble everything the metric value needs."""
    arr = as_scores(scores)
    n = arr.size
    if spec.kind == SMOOTH_P_AT_K:
        rel = as_relevance(rel, n, binary=True)
        k = spec.resolve_k(n)
        return rel, arr, k, 0.0, 1.0, None
    if spec.kind == SMOOTH_AP:
        rel = as_relevance(rel, n, binary=True)
        rel_total = float(rel.sum())
        if rel_total == 0.0:
            raise UndefinedMetricError("smooth AP is undefined: no relevant document")
        keep = _ap_truncation(arr, spec.ap_list_cap)
        if keep is not None:
            rel, arr = rel[keep], arr[keep]
        return rel, arr, arr.size, rel_total, 1.0, keep
    rel = as_relevance(rel, n)
    k = spec.resolve_k(n)
    ideal = ideal_dcg_at_k(rel, k)
    if ideal == 0.0:
        raise UndefinedMetricError("smooth NDCG is undefined: all relevance grades are zero")
    return rel, arr, k, 0.0, ideal, None


def smooth_metric(rel, scores, spec: LossSpec) -> float:
    """Smooth P@K / AP / NDCG@K of strictly positive scores.

    P@K stays in [0, 1] for any parameters. AP and NDCG@K can slightly
    exceed 1 when alpha is too small for the score gaps (split indicator
    mass lets a document be re-selected at several ranks); above the
    certificate threshold they sit within the proven distance of the exact
    metric, hence effectively in [0, 1].
    """
    rel, arr, k, rel_total, ideal, _ = _prepare(rel, scores, spec)
    mat = smooth_indicators(arr, spec.params.with_k(k))
    u = mat.rows @ rel
    return metric_from_weighted_sums(u, spec.kind, k, rel_total, ideal)


def smooth_precision_at_k(rel, scores, spec: LossSpec) -> float:
    if spec.kind != SMOOTH_P_AT_K:
        raise ValueError(f"spec kind is {spec.kind!r}, expected {SMOOTH_P_AT_K!r}")
    return smooth_metric(rel, scores, spec)


def smooth_ap(rel, scores, params: SmoothIParams, ap_list_cap: int = DEFAULT_AP_LIST_CAP) -> float:
    return smooth_metric(rel, scores, LossSpec(kind=SMOOTH_AP, params=params, ap_list_cap=ap_list_cap))


def smooth_ndcg_at_k(rel, scores, spec: LossSpec) -> float:
    if spec.kind != SMOOTH_NDCG_AT_K:
        raise ValueError(f"spec kind is {spec.kind!r}, expected {SMOOTH_NDCG_AT_K!r}")
    return smooth_metric(rel, scores, spec)


def training_loss(rel, raw_scores, spec: LossSpec) -> float:
    """``1 - smooth_metric`` on shifted scores, minimized at a perfect ranking.

    In [0, 1] for P@K; the AP/NDCG losses can dip slightly below 0 in the
    under-sharpened regime where the metric overshoots 1 (see smooth_metric).
    """
    return 1.0 - smooth_metric(rel, shift_scores(raw_scores, spec.shift_margin), spec)
