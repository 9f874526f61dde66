"""Smooth rank indicators: a recursive softmax relaxation of hard ranking.

Row 1 is a temperature-scaled softmax over the document scores, approximating
the one-hot indicator of the top document. Each subsequent row damps the
documents captured by earlier rows through the factor
``(1 - previous_row - delta)`` applied multiplicatively to the scores, then
re-runs the softmax, approximating the indicator of "the document at rank r".
Larger ``alpha`` sharpens every row toward the exact indicator; ``delta`` in
(0, 0.5) controls how strongly already-selected documents are pushed down.

The recursion is evaluated iteratively rank by rank with the damping prefix
products cached, so computing K rows over N documents costs O(K*N) time and
memory instead of the exponential blowup of the naive recursive expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .rank_core import as_scores

FULL = "full"
STOP_GRADIENT = "stop_gradient"
GRAD_MODES = (FULL, STOP_GRADIENT)


@dataclass(frozen=True)
class SmoothIParams:
    """Hyperparameters of the smooth rank indicator.

    ``alpha``: inverse temperature (> 0); ``delta``: damping in (0, 0.5);
    ``k``: number of rows to compute, ``None`` meaning the full list length;
    ``grad_mode``: whether gradients flow through the damping prefix products
    ("full") or treat them as constants ("stop_gradient", the production
    default). The forward values are identical in both modes.
    """

    alpha: float
    delta: float = 0.1
    k: int | None = None
    grad_mode: str = STOP_GRADIENT

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in the open interval (0, 0.5), got {self.delta}")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}, got {self.grad_mode!r}")

    def resolve_k(self, n: int) -> int:
        k = n if self.k is None else self.k
        if k > n:
            raise ValueError(f"k={k} exceeds list length {n}")
        return k

    def with_k(self, k: int | None) -> "SmoothIParams":
        return replace(self, k=k)


@dataclass
class SmoothIndicatorMatrix:
    """Smooth indicator rows plus the cached damping prefix products.

    ``rows[r-1, j]`` approximates "document j sits at rank r"; every row is a
    softmax output summing to 1. ``prefix_products[r-1, j]`` is the product of
    ``(1 - rows[l-1, j] - delta)`` over l < r (all ones for r=1), cached
    because the analytic gradients reuse it. Written once, read-only after.
    """

    rows: np.ndarray
    prefix_products: np.ndarray
    scores: np.ndarray
    params: SmoothIParams

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]


def stable_softmax(logits) -> np.ndarray:
    """Softmax computed with the max logit subtracted, so exponents stay <= 0."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"logits must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("logits contain NaN or Inf")
    exps = np.exp(arr - arr.max())
    return exps / exps.sum()


def smooth_indicators(scores, params: SmoothIParams) -> SmoothIndicatorMatrix:
    """Compute rows 1..k of the smooth rank indicator for one score list.

    Scores must be strictly positive (the recursion relies on positivity to
    keep damped documents below undamped ones); shift raw model outputs with
    :func:`smoothrank.smooth_metrics.shift_scores` first.
    """
    arr = as_scores(scores)
    if np.any(arr <= 0.0):
        raise ValueError("smooth indicators require strictly positive scores; shift them first")
    k = params.resolve_k(arr.size)
    rows = np.empty((k, arr.size))
    prefixes = np.empty((k, arr.size))
    prefix = np.ones(arr.size)
    for r in range(k):
        prefixes[r] = prefix
        rows[r] = stable_softmax(params.alpha * arr * prefix)
        prefix = prefix * (1.0 - rows[r] - params.delta)
    return SmoothIndicatorMatrix(rows=rows, prefix_products=prefixes, scores=arr, params=params)
