"""Analytic gradients of the smooth ranking losses, with a finite-difference
verifier whose oracle matches the gradient convention being checked.

In stop-gradient mode (the production default) the damping prefix products
are constants in the backward pass, so each indicator row differentiates
exactly like a softmax whose logits are ``alpha * score * frozen_prefix``.
In full mode the backward pass also walks the recursion, accumulating rank
by rank the gradient that flows through the prefix products themselves.

The finite-difference check has to differentiate the same function the
chosen mode defines: for stop-gradient mode it perturbs the scores inside
the softmax rows while the prefix products stay pinned at their base-point
values; perturbing the full recursion there would measure a different
derivative. The positivity shift is handled alike in both modes: the
subtracted minimum is piecewise constant in the scores, so it is treated as
a constant (its almost-everywhere derivative) and frozen at the base point
during differencing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .rank_core import as_scores
from .smoothi import STOP_GRADIENT, SmoothIndicatorMatrix, smooth_indicators, stable_softmax
from .smooth_metrics import (
    SMOOTH_AP,
    SMOOTH_NDCG_AT_K,
    SMOOTH_P_AT_K,
    LossSpec,
    _prepare,
    metric_from_weighted_sums,
    shift_scores,
)

LN2 = float(np.log(2.0))

# max_rel_err normalizes by max(|analytic|, |numeric|, this floor), the
# magnitudes of the two gradient vectors. Per-component normalization is not
# meaningful at finite h: a component whose true derivative is below roughly
# ulp(loss)/(2h) ~ 1e-12 cannot be resolved by differencing at all.
REL_ERR_FLOOR = 1e-8


@dataclass
class GradientReport:
    """Analytic-versus-numeric comparison for one loss on one instance."""

    analytic: np.ndarray
    numeric: np.ndarray
    max_abs_err: float
    max_rel_err: float
    step_h: float


def _upstream_coeffs(u: np.ndarray, kind: str, k: int, rel_total: float, ideal: float) -> np.ndarray:
    """Per-rank derivative of the metric wrt the weighted row sum u_r."""
    if kind == SMOOTH_P_AT_K:
        return np.full(k, 1.0 / k)
    if kind == SMOOTH_AP:
        ranks = np.arange(1.0, u.size + 1.0)
        prec = np.cumsum(u) / ranks
        # u_t appears directly against prec_t and inside prec_k for all k >= t
        tail = np.cumsum((u / ranks)[::-1])[::-1]
        return (prec + tail) / rel_total
    if kind == SMOOTH_NDCG_AT_K:
        discounts = np.log2(np.arange(2.0, k + 2.0))
        return LN2 * np.exp2(u[:k]) / (discounts * ideal)
    raise ValueError(f"unknown loss kind {kind!r}")


def _softmax_rows_backward_stop(mat: SmoothIndicatorMatrix, upstream: np.ndarray) -> np.ndarray:
    """dL/dS with the prefix products held constant (stop-gradient semantics)."""
    rows = mat.rows
    inner = (upstream * rows).sum(axis=1, keepdims=True)
    dz = rows * (upstream - inner)
    return mat.params.alpha * (mat.prefix_products * dz).sum(axis=0)


def _softmax_rows_backward_full(mat: SmoothIndicatorMatrix, upstream: np.ndarray) -> np.ndarray:
    """dL/dS through the complete recursion, accumulated from the last rank up.

    ``q`` carries dL/d(prefix of rank r+1); each step routes it into the
    current row (prefixes multiply the row's logits) and into the next-lower
    prefix (prefixes chain by the factor ``1 - row - delta``).
    """
    rows, prefixes = mat.rows, mat.prefix_products
    alpha, delta = mat.params.alpha, mat.params.delta
    scores = mat.scores
    k, n = rows.shape
    ds = np.zeros(n)
    q = np.zeros(n)
    for r in range(k - 1, -1, -1):
        a = upstream[r] - q * prefixes[r]
        dz = rows[r] * (a - a @ rows[r])
        ds += alpha * prefixes[r] * dz
        q = alpha * scores * dz + q * (1.0 - rows[r] - delta)
    return ds


def _check_indicators(mat: SmoothIndicatorMatrix, scores: np.ndarray, spec: LossSpec, k: int):
    p = mat.params
    if (
        mat.k != k
        or p.alpha != spec.params.alpha
        or p.delta != spec.params.delta
        or p.grad_mode != spec.params.grad_mode
        or not np.array_equal(mat.scores, scores)
    ):
        raise ValueError("cached indicator matrix does not match the requested loss/scores")


def _value_and_gradient(rel, scores, spec: LossSpec, indicators=None):
    """Smooth metric value and its gradient wrt the (positive) scores."""
    rel2, arr, k, rel_total, ideal, keep = _prepare(rel, scores, spec)
    if indicators is None:
        mat = smooth_indicators(arr, spec.params.with_k(k))
    else:
        _check_indicators(indicators, arr, spec, k)
        mat = indicators
    u = mat.rows @ rel2
    value = metric_from_weighted_sums(u, spec.kind, k, rel_total, ideal)
    upstream = np.outer(_upstream_coeffs(u, spec.kind, k, rel_total, ideal), rel2)
    if spec.params.grad_mode == STOP_GRADIENT:
        grad = _softmax_rows_backward_stop(mat, upstream)
    else:
        grad = _softmax_rows_backward_full(mat, upstream)
    if keep is not None:
        full = np.zeros(np.asarray(scores).size)
        full[keep] = grad
        grad = full
    return value, grad


def metric_gradient(rel, scores, spec: LossSpec, indicators: SmoothIndicatorMatrix | None = None) -> np.ndarray:
    """Gradient of the smooth metric wrt strictly positive scores.

    ``indicators`` may pass a precomputed matrix for the same scores and
    params; a mismatched one is rejected.
    """
    return _value_and_gradient(rel, scores, spec, indicators)[1]


def loss_and_gradient(rel, raw_scores, spec: LossSpec) -> tuple[float, np.ndarray]:
    """Training-loss value and gradient wrt the raw (unshifted) scores."""
    shifted = shift_scores(raw_scores, spec.shift_margin)
    value, grad = _value_and_gradient(rel, shifted, spec)
    return 1.0 - value, -grad


def loss_gradient(rel, raw_scores, spec: LossSpec, indicators: SmoothIndicatorMatrix | None = None) -> np.ndarray:
    """Gradient of ``training_loss`` wrt the raw scores (shift treated as a
    constant offset)."""
    shifted = shift_scores(raw_scores, spec.shift_margin)
    return -_value_and_gradient(rel, shifted, spec, indicators)[1]


def finite_difference_check(rel, raw_scores, spec: LossSpec, h: float = 1e-4) -> GradientReport:
    """Central differences of the mode-consistent loss versus the analytic
    gradient.

    For stop-gradient mode the compared function recomputes every softmax row
    from perturbed scores but keeps the prefix products (and the shift's
    subtracted minimum, in both modes) fixed at their base-point values.
    """
    raw = as_scores(raw_scores)
    if not 1e-6 <= h <= 1e-2:
        warnings.warn(f"step h={h} outside [1e-6, 1e-2]; truncation or cancellation may dominate")
    analytic = loss_gradient(rel, raw, spec)

    offset = spec.shift_margin - raw.min()
    base = raw + offset
    rel2, arr0, k, rel_total, ideal, keep = _prepare(rel, base, spec)
    if spec.params.grad_mode == STOP_GRADIENT:
        frozen = smooth_indicators(arr0, spec.params.with_k(k)).prefix_products
    else:
        frozen = None

    def loss_at(shifted: np.ndarray) -> float:
        sub = shifted if keep is None else shifted[keep]
        if frozen is not None:
            rows = np.empty_like(frozen)
            for r in range(k):
                rows[r] = stable_softmax(spec.params.alpha * sub * frozen[r])
        else:
            rows = smooth_indicators(sub, spec.params.with_k(k)).rows
        u = rows @ rel2
        return 1.0 - metric_from_weighted_sums(u, spec.kind, k, rel_total, ideal)

    numeric = np.empty(raw.size)
    for j in range(raw.size):
        step = np.zeros(raw.size)
        step[j] = h
        numeric[j] = (loss_at(base + step) - loss_at(base - step)) / (2.0 * h)

    max_abs_err = float(np.abs(analytic - numeric).max())
    denom = max(float(np.abs(analytic).max()), float(np.abs(numeric).max()), REL_ERR_FLOOR)
    return GradientReport(
        analytic=analytic,
        numeric=numeric,
        max_abs_err=max_abs_err,
        max_rel_err=max_abs_err / denom,
        step_h=h,
    )
