"""Changepoint sweep over every candidate split, the estimate and the
confidence set built from the combined p-values."""

from __future__ import annotations

import math

import numpy as np

from .conformal import BACKWARD, FORWARD, backward_pvalues, forward_pvalues
from .core import ChangepointResult, ConfCurve, IndexOutOfRange, RandomStream, as_array
from .ksdist import DEFAULT_CROSSOVER, ks_sorted, scaled_pvalue
from .scores import ScoreFamily, identity_score

METHODS = ("auto", "fast", "naive")


def combined_pvalue(p_left: float, p_right: float) -> float:
    for name, p in (("p_left", p_left), ("p_right", p_right)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    return min(2.0 * p_left, 2.0 * p_right, 1.0)


def _check_series(series) -> np.ndarray:
    x = as_array(series)
    if x.shape[0] < 2:
        raise ValueError("the sweep needs at least 2 observations")
    return x


def _shared_streams(rng: RandomStream) -> tuple[RandomStream, RandomStream]:
    return rng.child(FORWARD), rng.child(BACKWARD)


def _split_pvalues(t: int, n: int, d_left: float, d_right: float, crossover: int):
    w_l = math.sqrt(t) * d_left
    w_r = math.sqrt(n - t) * d_right
    p_l = scaled_pvalue(t, w_l, crossover)
    p_r = scaled_pvalue(n - t, w_r, crossover)
    return w_l, w_r, p_l, p_r, min(2.0 * p_l, 2.0 * p_r, 1.0)


def _assemble(n: int, d_left: np.ndarray, d_right: np.ndarray, crossover: int) -> ConfCurve:
    cols = np.empty((5, n - 1))
    for t in range(1, n):
        cols[:, t - 1] = _split_pvalues(t, n, d_left[t - 1], d_right[t - 1], crossover)
    return ConfCurve(*cols)


def _prefix_ks(p: np.ndarray, count: int) -> np.ndarray:
    """KS distance of p[:t] to U(0,1) for t = 1..count, by sorted insertion."""
    buf = np.empty(count)
    out = np.empty(count)
    for t in range(1, count + 1):
        v = p[t - 1]
        k = int(np.searchsorted(buf[: t - 1], v, side="right"))
        buf[k + 1:t] = buf[k:t - 1]
        buf[k] = v
        out[t - 1] = ks_sorted(buf[:t])
    return out


def _fast(x: np.ndarray, left: ScoreFamily, right: ScoreFamily, rng: RandomStream, crossover: int) -> ConfCurve:
    n = x.shape[0]
    fwd_rng, bwd_rng = _shared_streams(rng)
    p = forward_pvalues(x, left, upto=n - 1, rng=fwd_rng).values
    # backward windows are context-free here, so one trace serves every t
    q = backward_pvalues(x, right, downto=2, rng=bwd_rng).values
    d_left = _prefix_ks(p, n - 1)
    d_right = _prefix_ks(q[::-1], n - 1)[::-1]
    return _assemble(n, d_left, d_right, crossover)


def _naive(x: np.ndarray, left: ScoreFamily, right: ScoreFamily, rng: RandomStream, crossover: int) -> ConfCurve:
    n = x.shape[0]
    shared = left.context_free and right.context_free
    fwd_rng, bwd_rng = _shared_streams(rng)
    d_left = np.empty(n - 1)
    d_right = np.empty(n - 1)
    for t in range(1, n):
        lr = fwd_rng if shared else rng.child(FORWARD, t)
        rr = bwd_rng if shared else rng.child(BACKWARD, t)
        lt = forward_pvalues(x, left, upto=t, rng=lr, context=x[t:]).values
        rt = backward_pvalues(x, right, downto=t + 1, rng=rr, context=x[:t]).values
        d_left[t - 1] = ks_sorted(np.sort(lt))
        d_right[t - 1] = ks_sorted(np.sort(rt))
    return _assemble(n, d_left, d_right, crossover)


def sweep(series, left_scores: ScoreFamily, right_scores: ScoreFamily, rng: RandomStream,
          method: str = "auto", crossover: int = DEFAULT_CROSSOVER) -> ConfCurve:
    """Combined p-values for every split t = 1..n-1.

    ``method="auto"`` takes the shared-trace path whenever both score
    families are context-free and recomputes per split otherwise.  For
    context-free scores ``"naive"`` still draws the shared theta, so the two
    paths agree bit for bit.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    x = _check_series(series)
    context_free = left_scores.context_free and right_scores.context_free
    if method == "fast" and not context_free:
        raise ValueError("the fast path needs context-free score families")
    if method == "naive" or not context_free:
        return _naive(x, left_scores, right_scores, rng, crossover)
    return _fast(x, left_scores, right_scores, rng, crossover)


def conf_pvalue_at(series, t: int, left_scores: ScoreFamily, right_scores: ScoreFamily,
                   rng: RandomStream, crossover: int = DEFAULT_CROSSOVER) -> tuple[float, float, float]:
    """(p_left, p_right, p_conf) at one split, equal to the sweep's entry for t."""
    x = _check_series(series)
    n = x.shape[0]
    if not 1 <= t <= n - 1:
        raise IndexOutOfRange(f"t={t} must lie in [1, {n - 1}]")
    if left_scores.context_free and right_scores.context_free:
        lr, rr = _shared_streams(rng)
    else:
        lr, rr = rng.child(FORWARD, t), rng.child(BACKWARD, t)
    lt = forward_pvalues(x, left_scores, upto=t, rng=lr, context=x[t:]).values
    rt = backward_pvalues(x, right_scores, downto=t + 1, rng=rr, context=x[:t]).values
    _, _, p_l, p_r, p_c = _split_pvalues(t, n, ks_sorted(np.sort(lt)), ks_sorted(np.sort(rt)), crossover)
    return p_l, p_r, p_c


def estimate(curve: ConfCurve) -> int:
    """argmax of p_conf; the smallest split wins ties."""
    if len(curve) == 0:
        raise ValueError("empty curve")
    return int(np.argmax(curve.p_conf)) + 1


def confidence_set(curve: ConfCurve, alpha: float) -> np.ndarray:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return np.flatnonzero(curve.p_conf > alpha) + 1


def localize(series, left_scores: ScoreFamily | None = None, right_scores: ScoreFamily | None = None,
             alpha: float = 0.05, rng: RandomStream | None = None, method: str = "auto") -> ChangepointResult:
    """Sweep, estimate and confidence set in one call (identity scores by default)."""
    left_scores = left_scores or identity_score()
    right_scores = right_scores or left_scores
    if rng is None:
        raise ValueError("an explicit RandomStream is required")
    curve = sweep(series, left_scores, right_scores, rng, method)
    return ChangepointResult(estimate(curve), alpha, confidence_set(curve, alpha), curve)
