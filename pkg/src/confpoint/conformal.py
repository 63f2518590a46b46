"""Sequential randomized conformal p-values and the weighted-rank deviation.

Convention: p_r counts scores *strictly greater* than the current one, plus
a theta-weighted share of ties (the current point always ties with itself).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import as_array

FORWARD = 0
BACKWARD = 1


class DegenerateWeights(ValueError):
    pass


@dataclass(frozen=True)
class PValueTrace:
    """p-values in position order; ``positions`` are 1-based indices."""

    values: np.ndarray
    positions: np.ndarray
    direction: str
    theta_path: tuple[int, ...] | None = None

    def __len__(self) -> int:
        return int(self.values.shape[0])


def greater_and_ties_before(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For every r: #{j <= r : v_j > v_r} and #{j <= r : v_j == v_r}.

    Bottom-up merge counting, one vectorised pass per level, so the cost is
    O(n log^2 n) inside numpy instead of a Python-level tree walk.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros(0)
    _, ranks = np.unique(v, return_inverse=True)
    ranks = ranks.astype(np.int64).reshape(-1)

    # ties: 1-based occurrence number of each value so far
    order = np.argsort(ranks, kind="stable")
    sr = ranks[order]
    starts = np.r_[0, np.flatnonzero(sr[1:] != sr[:-1]) + 1]
    group_start = np.repeat(starts, np.diff(np.r_[starts, n]))
    ties = np.empty(n, dtype=np.int64)
    ties[order] = np.arange(n) - group_start + 1

    size = 1
    while size < n:
        size *= 2
    vals = np.full(size, -1, dtype=np.int64)  # padding sits after every real point
    vals[:n] = ranks
    pos = np.arange(size)
    greater = np.zeros(size, dtype=np.int64)
    radix = int(ranks.max()) + 2

    half = 1
    while half < size:
        nb = size // (2 * half)
        blocks = vals.reshape(nb, 2, half)
        bpos = pos.reshape(nb, 2, half)
        offset = (np.arange(nb, dtype=np.int64) * radix)[:, None]
        left_keys = (blocks[:, 0, :] + 1 + offset).ravel()
        right_keys = (blocks[:, 1, :] + 1 + offset).ravel()
        n_le = np.searchsorted(left_keys, right_keys, side="right")
        n_le -= np.repeat(np.arange(nb) * half, half)
        greater[bpos[:, 1, :].ravel()] += half - n_le
        merged = vals.reshape(nb, 2 * half)
        perm = np.argsort(merged, axis=1, kind="stable")
        vals = np.take_along_axis(merged, perm, axis=1).ravel()
        pos = np.take_along_axis(pos.reshape(nb, 2 * half), perm, axis=1).ravel()
        half *= 2
    return greater[:n].astype(np.float64), ties.astype(np.float64)


def _theta(rng, count: int) -> np.ndarray:
    if rng is None:
        raise ValueError("theta draws need a RandomStream or an explicit array")
    if hasattr(rng, "uniforms"):
        return np.asarray(rng.uniforms(count), dtype=np.float64)
    theta = np.asarray(rng, dtype=np.float64).reshape(-1)
    if theta.shape[0] < count:
        raise ValueError(f"need {count} theta draws, got {theta.shape[0]}")
    return theta


def _path(rng):
    return getattr(rng, "path", None)


def _context_free_forward(kappa: np.ndarray, theta: np.ndarray) -> np.ndarray:
    g, e = greater_and_ties_before(kappa)
    r = np.arange(1, kappa.shape[0] + 1, dtype=np.float64)
    return (g + theta[: kappa.shape[0]] * e) / r


def forward_pvalues(series, scores, upto: int | None = None, rng=None, *, context=None) -> PValueTrace:
    """Conformal p-values p_1..p_t of each prefix's newest point.

    ``rng`` is a :class:`RandomStream` (theta_r is its r-th draw) or an
    explicit array of theta values.  ``context`` is passed as the third
    score argument for context-dependent families; it defaults to the
    observations after ``upto``.
    """
    x = as_array(series)
    n = x.shape[0]
    t = n if upto is None else int(upto)
    if not 1 <= t <= n:
        raise ValueError(f"upto must lie in [1, {n}]")
    theta = _theta(rng, t)
    if scores.context_free:
        vals = _context_free_forward(np.asarray(scores(x[:t]), dtype=np.float64), theta)
    else:
        ctx = x[t:] if context is None else as_array(context)
        vals = np.empty(t)
        for r in range(1, t + 1):
            bag = x[:r]
            kappa = np.asarray(scores(bag, bag, ctx), dtype=np.float64)
            vals[r - 1] = _rank_pvalue(kappa, r - 1, theta[r - 1])
    return PValueTrace(vals, np.arange(1, t + 1), "forward", _path(rng))


def backward_pvalues(series, scores, downto: int = 1, rng=None, *, context=None) -> PValueTrace:
    """Conformal p-values over suffix windows {X_r..X_n}, r = n down to ``downto``.

    theta for position r is draw r-1 of the stream, so position r uses the
    same theta whatever ``downto`` is.  For context-dependent families the
    bag is the window itself (mirroring the forward construction) and the
    context defaults to X_1..X_{downto-1}.
    """
    x = as_array(series)
    n = x.shape[0]
    start = int(downto)
    if not 1 <= start <= n:
        raise ValueError(f"downto must lie in [1, {n}]")
    theta = _theta(rng, n)
    if scores.context_free:
        kappa = np.asarray(scores(x[start - 1:]), dtype=np.float64)
        rev = _context_free_forward(kappa[::-1], theta[start - 1:n][::-1])
        vals = rev[::-1].copy()
    else:
        ctx = x[: start - 1] if context is None else as_array(context)
        vals = np.empty(n - start + 1)
        for r in range(start, n + 1):
            window = x[r - 1:]
            kappa = np.asarray(scores(window, window, ctx), dtype=np.float64)
            vals[r - start] = _rank_pvalue(kappa, 0, theta[r - 1])
    return PValueTrace(vals, np.arange(start, n + 1), "backward", _path(rng))


def _rank_pvalue(kappa: np.ndarray, at: int, theta: float) -> float:
    ref = kappa[at]
    g = np.float64(np.count_nonzero(kappa > ref))
    e = np.float64(np.count_nonzero(kappa == ref))
    return (g + theta * e) / np.float64(kappa.shape[0])


def pvalue_deviation(sorted_series, ratio: Callable) -> float:
    """max_i | sum_{j<=i} w_(j) / sum_j w_(j) - i/n | with w = ratio(X_(j)).

    This equals sup_t |F(t) - t| for the conditional law of the last
    point's conformal p-value when ``ratio`` is the post/pre likelihood
    ratio, so it is 0 exactly when the ratio is constant.
    """
    x = as_array(sorted_series)
    if x.shape[0] == 0:
        raise ValueError("empty series")
    if np.any(np.diff(x) < 0):
        raise ValueError("series must be sorted ascending")
    w = np.asarray(ratio(x), dtype=np.float64) * np.ones_like(x)
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("ratio must be finite and non-negative")
    total = w.sum()
    if total <= 0.0:
        raise DegenerateWeights("ratio sums to zero over the sample")
    n = x.shape[0]
    cum = np.cumsum(w) / total
    return float(np.max(np.abs(cum - np.arange(1, n + 1) / n)))
