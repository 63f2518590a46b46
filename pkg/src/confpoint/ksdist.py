"""Kolmogorov-Smirnov distance to U(0,1) and the null law of sqrt(m) * D_m.

For ``m <= crossover`` the CDF is computed exactly with the
Marsaglia-Tsang-Wang matrix method (Durbin's matrix, powered by repeated
squaring with running rescaling).  Far in the upper tail the one-sided
Smirnov probability ``s = P(D_m^+ >= d)`` is exact and cheap, and the
two-sided survival function lies in ``[2s - s**2, 2s]`` (the events
``D^+ >= d`` and ``D^- >= d`` are monotone in opposite directions, hence
negatively correlated); once ``s**2`` is below double-precision resolution
the two routes agree and the cheap one is used.

Above the crossover the Kolmogorov limit is used, evaluated at
``w + 1/(6 sqrt(m))``, the first-order finite-sample correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp

DEFAULT_CROSSOVER = 1000
QUANTILE_TOL = 1e-10
_TAIL_S_MAX = 1e-7
_SERIES_TOL = 1e-12


class EmptyInput(ValueError):
    pass


class OutOfRange(ValueError):
    def __init__(self, index: int):
        super().__init__(f"p-value at index {index} is outside [0, 1]")
        self.index = index


def ks_statistic(pvals) -> float:
    """sup_z |F_hat(z) - z| for a sample in [0, 1]."""
    u = np.asarray(pvals, dtype=np.float64).reshape(-1)
    if u.size == 0:
        raise EmptyInput("ks_statistic needs at least one value")
    bad = np.flatnonzero(~((u >= 0.0) & (u <= 1.0)))
    if bad.size:
        raise OutOfRange(int(bad[0]))
    return ks_sorted(np.sort(u))


def ks_sorted(u: np.ndarray) -> float:
    # u must be sorted ascending; shared by the sweep so both paths agree bitwise
    m = u.shape[0]
    i = np.arange(1, m + 1, dtype=np.float64)
    upper = i / m - u
    lower = u - (i - 1.0) / m
    return float(max(upper.max(), lower.max()))


# ---------------------------------------------------------------------------
# exact finite-m law


def _durbin_matrix(k: int, h: float) -> np.ndarray:
    size = 2 * k - 1
    idx = np.arange(size)
    diff = idx[:, None] - idx[None, :] + 1
    H = np.where(diff >= 0, 1.0, 0.0)
    hp = h ** np.arange(1, size + 1)
    H[:, 0] -= hp
    H[-1, :] -= hp[::-1]
    if 2 * h - 1 > 0:
        H[-1, 0] += (2 * h - 1) ** size
    pos = diff > 0
    H[pos] *= np.exp(-gammaln(diff[pos] + 1.0))  # 1/j! underflows harmlessly to 0
    return H


def _power_diag(H: np.ndarray, m: int, i: int) -> float:
    """log of (H**m)[i, i], rescaling after every product."""
    res, res_log = None, 0.0
    base, base_log = H, 0.0
    e = m
    while True:
        if e & 1:
            if res is None:
                res, res_log = base.copy(), base_log
            else:
                res = res @ base
                res_log += base_log
                s = np.abs(res).max()
                res /= s
                res_log += math.log(s)
        e >>= 1
        if not e:
            break
        base = base @ base
        base_log *= 2.0
        s = np.abs(base).max()
        base = base / s
        base_log += math.log(s)
    v = res[i, i]
    if v <= 0.0:
        return -math.inf
    return math.log(v) + res_log


def _exact_cdf_d(m: int, d: float) -> float:
    """P(D_m <= d), exact."""
    if d <= 0.5 / m:
        return 0.0
    if d >= 1.0:
        return 1.0
    if d <= 1.0 / m:
        return math.exp(math.lgamma(m + 1) + m * math.log(2.0 * d - 1.0 / m))
    if d >= 1.0 - 1.0 / m:
        return 1.0 - 2.0 * (1.0 - d) ** m
    if m * d * d >= 6.0:
        s = smirnov_sf(m, d)
        if s <= _TAIL_S_MAX:
            return 1.0 - 2.0 * s + 0.5 * s * s
    k = int(m * d) + 1
    h = k - m * d
    H = _durbin_matrix(k, h)
    logp = _power_diag(H, m, k - 1) + math.lgamma(m + 1) - m * math.log(m)
    return min(1.0, math.exp(logp))


def smirnov_sf(m: int, d: float) -> float:
    """Exact one-sided P(D_m^+ >= d) (Birnbaum-Tingey sum, in log space)."""
    if d <= 0.0:
        return 1.0
    if d >= 1.0:
        return 0.0
    j = np.arange(0, m + 1, dtype=np.float64)
    a = 1.0 - d - j / m
    keep = a > 0.0
    j, a = j[keep], a[keep]
    if j.size == 0:
        return 0.0
    logt = (
        gammaln(m + 1.0)
        - gammaln(j + 1.0)
        - gammaln(m - j + 1.0)
        + (m - j) * np.log(a)
        + (j - 1.0) * np.log(d + j / m)
    )
    return float(min(1.0, d * math.exp(logsumexp(logt))))


# ---------------------------------------------------------------------------
# asymptotic law


def kolmogorov_cdf(x: float) -> float:
    """P(sup_z |B_z - z B_1| <= x) for a Brownian bridge."""
    if x <= 0.0:
        return 0.0
    if x < 1.0:
        # theta-function form converges fast for small x
        c = -(math.pi**2) / (8.0 * x * x)
        total, k = 0.0, 1
        while True:
            term = math.exp(c * (2 * k - 1) ** 2)
            total += term
            if term < _SERIES_TOL * max(total, 1e-300) or term == 0.0:
                break
            k += 1
        return min(1.0, math.sqrt(2.0 * math.pi) / x * total)
    total, k, sign = 0.0, 1, 1.0
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        total += sign * term
        if term < _SERIES_TOL:
            break
        sign, k = -sign, k + 1
    return max(0.0, 1.0 - 2.0 * total)


def _asymptotic_cdf(m: int, w: float) -> float:
    return kolmogorov_cdf(w + 1.0 / (6.0 * math.sqrt(m)))


# ---------------------------------------------------------------------------
# public surface


def null_cdf(m: int, w: float, crossover: int = DEFAULT_CROSSOVER) -> float:
    """P(sqrt(m) * D_m <= w) under i.i.d. U(0,1) sampling."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if w < 0.0:
        raise ValueError("w must be >= 0")
    rm = math.sqrt(m)
    if w >= rm:
        return 1.0
    if w <= 0.5 / rm:
        return 0.0
    if m <= crossover:
        return _exact_cdf_d(m, w / rm)
    return _asymptotic_cdf(m, w)


def scaled_pvalue(m: int, W: float, crossover: int = DEFAULT_CROSSOVER) -> float:
    return 1.0 - null_cdf(m, W, crossover)


@lru_cache(maxsize=65536)
def null_quantile(m: int, p: float, crossover: int = DEFAULT_CROSSOVER) -> float:
    """Smallest w with null_cdf(m, w) >= p, by bisection to 1e-10."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    lo, hi = 0.5 / math.sqrt(m), math.sqrt(m)
    # invariant: cdf(lo) < p <= cdf(hi)
    while hi - lo > QUANTILE_TOL:
        mid = 0.5 * (lo + hi)
        if null_cdf(m, mid, crossover) >= p:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class KSNull:
    m: int
    crossover: int = DEFAULT_CROSSOVER

    @property
    def mode(self) -> str:
        return "exact" if self.m <= self.crossover else "asymptotic"

    def cdf(self, w: float) -> float:
        return null_cdf(self.m, w, self.crossover)

    def sf(self, w: float) -> float:
        return scaled_pvalue(self.m, w, self.crossover)

    def quantile(self, p: float) -> float:
        return null_quantile(self.m, p, self.crossover)
