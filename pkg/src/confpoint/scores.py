"""Score families and the densities used to build likelihood-ratio scores."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .core import RandomStream, as_array

DEFAULT_FLOOR = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


class MismatchedArity(ValueError):
    pass


class DegenerateSplit(ValueError):
    pass


@dataclass(frozen=True)
class ScoreFamily:
    """Maps (points, bag, context) to conformity scores.

    Context-free families only look at the points, which lets the sweep
    compute one forward and one backward trace for every split at once.
    Scores are evaluated elementwise over an array of points.
    """

    func: Callable
    context_free: bool = True
    name: str = "custom"

    def __call__(self, x, bag=None, context=None):
        arr = as_array(x)
        if self.context_free:
            out = self.func(arr)
        else:
            out = self.func(arr, bag, context)
        out = np.asarray(out, dtype=np.float64)
        return float(out) if out.ndim == 0 else out

    eval = __call__

    def then(self, g: Callable, name: str | None = None) -> "ScoreFamily":
        """Post-compose with ``g``; a strictly increasing ``g`` leaves every
        conformal trace unchanged."""
        if self.context_free:
            return ScoreFamily(lambda x: g(self.func(x)), True, name or f"{self.name}+g")
        return ScoreFamily(lambda x, b, c: g(self.func(x, b, c)), False, name or f"{self.name}+g")


# ---------------------------------------------------------------------------
# densities


class Density:
    """Closed-form density; subclasses provide ``logpdf``."""

    def logpdf(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return np.exp(self.logpdf(np.asarray(x, dtype=np.float64)))

    pdf = __call__


@dataclass(frozen=True)
class Normal(Density):
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * (x - self.mean) ** 2 / self.variance - 0.5 * (_LOG_2PI + math.log(self.variance))

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=np.float64) - self.mean) / math.sqrt(self.variance))

    def ppf(self, u):
        return self.mean + math.sqrt(self.variance) * ndtri(u)


@dataclass(frozen=True)
class Cauchy(Density):
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def logpdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.location) / self.scale
        return -math.log(math.pi * self.scale) - np.log1p(z * z)

    def cdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.location) / self.scale
        return 0.5 + np.arctan(z) / math.pi

    def ppf(self, u):
        return self.location + self.scale * np.tan(math.pi * (np.asarray(u, dtype=np.float64) - 0.5))


@dataclass(frozen=True)
class Exponential(Density):
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return np.where(x >= 0, math.log(self.rate) - self.rate * x, -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x >= 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    def ppf(self, u):
        return -np.log1p(-np.asarray(u, dtype=np.float64)) / self.rate


def _log_density(fn: Callable, x: np.ndarray) -> np.ndarray:
    if hasattr(fn, "logpdf"):
        return np.asarray(fn.logpdf(x), dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(fn(x), dtype=np.float64))


# ---------------------------------------------------------------------------
# score families


def identity_score() -> ScoreFamily:
    return ScoreFamily(lambda x: x, True, "identity")


def ratio_score(q: Callable, r: Callable, floor: float = DEFAULT_FLOOR) -> ScoreFamily:
    """q(x) / max(r(x), floor), evaluated in log space when both densities
    expose ``logpdf`` so extreme tails neither overflow nor underflow early."""
    if not floor > 0:
        raise ValueError("floor must be positive")
    log_floor = math.log(floor)

    def f(x):
        lq = _log_density(q, x)
        lr = np.maximum(_log_density(r, x), log_floor)
        with np.errstate(over="ignore"):
            return np.exp(lq - lr)

    return ScoreFamily(f, True, "ratio")


def pair_ratio_score(numerator: Callable, denominator: Callable, coordinate: str = "x",
                     floor: float = DEFAULT_FLOOR) -> ScoreFamily:
    """Likelihood-ratio score for paired records.

    Points are complex numbers ``x + 1j*y`` (see :func:`encode_pairs`) so a
    pair stays a single observation throughout the sweep.  For
    ``coordinate="y_given_x"`` the densities are called as ``f(y, x)``.
    """
    if not floor > 0:
        raise ValueError("floor must be positive")
    if coordinate not in ("x", "y", "y_given_x"):
        raise ValueError(f"unknown coordinate {coordinate!r}")

    def f(points):
        x, y = decode_pairs(points)
        if coordinate == "x":
            num, den = numerator(x), denominator(x)
        elif coordinate == "y":
            num, den = numerator(y), denominator(y)
        else:
            num, den = numerator(y, x), denominator(y, x)
        return np.asarray(num, dtype=np.float64) / np.maximum(np.asarray(den, dtype=np.float64), floor)

    return ScoreFamily(f, True, f"pair_ratio[{coordinate}]")


def encode_pairs(x, y) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) + 1j * np.asarray(y, dtype=np.float64)


def pairs_from_records(flat) -> np.ndarray:
    """Interleaved records ``[x1, y1, x2, y2, ...]`` to paired points."""
    f = np.asarray(flat, dtype=np.float64).reshape(-1)
    if f.size % 2:
        raise ValueError("interleaved records need an even number of values")
    return encode_pairs(f[0::2], f[1::2])


def decode_pairs(points) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(points)
    if np.iscomplexobj(p):
        return p.real, p.imag
    p = np.asarray(p, dtype=np.float64)
    if p.ndim >= 1 and p.shape[-1] == 2:
        return p[..., 0], p[..., 1]
    raise ValueError("paired points must be complex or have a trailing axis of length 2")


def mixture_ratio_score(q: Callable, rs: Sequence[Callable], segment_lengths: Sequence[float],
                        floor: float = DEFAULT_FLOOR) -> ScoreFamily:
    """q(x) / max(sum_i w_i r_i(x), floor), w_i proportional to segment length."""
    if len(rs) != len(segment_lengths) or len(rs) == 0:
        raise MismatchedArity(f"{len(rs)} densities vs {len(segment_lengths)} segment lengths")
    lengths = np.asarray(segment_lengths, dtype=np.float64)
    if np.any(lengths <= 0):
        raise ValueError("segment lengths must be positive")
    weights = lengths / lengths.sum()
    rs = tuple(rs)

    def f(x):
        mix = sum(w * np.asarray(r(x), dtype=np.float64) for w, r in zip(weights, rs))
        return np.asarray(q(x), dtype=np.float64) / np.maximum(mix, floor)

    fam = ScoreFamily(f, True, "mixture_ratio")
    object.__setattr__(fam, "weights", weights)
    return fam


# ---------------------------------------------------------------------------
# kernel density estimation


@dataclass(frozen=True)
class KdeSpec:
    kernel: str = "gaussian"
    alpha_exponent: float = -0.2
    floor_epsilon: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.kernel != "gaussian":
            raise ValueError("only the gaussian kernel is supported")
        if not -0.5 < self.alpha_exponent < 0:
            raise ValueError("alpha_exponent must lie in (-1/2, 0)")
        if not self.floor_epsilon > 0:
            raise ValueError("floor_epsilon must be positive")


@dataclass(frozen=True)
class GaussianKde(Density):
    samples: np.ndarray
    bandwidth: float

    _chunk = 1 << 22

    def __call__(self, x):
        # the kernel sum is positive everywhere; keep that visible past exp underflow
        return np.maximum(np.exp(self.logpdf(x)), np.nextafter(0.0, 1.0))

    pdf = __call__

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        flat = x.reshape(-1)
        out = np.empty(flat.shape[0])
        m = self.samples.shape[0]
        step = max(1, self._chunk // m)
        norm = math.log(m * self.bandwidth) + 0.5 * _LOG_2PI
        for i in range(0, flat.shape[0], step):
            z = (flat[i:i + step, None] - self.samples[None, :]) / self.bandwidth
            out[i:i + step] = _logsumexp_rows(-0.5 * z * z) - norm
        return out.reshape(x.shape)


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1)
    return top + np.log(np.exp(a - top[:, None]).sum(axis=1))


def kde(samples, spec: KdeSpec = KdeSpec()) -> GaussianKde:
    """Gaussian KDE with bandwidth h = m ** alpha_exponent (m = sample count)."""
    s = np.array(as_array(samples), dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise ValueError("kde needs at least one sample")
    s.flags.writeable = False
    return GaussianKde(s, float(s.size) ** spec.alpha_exponent)


def nearly_optimal_score(series, spec: KdeSpec = KdeSpec(), rng: RandomStream | None = None,
                         tau_hat: int | None = None) -> ScoreFamily:
    """Plug-in likelihood ratio from a two-pass split.

    An identity-score sweep locates the split; the result is the ratio of
    the KDE fitted after the split (post-change) to the KDE fitted on the
    observations up to it (pre-change).  ``tau_hat`` may be supplied when
    the identity sweep has already been run with the same stream.
    """
    from .mcp import estimate, sweep

    x = as_array(series)
    n = x.shape[0]
    if n < 4:
        raise ValueError("need at least 4 observations")
    if tau_hat is None:
        if rng is None:
            raise ValueError("rng is required when tau_hat is not given")
        ident = identity_score()
        tau_hat = estimate(sweep(x, ident, ident, rng))
    if not 1 <= tau_hat <= n - 1:
        raise DegenerateSplit(f"split {tau_hat} leaves an empty segment")
    pre = kde(x[:tau_hat], spec)
    post = kde(x[tau_hat:], spec)
    fam = ratio_score(post, pre, spec.floor_epsilon)
    object.__setattr__(fam, "tau_hat", int(tau_hat))
    return ScoreFamily(fam.func, True, "kde_ratio")
