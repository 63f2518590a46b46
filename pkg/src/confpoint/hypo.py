"""Distribution-free tests: a changepoint at a given split, and
exchangeability of the whole series."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .conformal import FORWARD, forward_pvalues
from .core import IndexOutOfRange, RandomStream, as_array
from .ksdist import ks_sorted, null_quantile, scaled_pvalue
from .mcp import conf_pvalue_at
from .scores import ScoreFamily, identity_score


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # keep pytest from collecting this class

    reject: bool
    statistic: float
    threshold: float
    pvalue: float | None = None
    index_used: int | None = None
    note: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")


def test_changepoint(series, t0: int, alpha: float = 0.05, scores: tuple[ScoreFamily, ScoreFamily] | None = None,
                     rng: RandomStream | None = None) -> TestOutcome:
    """Reject "the series is exchangeable on both sides of t0" when p_conf(t0) <= alpha.

    Only the split t0 is evaluated; its value is the one a full sweep
    would report at t0.
    """
    _check_alpha(alpha)
    if rng is None:
        raise ValueError("an explicit RandomStream is required")
    x = as_array(series)
    n = x.shape[0]
    if not 1 <= t0 <= n - 1:
        raise IndexOutOfRange(f"t0={t0} must lie in [1, {n - 1}]")
    left, right = scores if scores is not None else (identity_score(), identity_score())
    _, _, p = conf_pvalue_at(x, t0, left, right, rng)
    return TestOutcome(reject=p <= alpha, statistic=p, threshold=alpha, pvalue=p, index_used=int(t0))


def exchangeability_index(n: int, c: float) -> int:
    return int(math.floor(c * n + n ** 0.25))


def test_exchangeability(series, c: float | None = None, alpha: float = 0.05, rng: RandomStream | None = None,
                         baseline: bool = False) -> TestOutcome:
    """KS test of the forward conformal trace truncated at m = floor(c n + n^(1/4)).

    ``baseline=True`` uses the whole trace (m = n) instead; that is a plain
    uniformity check and not tuned to any changepoint fraction.
    """
    _check_alpha(alpha)
    if rng is None:
        raise ValueError("an explicit RandomStream is required")
    x = as_array(series)
    n = x.shape[0]
    if baseline:
        m = n
    else:
        if c is None or not 0.0 < c < 1.0:
            raise ValueError("c must lie in (0, 1)")
        m = exchangeability_index(n, c)
        if not 1 <= m <= n:
            raise IndexOutOfRange(f"index {m} exceeds the series length {n}")
    trace = forward_pvalues(x, identity_score(), upto=m, rng=rng.child(FORWARD)).values
    w = math.sqrt(m) * ks_sorted(np.sort(trace))
    q = null_quantile(m, 1.0 - alpha)
    return TestOutcome(reject=w > q, statistic=w, threshold=q, pvalue=scaled_pvalue(m, w), index_used=m,
                       note="baseline, whole-sample index" if baseline else None)
