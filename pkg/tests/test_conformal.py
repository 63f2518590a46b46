import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from confpoint.conformal import (DegenerateWeights, backward_pvalues, forward_pvalues, greater_and_ties_before,
                                 pvalue_deviation)
from confpoint.core import RandomStream
from confpoint.scores import Normal, ScoreFamily, identity_score

IDENT = identity_score()
HALF = oracles.ConstantStream(0.5)


def test_forward_hand_example():
    tr = forward_pvalues([3.0, 1.0, 2.0], IDENT, rng=HALF)
    assert np.allclose(tr.values, [0.5, 0.75, 0.5])
    assert tr.direction == "forward"
    assert list(tr.positions) == [1, 2, 3]


def test_backward_hand_example():
    tr = backward_pvalues([3.0, 1.0, 2.0], IDENT, rng=HALF)
    assert list(tr.positions) == [1, 2, 3]
    assert np.allclose(tr.values, [1 / 6, 0.75, 0.5])


def test_first_and_last_are_theta():
    theta = np.array([0.11, 0.22, 0.33, 0.44])
    x = [5.0, -1.0, 2.0, 2.5]
    assert forward_pvalues(x, IDENT, rng=theta).values[0] == 0.11
    assert backward_pvalues(x, IDENT, rng=theta).values[-1] == 0.44


def test_increasing_series_gives_theta_over_r():
    theta = RandomStream(3).uniforms(30)
    x = np.arange(30.0)
    p = forward_pvalues(x, IDENT, rng=theta).values
    assert np.allclose(p, theta / np.arange(1, 31))


def test_backward_is_forward_on_reversed_input():
    g = np.random.default_rng(0)
    x = g.normal(size=40)
    theta = g.random(40)
    b = backward_pvalues(x, IDENT, rng=theta).values
    f = forward_pvalues(x[::-1], IDENT, rng=theta[::-1]).values[::-1]
    assert np.array_equal(b, f)


def test_backward_downto_uses_fixed_theta_per_position():
    x = np.random.default_rng(1).normal(size=25)
    s = RandomStream(7)
    full = backward_pvalues(x, IDENT, rng=s).values
    part = backward_pvalues(x, IDENT, downto=10, rng=s)
    assert list(part.positions) == list(range(10, 26))
    assert np.array_equal(part.values, full[9:])


def test_counting_kernel_matches_bruteforce():
    g = np.random.default_rng(2)
    for _ in range(100):
        n = int(g.integers(1, 70))
        v = g.integers(0, 5, n).astype(float)
        gt, eq = greater_and_ties_before(v)
        assert np.array_equal(gt, [np.sum(v[:r + 1] > v[r]) for r in range(n)])
        assert np.array_equal(eq, [np.sum(v[:r + 1] == v[r]) for r in range(n)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-3, 3).map(float), min_size=1, max_size=40), st.integers(0, 2**32))
def test_forward_matches_bruteforce_with_ties(values, seed):
    theta = RandomStream(seed).uniforms(len(values))
    fast = forward_pvalues(values, IDENT, rng=theta).values
    slow = oracles.conformal_forward_bruteforce(values, lambda a, b, c: a, theta)
    assert np.allclose(fast, slow, rtol=0, atol=1e-15)


def test_context_dependent_scores_match_bruteforce():
    # distance to the bag mean, shifted by the context mean
    def f(points, bag, ctx):
        c = np.mean(ctx) if len(ctx) else 0.0
        return np.abs(np.asarray(points) - np.mean(bag)) + c

    fam = ScoreFamily(f, context_free=False, name="centred")
    g = np.random.default_rng(4)
    x = g.normal(size=15)
    theta = g.random(15)
    fw = forward_pvalues(x, fam, upto=9, rng=theta).values
    ref = oracles.conformal_forward_bruteforce(x[:9], lambda a, b, c: f(a, b, x[9:]), theta)
    assert np.allclose(fw, ref)
    bw = backward_pvalues(x, fam, downto=10, rng=theta).values
    refb = oracles.conformal_backward_bruteforce(x, lambda a, b, c: f(a, b, x[:9]), theta, downto=10)
    assert np.allclose(bw, refb)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-60, 60).map(float), min_size=2, max_size=50), st.integers(0, 2**32))
def test_monotone_transform_invariance_and_range(values, seed):
    # z**3 + 2z is exact on small integers, so it is strictly increasing in floating point too
    theta = RandomStream(seed).uniforms(len(values))
    p1 = forward_pvalues(values, IDENT, rng=theta).values
    p2 = forward_pvalues(values, IDENT.then(lambda z: z**3 + 2 * z), rng=theta).values
    assert np.array_equal(p1, p2)
    assert np.all((p1 >= 0) & (p1 <= 1))


def test_upto_bounds():
    with pytest.raises(ValueError):
        forward_pvalues([1.0, 2.0], IDENT, upto=3, rng=HALF)
    with pytest.raises(ValueError):
        backward_pvalues([1.0, 2.0], IDENT, downto=0, rng=HALF)
    with pytest.raises(ValueError):
        forward_pvalues([1.0, 2.0], IDENT, rng=[0.5])


def test_forward_trace_uniform_under_exchangeability():
    x = np.random.default_rng(8).standard_cauchy(4000)
    p = forward_pvalues(x, IDENT, rng=RandomStream(8)).values
    assert stats.kstest(p, "uniform").pvalue > 1e-3


def test_pvalue_deviation_constant_ratio_is_zero():
    x = np.sort(np.random.default_rng(0).normal(size=500))
    assert pvalue_deviation(x, lambda z: np.ones_like(z)) == 0.0
    assert pvalue_deviation(x, lambda z: 3.0) == 0.0


def test_pvalue_deviation_two_points():
    assert pvalue_deviation([0.0, 1.0], lambda z: np.array([1.0, 3.0])) == pytest.approx(0.25)


def test_pvalue_deviation_errors():
    with pytest.raises(DegenerateWeights):
        pvalue_deviation([0.0, 1.0], lambda z: np.zeros(2))
    with pytest.raises(ValueError):
        pvalue_deviation([1.0, 0.0], lambda z: np.ones(2))
    with pytest.raises(ValueError):
        pvalue_deviation([0.0, 1.0], lambda z: np.array([1.0, -1.0]))


def test_pvalue_deviation_matches_exact_law():
    # the deviation is the sup gap of the conditional law of the last p-value
    pre, post = Normal(0, 1), Normal(0, 5)
    g = np.random.default_rng(12)
    x = np.sort(np.r_[g.normal(size=6), g.normal(0, np.sqrt(5), size=6)])
    w = post(x) / pre(x)
    dev = pvalue_deviation(x, lambda z: post(z) / pre(z))
    # exact law: X_n takes the value x_(j) with probability w_j / sum w and its
    # p-value is then (n - j + theta) / n under the strict-greater convention
    n = x.size
    probs = w / w.sum()
    ys = np.linspace(0, 1, 20001)
    cdf = np.zeros_like(ys)
    for j in range(n):
        lo, hi = (n - j - 1) / n, (n - j) / n
        cdf += probs[j] * np.clip((ys - lo) / (hi - lo), 0, 1)
    assert dev == pytest.approx(np.abs(cdf - ys).max(), abs=1e-4)
