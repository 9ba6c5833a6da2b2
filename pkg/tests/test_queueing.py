import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, stats

from hubqueue.errors import DivergentSeries, TruncationTooShort, Unbounded, ValidationError
from hubqueue.queueing import (QueueSpec, TailConstraint, head_probability, lambda_max,
                               steady_state, tail_ok, truncation_index)


def mp_normaliser(rho, c, rel=mpmath.mpf("1e-40")):
    """Sum of rho**n / (n!)**c by term recurrence in 60-digit arithmetic."""
    with mpmath.workdps(60):
        rho, c = mpmath.mpf(rho), mpmath.mpf(c)
        total, term, n = mpmath.mpf(1), mpmath.mpf(1), 0
        while True:
            n += 1
            term = term * rho / mpmath.power(n, c)
            total += term
            # ratios rho/(k+1)**c never grow, so a ratio below one bounds the rest geometrically
            ratio = rho / mpmath.power(n + 1, c)
            if ratio < 1 and term * ratio / (1 - ratio) < rel * total:
                return total


def test_mm1_example():
    ss = steady_state(QueueSpec(0.5, 1.0, 0.0), 1e-14)
    assert ss.p0 == pytest.approx(0.5, abs=1e-12)
    n = np.arange(ss.M + 1)
    assert np.allclose(ss.probs, 0.5 * 0.5**n, atol=1e-12, rtol=0)


def test_mminf_example():
    ss = steady_state(QueueSpec(2.0, 1.0, 1.0), 1e-14)
    assert ss.p0 == pytest.approx(math.exp(-2), abs=1e-12)
    assert np.allclose(ss.probs, stats.poisson.pmf(np.arange(ss.M + 1), 2.0), atol=1e-12, rtol=0)


def test_fractional_c_matches_extended_precision_sum():
    ss = steady_state(QueueSpec(1.0, 1.0, 0.2))
    p0 = float(1 / mp_normaliser(1.0, 0.2))
    assert abs(ss.p0 - p0) <= 1e-10


@pytest.mark.parametrize("c, rho", [(0.2, 3.0), (0.5, 10.0), (0.2, 0.9), (2.0, 40.0)])
def test_p0_matches_extended_precision_sum_on_grid(c, rho):
    ss = steady_state(QueueSpec(rho, 1.0, c))
    assert ss.p0 == pytest.approx(float(1 / mp_normaliser(rho, c)), rel=1e-9)


def test_empty_system():
    ss = steady_state(QueueSpec(0.0, 3.0, 0.4))
    assert ss.p0 == 1.0
    assert np.all(ss.probs[1:] == 0)


def test_truncation_poisson_is_short():
    M = truncation_index(QueueSpec(1.0, 1.0, 1.0), 1e-12)
    assert M <= 60
    # beyond M the Poisson(1) tail really is below epsilon
    assert stats.poisson.sf(M, 1.0) < 1e-12


def test_truncation_geometric_tail_bound():
    eps = 1e-12
    M = truncation_index(QueueSpec(0.5, 1.0, 0.0), eps)
    # mass beyond M is 0.5**(M+1); the smallest M with that below eps is the bound
    bound = math.ceil(math.log(eps) / math.log(0.5)) - 1
    assert 0.5 ** (M + 1) < eps
    assert bound <= M <= bound + 5


@pytest.mark.parametrize("rho", [1.0, 1.5])
def test_mm1_at_or_above_capacity_diverges(rho):
    with pytest.raises(DivergentSeries):
        truncation_index(QueueSpec(rho, 1.0, 0.0))


@pytest.mark.parametrize("c, rho", [(0.0, 0.3), (0.0, 0.95), (0.2, 2.0), (0.5, 20.0), (1.0, 50.0)])
def test_normalisation_and_missing_mass(c, rho):
    eps = 1e-10
    ss = steady_state(QueueSpec(rho, 1.0, c), eps)
    total = math.fsum(ss.probs)
    assert 1 - 10 * eps <= total <= 1 + 1e-12
    # the truncated normaliser misses at most eps of the true one
    true_p0 = float(1 / mp_normaliser(rho, c))
    assert ss.p0 >= true_p0
    assert (ss.p0 - true_p0) / true_p0 <= 10 * eps


def test_head_probability_examples():
    ss = steady_state(QueueSpec(0.5, 1.0, 0.0), 1e-14)
    assert head_probability(ss, 3) == pytest.approx(0.96875, abs=1e-12)
    assert head_probability(ss, 0) == pytest.approx(ss.probs[0] + ss.probs[1], abs=0)
    assert head_probability(ss, ss.M - 1) == pytest.approx(1.0, abs=10 * ss.epsilon)


def test_head_probability_beyond_truncation_raises():
    ss = steady_state(QueueSpec(0.5, 1.0, 0.0))
    with pytest.raises(TruncationTooShort):
        head_probability(ss, ss.M)


def test_min_states_extends_truncation():
    ss = steady_state(QueueSpec(0.1, 1.0, 1.0), min_states=40)
    assert ss.M >= 40
    assert head_probability(ss, 39) == pytest.approx(1.0)


@pytest.mark.parametrize("b, theta", [(0, 0.1), (5, 0.95), (20, 0.5)])
def test_tail_ok_empty_system(b, theta):
    assert tail_ok(QueueSpec(0.0, 1.0, 0.3), TailConstraint(b, theta))


def test_tail_ok_geometric_examples():
    spec = QueueSpec(0.99, 1.0, 0.0)
    assert 0.99**7 == pytest.approx(0.932, abs=1e-3)
    assert tail_ok(spec, TailConstraint(5, 0.95))
    assert not tail_ok(spec, TailConstraint(5, 0.05))


def test_tail_ok_divergent_is_false():
    assert not tail_ok(QueueSpec(1.2, 1.0, 0.0), TailConstraint(5, 0.99))


def test_lambda_max_mm1_closed_form():
    assert lambda_max(1.0, 0.0, TailConstraint(5, 0.95)) == pytest.approx(0.95 ** (1 / 7), abs=1e-6)


@pytest.mark.parametrize("c", [0.0, 0.2, 1.0])
def test_lambda_max_scales_with_mu(c):
    tc = TailConstraint(5, 0.6)
    one = lambda_max(1.0, c, tc)
    two = lambda_max(2.0, c, tc)
    assert two == pytest.approx(2 * one, abs=4e-9)


def test_lambda_max_poisson_oracle():
    b, theta = 5, 0.95
    # head = P[N <= b+1] for N ~ Poisson(lam); find where it equals 1 - theta
    target = optimize.brentq(lambda x: stats.poisson.cdf(b + 1, x) - (1 - theta), 1e-6, 100,
                             xtol=1e-13)
    assert lambda_max(1.0, 1.0, TailConstraint(b, theta)) == pytest.approx(target, abs=2e-9)


def test_lambda_max_unbounded_for_fast_growing_service():
    # the mode sits near rho**(1/c); with c = 10 it stays below b even at rho = 2**41
    with pytest.raises(Unbounded):
        lambda_max(1.0, 10.0, TailConstraint(30, 0.5))


def test_lambda_max_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        lambda_max(0.0, 0.0, TailConstraint(5, 0.5))
    with pytest.raises(ValidationError):
        TailConstraint(5, 1.0)
    with pytest.raises(ValidationError):
        TailConstraint(-1, 0.5)


def test_head_nonincreasing_in_lambda():
    for c in (0.0, 0.2, 1.0):
        heads = []
        for lam in np.linspace(0.05, 0.95, 19):
            ss = steady_state(QueueSpec(lam, 1.0, c), min_states=10)
            heads.append(head_probability(ss, 4))
        assert all(a >= b - 1e-15 for a, b in zip(heads, heads[1:]))


def test_lambda_max_monotone_grid():
    bs = [0, 2, 5, 10, 20]
    thetas = [0.05, 0.2, 0.5, 0.8, 0.95]
    mus = [0.5, 1.0, 3.0]
    c = 0.2
    grid = {(b, t, m): lambda_max(m, c, TailConstraint(b, t)) for b in bs for t in thetas for m in mus}
    for (b, t, m), v in grid.items():
        tol = 1e-9 * m
        if b != bs[-1]:
            assert grid[(bs[bs.index(b) + 1], t, m)] >= v - tol
        if t != thetas[-1]:
            assert grid[(b, thetas[thetas.index(t) + 1], m)] >= v - tol
        if m != mus[-1]:
            assert grid[(b, t, mus[mus.index(m) + 1])] >= v


@settings(max_examples=25, deadline=None)
@given(c=st.sampled_from([0.0, 0.1, 0.2, 0.5, 1.0]), b=st.integers(0, 25),
       theta=st.floats(0.01, 0.99), mu=st.floats(0.1, 10))
def test_lambda_max_is_the_boundary(c, b, theta, mu):
    tc = TailConstraint(b, theta)
    lam = lambda_max(mu, c, tc)
    tol = 1e-9 * mu
    assert tail_ok(QueueSpec(max(lam - 2 * tol, 0.0), mu, c), tc)
    assert not tail_ok(QueueSpec(lam + 2 * tol, mu, c), tc)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(0.01, 100))
def test_geometric_reduction_property(rho, mu):
    ss = steady_state(QueueSpec(rho * mu, mu, 0.0))
    n = np.arange(ss.M + 1)
    assert np.max(np.abs(ss.probs - (1 - rho) * rho**n)) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 50), st.floats(0.01, 100))
def test_poisson_reduction_property(rho, mu):
    ss = steady_state(QueueSpec(rho * mu, mu, 1.0))
    n = np.arange(ss.M + 1)
    assert np.max(np.abs(ss.probs - stats.poisson.pmf(n, ss.probs @ n if rho == 0 else rho))) <= 1e-8
