import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from raretilt.core import (
    DomainError,
    Negated,
    TailEvent,
    conjugate_view,
    likelihood_ratio,
    variance_functional_G,
)
from raretilt.estimator import analytic_re, estimate_is
from raretilt.families import ChiSquare, Exponential, NoncentralChiSquare, Normal
from raretilt.solver import solve_optimal_tilt

from oracles import all_families, continuous_families, family_id, fd1, fd2, rng, star


# ---------------------------------------------------------------- examples

def test_likelihood_ratio_no_tilt_is_one():
    x = np.linspace(-3, 3, 7)
    np.testing.assert_array_equal(likelihood_ratio(Normal(), 0.0, x), np.ones(7))


def test_likelihood_ratio_normal():
    assert likelihood_ratio(Normal(), 1.0, 1.0) == pytest.approx(math.exp(-0.5), rel=1e-14)


def test_likelihood_ratio_exponential():
    # psi(0.5) = -log(0.5)
    assert likelihood_ratio(Exponential(), 0.5, 2.0) == pytest.approx(2 * math.exp(-1), rel=1e-14)


def test_likelihood_ratio_rejects_theta_outside_domain():
    with pytest.raises(DomainError):
        likelihood_ratio(Exponential(), 1.5, 1.0)


def test_conjugate_view_normal_is_shifted_normal():
    x = conjugate_view(Normal(), 2.0).sample(rng(1), 10_000)
    assert stats.kstest(x, stats.norm(-2, 1).cdf).pvalue > 0.01


def test_conjugate_view_at_zero_is_base_law():
    x = conjugate_view(Exponential(), 0.0).sample(rng(2), 10_000)
    assert stats.kstest(x, stats.expon().cdf).pvalue > 0.01


def test_conjugate_view_chi2_scale():
    k = 3
    x = conjugate_view(ChiSquare(k), 0.2).sample(rng(3), 10_000)
    assert stats.kstest(x, stats.gamma(k / 2, scale=2 / 1.4).cdf).pvalue > 0.01


def test_conjugate_view_domain():
    with pytest.raises(DomainError):
        conjugate_view(Exponential(), -1.5)


def test_G_at_zero_is_p():
    fam = Normal()
    a = 2.0
    assert variance_functional_G(fam, 0.0, TailEvent(a)) == pytest.approx(stats.norm.sf(a), rel=1e-9)


def test_G_grid_minimiser_matches_solver():
    fam, a = Normal(), 2.326
    grid = np.linspace(1.5, 3.5, 2001)
    G = [variance_functional_G(fam, t, TailEvent(a)) for t in grid]
    t_grid = grid[int(np.argmin(G))]
    t_star = solve_optimal_tilt(fam, TailEvent(a)).theta_star
    assert abs(t_grid - t_star) <= grid[1] - grid[0]


def test_benchmark_efficiency_noncentral_chi2():
    fam = NoncentralChiSquare(2, 1)
    assert analytic_re(fam, TailEvent(12.85), 0.33) == pytest.approx(19.51, rel=0.02)


def test_lower_tail_is_negated_upper_tail():
    fam, a = Exponential(), 0.05
    neg, thr = TailEvent(a, upper=False).canonical(fam)
    assert isinstance(neg, Negated) and thr == -a
    assert neg.tail_prob(thr) == pytest.approx(-math.expm1(-a), rel=1e-12)


# -------------------------------------------------------------- invariants

@pytest.mark.parametrize("fam", all_families(), ids=family_id)
def test_psi_at_zero_and_derivatives(fam):
    assert float(fam.psi(0.0)) == pytest.approx(0.0, abs=1e-15)
    h = 1e-4
    d1 = fd1(lambda t: float(fam.psi(t)), 0.0, h)
    d2 = fd2(lambda t: float(fam.psi(t)), 0.0, h)
    assert d1 == pytest.approx(fam.base_mean, rel=1e-6, abs=1e-9)
    assert d2 == pytest.approx(fam.base_var, rel=1e-6, abs=1e-6)


def _theta_grid(fam, n=41):
    a, ts = star(fam)
    lo, hi = fam.domain.clipped()
    top = min(1.5 * ts, 0.99 * hi, 0.99 * -lo)
    return a, np.linspace(-0.5 * ts, top, n)


@pytest.mark.parametrize("fam", all_families(), ids=family_id)
def test_psi_prime_strictly_increasing(fam):
    _, grid = _theta_grid(fam)
    vals = np.array([float(fam.psi_prime(t)) for t in grid])
    assert np.all(np.diff(vals) > 0)


@pytest.mark.parametrize("fam", all_families(), ids=family_id)
def test_conjugate_conditional_mean_strictly_decreasing(fam):
    a, grid = _theta_grid(fam)
    vals = np.array([fam.conditional_mean_conjugate(t, a) for t in grid])
    assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("fam", all_families(), ids=family_id)
def test_G_strictly_convex(fam):
    a, grid = _theta_grid(fam, 21)
    G = np.array([variance_functional_G(fam, t, TailEvent(a)) for t in grid])
    p = fam.tail_prob(a)
    assert np.all(G >= p * p)
    assert np.all(np.diff(G, 2) > 0)


@pytest.mark.parametrize("fam", all_families(), ids=family_id)
def test_tilted_estimator_unbiased(fam):
    a, ts = star(fam)
    p = fam.tail_prob(a)
    for th in (0.5 * ts, ts):
        rep = estimate_is(fam, th, TailEvent(a), 100_000, seed=11)
        assert abs(rep.p_hat - p) <= 4 * rep.std_err


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.01, 3))
def test_normal_psi_prime_monotone_property(t, dt):
    fam = Normal(1.7)
    assert fam.psi_prime(t + dt) > fam.psi_prime(t)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 0.49), st.floats(0.0, 50))
def test_likelihood_ratio_matches_density_ratio(t, x):
    # dP/dQ_theta = f_P / f_Q for chi2(3), whose tilted law is Gamma(3/2, 2/(1-2t))
    fam = ChiSquare(3)
    x = max(x, 1e-3)
    direct = stats.chi2.pdf(x, 3) / stats.gamma.pdf(x, 1.5, scale=2 / (1 - 2 * t))
    assert likelihood_ratio(fam, t, x) == pytest.approx(direct, rel=1e-9)
