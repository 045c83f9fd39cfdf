import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, stats

from raretilt.core import DomainError, NumericalError, PreconditionError, TailEvent, variance_functional_G
from raretilt.families import (
    ChiSquare,
    Exponential,
    Gamma,
    NoncentralChiSquare,
    Normal,
    Uniform,
    exponential_theta_star,
)
from raretilt.solver import (
    SolverConfig,
    SolverStatus,
    large_deviation_tilt,
    moderate_deviation_tilt,
    pareto_optimal_index,
    pareto_tail_tilt,
    solve_fixed_point,
    solve_optimal_tilt,
)

from oracles import all_families, continuous_families, family_id

TABLE1 = [f for f in all_families() if not f.name.startswith("cpoisson")]


# ------------------------------------------------------------ fixed point

def test_linear_crossing():
    res = solve_fixed_point(lambda t: t, lambda t: 1 - t, interval=(0, 1))
    assert res.status is SolverStatus.CONVERGED
    assert res.theta_star == pytest.approx(0.5, abs=1e-12)


def test_linear_crossing_off_centre_start_still_finds_root():
    # theta -> 1 - theta is a pure 2-cycle away from 0.5
    res = solve_fixed_point(lambda t: t, lambda t: 1 - t, SolverConfig(initial_theta=0.2), interval=(-5, 5))
    assert res.status is SolverStatus.ALTERNATING_PAIR
    assert res.theta_star == pytest.approx(0.5, abs=1e-12)


def test_exponential_closed_form_crossing():
    a = 2.0
    res = solve_fixed_point(lambda t: 1 / (1 - t), lambda t: a + 1 / (1 + t), interval=(0, 1 - 1e-9))
    assert res.theta_star == pytest.approx((math.sqrt(5) - 1) / 2, abs=1e-10)


def test_fabricated_alternating_pair():
    g = lambda t: t
    # decreasing, maps 0 <-> 1; steep at the root and flat near the pair, so the 2-cycle attracts
    h = lambda t: float(np.interp(t, [-2, 0, 0.45, 0.55, 1, 2], [3, 1, 0.9, 0.1, 0, -1]))
    res = solve_fixed_point(g, h, SolverConfig(initial_theta=0.3), interval=(-2, 2))
    assert res.status is SolverStatus.ALTERNATING_PAIR
    lo, hi = res.pair
    assert (lo, hi) == pytest.approx((0.0, 1.0))
    assert g(lo) == pytest.approx(h(hi)) and h(lo) == pytest.approx(g(hi))
    # the root still comes from bisection on g - h
    assert res.theta_star == pytest.approx(0.5, abs=1e-12)


def test_no_sign_change_is_domain_failure():
    res = solve_fixed_point(lambda t: t + 10, lambda t: -t, interval=(0, 1))
    assert res.status is SolverStatus.DOMAIN_FAILURE and math.isnan(res.theta_star)


def test_config_validation():
    with pytest.raises(PreconditionError):
        SolverConfig(tol_rel=0)
    with pytest.raises(PreconditionError):
        SolverConfig(max_iter=0)


# --------------------------------------------------------- optimal tilt

def test_exponential_optimal_tilt():
    res = solve_optimal_tilt(Exponential(), TailEvent(2.0))
    assert res.converged
    assert res.theta_star == pytest.approx(0.6180339887498949, abs=1e-10)


def test_noncentral_chi2_optimal_tilt():
    assert solve_optimal_tilt(NoncentralChiSquare(2, 1), TailEvent(12.85)).theta_star == pytest.approx(0.33, abs=0.005)


def test_normal_large_threshold():
    a = 6.0
    th = solve_optimal_tilt(Normal(), TailEvent(a)).theta_star
    assert abs(th - a) <= 0.05 * a
    grid = np.linspace(5.5, 6.5, 401)
    G = [variance_functional_G(Normal(), t, TailEvent(a)) for t in grid]
    assert abs(grid[int(np.argmin(G))] - th) <= grid[1] - grid[0]


def test_non_rare_event_is_rejected():
    # the whole support lies above a, so E[X | X > a] equals the mean
    with pytest.raises(PreconditionError, match="not rare"):
        solve_optimal_tilt(Exponential(), TailEvent(-1.0))


def test_lower_tail_gives_negative_tilt():
    up = solve_optimal_tilt(Normal(), TailEvent(2.5)).theta_star
    down = solve_optimal_tilt(Normal(), TailEvent(-2.5, upper=False)).theta_star
    assert down == pytest.approx(-up, abs=1e-10)


@pytest.mark.parametrize("fam", TABLE1, ids=family_id)
def test_converged_residual(fam):
    a = fam.isf(0.001)
    cfg = SolverConfig()
    res = solve_optimal_tilt(fam, TailEvent(a), cfg)
    t = res.theta_star
    lhs = float(fam.psi_prime(t))
    rhs = fam.conditional_mean_conjugate(t, a)
    assert abs(lhs - rhs) / max(1.0, abs(lhs)) <= 10 * cfg.tol_rel


# ------------------------------------------------------------- invariants

def _grid_oracle(fam, a, ts, n=2000):
    lo, hi = fam.domain.clipped()
    # stop short of any pole of psi, where G blows up
    top = min(2.0 * ts + 1e-3, 0.98 * hi, -0.98 * lo)
    grid = np.linspace(0.0, top, n)
    G = np.array([variance_functional_G(fam, t, TailEvent(a)) for t in grid])
    return grid[int(np.argmin(G))], grid[1] - grid[0]


@pytest.mark.parametrize("p", [1e-4, 0.1])
@pytest.mark.parametrize("fam", TABLE1, ids=family_id)
def test_grid_search_oracle(fam, p):
    a = fam.isf(p)
    ts = solve_optimal_tilt(fam, TailEvent(a)).theta_star
    t_grid, step = _grid_oracle(fam, a, ts)
    assert abs(t_grid - ts) <= step * (1 + 1e-9)


@pytest.mark.parametrize("fam", TABLE1, ids=family_id)
def test_F_strictly_increasing_single_sign_change(fam):
    a = fam.isf(0.01)
    lo, hi = fam.domain.clipped()
    ts = solve_optimal_tilt(fam, TailEvent(a)).theta_star
    top = min(3 * ts, 0.999 * hi, -0.999 * lo)
    grid = np.linspace(-0.9 * min(ts, top), top, 301)
    F = np.array([float(fam.psi_prime(t)) - fam.conditional_mean_conjugate(t, a) for t in grid])
    assert np.all(np.diff(F) > 0)
    assert np.count_nonzero(np.diff(np.sign(F)) != 0) == 1


def _assert_dichotomy(res, root):
    assert res.status in (SolverStatus.CONVERGED, SolverStatus.ALTERNATING_PAIR)
    tr = np.array(res.trace)
    # both maps are monotone, so each parity subsequence is monotone after the first step
    for sub in (tr[1::2], tr[2::2]):
        d = np.diff(sub)
        assert np.all(d >= -1e-12) or np.all(d <= 1e-12)
    if res.status is SolverStatus.CONVERGED:
        err = np.abs(tr[1:] - root)
        assert np.all(np.diff(err) <= 1e-12 * max(1.0, abs(root)))


@pytest.mark.parametrize("order", ["inverse", "direct"])
@pytest.mark.parametrize("fam", TABLE1, ids=family_id)
def test_trace_dichotomy(fam, order):
    a = fam.isf(0.01)
    res = solve_optimal_tilt(fam, TailEvent(a), SolverConfig(order=order, max_iter=60))
    _assert_dichotomy(res, res.bisection_theta)


@pytest.mark.parametrize("scale", [0.5, 1.5])
@pytest.mark.parametrize("fam", TABLE1, ids=family_id)
def test_initial_value_invariance(fam, scale):
    a = fam.isf(0.001)
    cfg = SolverConfig()
    base = solve_optimal_tilt(fam, TailEvent(a), cfg).theta_star
    hi = fam.domain.clipped()[1]
    init = min(scale * base, 0.999 * hi)
    pert = solve_optimal_tilt(fam, TailEvent(a), SolverConfig(initial_theta=init)).theta_star
    assert abs(pert - base) <= 10 * cfg.tol_rel * max(1.0, abs(base))


# ----------------------------------------------------- large deviations

def test_large_deviation_examples():
    assert large_deviation_tilt(Normal(), 3.0) == pytest.approx(3.0, abs=1e-12)
    assert large_deviation_tilt(Exponential(), 2.0) == pytest.approx(0.5, abs=1e-12)
    assert large_deviation_tilt(Gamma(4, 10), 40.0) == 0.0


def test_large_deviation_out_of_range():
    with pytest.raises(DomainError):
        large_deviation_tilt(Uniform(), 1.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 40))
def test_large_deviation_inverts_psi_prime(a):
    fam = ChiSquare(3)
    t = large_deviation_tilt(fam, a)
    assert float(fam.psi_prime(t)) == pytest.approx(a, rel=1e-10)


# ---------------------------------------------------- moderate deviations

def test_moderate_deviation_normal_matches_exact():
    a = 1.7
    md = moderate_deviation_tilt(0.0, 1.0, Normal(), a)
    assert md == pytest.approx(solve_optimal_tilt(Normal(), TailEvent(a)).theta_star, abs=1e-10)


def test_moderate_deviation_exponential_closed_form():
    # linearised: 1 + t = a + 1/(1 + t), so u = 1 + t solves u^2 - a u - 1 = 0
    a = 1.2
    md = moderate_deviation_tilt(1.0, 1.0, Exponential(), a)
    assert md == pytest.approx((a + math.sqrt(a * a + 4)) / 2 - 1, abs=1e-10)
    # the one-term expansion overshoots the exact tilt for E(1); the gap closes only slowly
    assert md > exponential_theta_star(a)


def test_moderate_deviation_continuity():
    t0 = moderate_deviation_tilt(0.0, 1.0, Normal(), 0.0)
    t1 = moderate_deviation_tilt(0.0, 1.0, Normal(), 1e-7)
    assert abs(t1 - t0) < 1e-6
    # as the threshold moves far below the mean the event stops being rare
    assert 0 < moderate_deviation_tilt(0.0, 1.0, Normal(), -7.0) < 1e-8


# ------------------------------------------------------------------ Pareto

def test_pareto_no_tilt_limit():
    assert pareto_tail_tilt(3.0, 1e-9) == pytest.approx(3.0, rel=1e-6)


def test_pareto_linearised_equation_holds():
    alpha, a_n = 3.0, 0.2
    at = pareto_tail_tilt(alpha, a_n)
    tau = alpha - at
    c = math.log1p(a_n)
    # conditional mean of T = log(1+X) under the conjugate law, by quadrature
    rate = alpha + tau
    num = integrate.quad(lambda t: t * rate * math.exp(-rate * t), c, np.inf, epsabs=1e-14)[0]
    den = math.exp(-rate * c)
    assert num / den == pytest.approx(1 / alpha + tau / alpha**2, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(2.05, 20), st.floats(0.01, 100))
def test_pareto_index_below_alpha(alpha, a_n):
    try:
        at = pareto_tail_tilt(alpha, a_n)
    except NumericalError:
        # the linearised root needs a tilt beyond alpha; checked directly below
        c = math.log1p(a_n)
        assert 1 / alpha + 1 / alpha - c - 1 / (2 * alpha) <= 0
        return
    assert 0 < at < alpha


def test_pareto_far_threshold_has_no_positive_index():
    with pytest.raises(NumericalError):
        pareto_tail_tilt(3.0, 1.0)


def test_pareto_requires_finite_variance():
    with pytest.raises(PreconditionError):
        pareto_tail_tilt(2.0, 1.0)


@pytest.mark.parametrize("alpha,a", [(3.0, 5.0), (2.5, 50.0), (6.0, 1.0)])
def test_pareto_optimal_index_minimises_second_moment(alpha, a):
    f = lambda x: alpha * (1 + x) ** (-alpha - 1)

    def second(b):
        g = lambda x: f(x) ** 2 / (b * (1 + x) ** (-b - 1))
        return integrate.quad(g, a, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]

    res = optimize.minimize_scalar(second, bounds=(1e-3, 2 * alpha - 1e-3), method="bounded",
                                   options={"xatol": 1e-10})
    assert pareto_optimal_index(alpha, a) == pytest.approx(res.x, abs=1e-6)
