"""Importance resampling for bootstrap tail probabilities in linear regression.

The bootstrap statistic ``T* = sum(eps*_i^2) / (p sigma^2)`` with
``eps*_i ~ N(0, sigma^2)`` is ``chi2_n / p``.  Its cumulant generating
function is ``-(n/2) log(1 - 2 theta / p)``, so tilting by ``theta`` keeps the
residuals normal with variance inflated by ``1 / (1 - 2 theta / p)``
(equivalently each ``eps*_i^2 / sigma^2`` becomes a tilted ``chi2_1``).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, special, stats

from .core import DomainError, PreconditionError
from .estimator import EstimateReport, ReplicatedEstimate
from .solver import SolverConfig, SolverResult, SolverStatus, solve_fixed_point
from .streams import block_rng, replicate

__all__ = [
    "LONGLEY",
    "LONGLEY_COLUMNS",
    "longley_problem",
    "RegressionProblem",
    "BootstrapStatistic",
    "ols_fit",
    "bootstrap_psi",
    "bootstrap_conditional_mean",
    "solve_bootstrap_tilt",
    "resample_tilted",
    "replicate_resampling",
    "CoverageReport",
    "coverage_experiment",
    "weighted_upper_quantile",
]

# Longley (1967) employment data as distributed by the NIST Statistical
# Reference Datasets project (StRD, "Longley" linear regression problem).
LONGLEY_COLUMNS = ("TOTEMP", "GNPDEFL", "GNP", "UNEMP", "ARMED", "POP", "YEAR")
LONGLEY = np.array([
    (60323, 83.0, 234289, 2356, 1590, 107608, 1947),
    (61122, 88.5, 259426, 2325, 1456, 108632, 1948),
    (60171, 88.2, 258054, 3682, 1616, 109773, 1949),
    (61187, 89.5, 284599, 3351, 1650, 110929, 1950),
    (63221, 96.2, 328975, 2099, 3099, 112075, 1951),
    (63639, 98.1, 346999, 1932, 3594, 113270, 1952),
    (64989, 99.0, 365385, 1870, 3547, 115094, 1953),
    (63761, 100.0, 363112, 3578, 3350, 116219, 1954),
    (66019, 101.2, 397469, 2904, 3048, 117388, 1955),
    (67857, 104.6, 419180, 2822, 2857, 118734, 1956),
    (68169, 108.4, 442769, 2936, 2798, 120445, 1957),
    (66513, 110.8, 444546, 4681, 2637, 121950, 1958),
    (68655, 112.6, 482704, 3813, 2552, 123366, 1959),
    (69564, 114.2, 502601, 3931, 2514, 125368, 1960),
    (69331, 115.7, 518173, 4806, 2572, 127852, 1961),
    (70551, 116.9, 554894, 4007, 2827, 130081, 1962),
], dtype=float)


@dataclass(frozen=True)
class RegressionProblem:
    """Design, response and least-squares fit.

    ``sigma2`` is the residual sum of squares over ``divisor``.
    """

    X: np.ndarray
    Y: np.ndarray
    beta: np.ndarray
    sigma2: float
    resid: np.ndarray
    divisor: int
    Q: np.ndarray
    R: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def log_det_xtx(self) -> float:
        return 2.0 * float(np.sum(np.log(np.abs(np.diag(self.R)))))


def ols_fit(X, Y, divisor: Optional[int] = None) -> RegressionProblem:
    """Least squares by Householder QR; ``divisor`` defaults to ``n - 1``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    n, p = X.shape
    if Y.size != n:
        raise PreconditionError("X and Y have different numbers of rows")
    if n < p:
        raise PreconditionError("more coefficients than observations")
    Q, R = linalg.qr(X, mode="economic")
    d = np.abs(np.diag(R))
    if d.min() <= 1e-12 * d.max() * max(n, p):
        raise PreconditionError("design matrix is rank deficient")
    beta = linalg.solve_triangular(R, Q.T @ Y)
    resid = Y - X @ beta
    divisor = n - 1 if divisor is None else int(divisor)
    if divisor < 1:
        raise PreconditionError("divisor must be positive")
    return RegressionProblem(X, Y, beta, float(resid @ resid) / divisor, resid, divisor, Q, R)


def longley_problem(divisor: Optional[int] = None) -> RegressionProblem:
    """Employment regressed on an intercept and the six Longley predictors."""
    X = np.column_stack([np.ones(len(LONGLEY)), LONGLEY[:, 1:]])
    return ols_fit(X, LONGLEY[:, 0], divisor)


@dataclass(frozen=True)
class BootstrapStatistic:
    """Tail event ``{T* > a}`` for ``T* ~ chi2_n / p``, tilted by ``theta``."""

    a: float
    n: int
    p: int
    theta: float = 0.0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise PreconditionError("n and p must be positive")
        _check_theta(self.theta, self.p, conjugate=False)


def _check_theta(theta, p, conjugate=True):
    if not 1 - 2 * theta / p > 0:
        raise DomainError(f"theta={theta:g} violates 1 - 2 theta/p > 0 (p={p})")
    if conjugate and not 1 + 2 * theta / p > 0:
        raise DomainError(f"theta={theta:g} violates 1 + 2 theta/p > 0 (p={p})")


def bootstrap_psi(a: float, n: int, p: int, theta: float) -> tuple[float, float]:
    """Cumulant generating function of ``T* - a`` and its derivative."""
    _check_theta(theta, p, conjugate=False)
    u = 1.0 - 2.0 * theta / p
    return -theta * a - 0.5 * n * math.log(u), -a + (n / p) / u


def bootstrap_conditional_mean(a: float, n: int, p: int, theta: float) -> float:
    """``E[T* | T* > a]`` under the conjugate law, where ``p T* ~ Gamma(n/2, 2/(1 + 2 theta/p))``."""
    _check_theta(-theta, p, conjugate=False)
    k = 0.5 * n
    s = 2.0 / (1.0 + 2.0 * theta / p)
    x = p * a / s
    q = special.gammaincc(k, x)
    if not q > 0:
        raise DomainError(f"conjugate tail mass underflows at theta={theta:g}")
    log_ratio = k * math.log(x) - x - special.gammaln(k) - math.log(q) if x > 0 else -math.inf
    return (k * s + s * math.exp(log_ratio)) / p


def solve_bootstrap_tilt(stat: BootstrapStatistic, cfg: Optional[SolverConfig] = None) -> SolverResult:
    """Tilt equating the tilted mean of ``T*`` with its conjugate tail mean above ``a``."""
    a, n, p = stat.a, stat.n, stat.p
    if not a > n / p:
        raise PreconditionError(f"a={a:g} must exceed the mean n/p={n / p:g} of T*")
    cfg = cfg or SolverConfig()
    g = lambda t: bootstrap_psi(a, n, p, t)[1] + a
    h = lambda t: bootstrap_conditional_mean(a, n, p, t)
    hi = 0.5 * p * (1 - 1e-9)
    # dominating point: (n/p) / (1 - 2t/p) = a
    init = 0.5 * p * (1 - n / (p * a)) if cfg.initial_theta is None else cfg.initial_theta
    res = solve_fixed_point(g, h, SolverConfig(cfg.tol_rel, cfg.max_iter, init, cfg.order), (0.0, hi))
    if res.status is SolverStatus.DOMAIN_FAILURE:
        return res
    return SolverResult(res.bisection_theta, res.status, res.iterations, res.trace, res.pair,
                        res.bisection_theta, res.message)


def _draw_stat(problem_n, p, theta, family, rng, size):
    """``size`` draws of ``T*`` under the tilt ``theta``."""
    u = 1.0 - 2.0 * theta / p
    if family == "normal":
        # residuals N(0, sigma^2/u); sigma cancels in T*
        e = rng.standard_normal((size, problem_n)) / math.sqrt(u)
        return np.einsum("ij,ij->i", e, e) / p
    if family == "chi2":
        x = rng.gamma(0.5, 2.0 / u, (size, problem_n))
        return x.sum(axis=1) / p
    raise PreconditionError(f"unknown resampling family {family!r}; use 'normal' or 'chi2'")


def resample_tilted(problem: RegressionProblem, theta: float, a: float, family: str = "normal",
                    B: int = 1000, seed: int = 0, p: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None) -> EstimateReport:
    """Importance-resampling estimate of ``P(T* > a)`` from ``B`` tilted bootstrap draws.

    ``p`` (the divisor in ``T*``) defaults to the number of columns of ``X``.
    ``theta = 0`` gives the ordinary parametric bootstrap.
    """
    p = problem.p if p is None else int(p)
    if B < 1:
        raise PreconditionError("B must be at least 1")
    psi_a, _ = bootstrap_psi(a, problem.n, p, theta)
    rng = block_rng(seed, 0, 17) if rng is None else rng
    t = _draw_stat(problem.n, p, theta, family, rng, B)
    w = np.where(t > a, np.exp(-theta * (t - a) + psi_a), 0.0)
    return EstimateReport(float(w.mean()), float(w.var()), int(B), "is" if theta else "naive",
                          float(theta), int(seed), f"bootstrap-{family}", float(a))


def replicate_resampling(problem: RegressionProblem, theta: float, a: float, family: str = "normal",
                         B: int = 100, M: int = 10_000, seed: int = 0, p: Optional[int] = None,
                         workers: int = 1) -> ReplicatedEstimate:
    """``M`` independent ``B``-draw importance-resampling estimates."""
    est = replicate(lambda rng: resample_tilted(problem, theta, a, family, B, seed, p, rng).p_hat,
                    M, seed, workers, tag=(19, 0 if family == "normal" else 1))
    return ReplicatedEstimate.from_samples(est, B, theta, seed, a)


def weighted_upper_quantile(values, weights, alpha: float) -> float:
    """Upper ``alpha`` point of a weighted sample by the ``(B + 1)`` rule.

    Returns the ``k``-th largest value, ``k`` being the largest count whose
    summed weight over ``B + 1`` stays at or below ``alpha`` (at least 1).
    With unit weights and an exchangeable observed statistic ``T``, this
    gives ``P(T > t) = k / (B + 1)``.
    """
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(v)[::-1]
    v, w = v[order], w[order]
    cum = np.cumsum(w) / (v.size + 1)
    k = int(np.searchsorted(cum, alpha, side="right"))
    return float(v[max(k, 1) - 1])


@dataclass(frozen=True)
class CoverageReport:
    method: str
    B: int
    trials: int
    nominal: float
    theta: float
    noncoverage: float
    mean_volume: float
    sd_volume: float
    mean_t_crit: float


def _ball_log_volume(p):
    return 0.5 * p * math.log(math.pi) - special.gammaln(0.5 * p + 1)


def coverage_experiment(problem: RegressionProblem, nominal: float = 0.95, B: int = 1000,
                        trials: int = 500, seed: int = 0, method: str = "importance",
                        theta: Optional[float] = None, workers: int = 1) -> CoverageReport:
    """Non-coverage of bootstrap confidence ellipsoids for the coefficients.

    Each trial draws ``Y = X beta + eps`` with ``eps ~ N(0, sigma^2)`` at the
    fitted values of ``problem``, refits, and calibrates the region
    ``{b : (b_hat - b)' X'X (b_hat - b) <= p s^2 t}`` by the upper
    ``1 - nominal`` point of the studentised bootstrap statistic
    ``T* = (b* - b_hat)' X'X (b* - b_hat) / (p s*^2)``.  With
    ``method="importance"`` the bootstrap residuals are drawn from the
    variance-inflated normal law and ``t`` is a weighted quantile, the
    weight being the likelihood ratio of ``sum(eps*^2) / (p s^2)``.
    The region volume is that of the ellipsoid: unit-ball volume times
    ``(p s^2 t)^(p/2) / sqrt(det X'X)``.
    """
    if not 0 < nominal < 1:
        raise PreconditionError("nominal must lie in (0, 1)")
    alpha = 1.0 - nominal
    n, p = problem.n, problem.p
    if method == "naive":
        theta = 0.0
        if B * alpha < 10:
            raise PreconditionError(f"B*(1-nominal)={B * alpha:g} < 10: too few tail draws for the quantile")
    elif method == "importance":
        a = stats.chi2.isf(alpha, n) / p
        if theta is None:
            theta = solve_bootstrap_tilt(BootstrapStatistic(a, n, p)).theta_star
        hits = B * stats.chi2.sf(a * p * (1 - 2 * theta / p), n)
        if hits < 10:
            raise PreconditionError(f"expected {hits:.1f} tilted tail draws < 10; increase B")
    else:
        raise PreconditionError(f"unknown method {method!r}; use 'naive' or 'importance'")
    a = stats.chi2.isf(alpha, n) / p
    psi_a, _ = bootstrap_psi(a, n, p, theta)
    u = 1.0 - 2.0 * theta / p
    Q, R, X = problem.Q, problem.R, problem.X
    sigma = math.sqrt(problem.sigma2)
    dof = problem.divisor
    log_ball = _ball_log_volume(p) - 0.5 * problem.log_det_xtx

    def one(rng):
        eps = sigma * rng.standard_normal(n)
        coef = Q.T @ eps                      # R (b_hat - beta)
        s2 = (eps @ eps - coef @ coef) / dof
        t_obs = (coef @ coef) / (p * s2)
        e_star = math.sqrt(s2 / u) * rng.standard_normal((B, n))
        c_star = e_star @ Q
        rss_star = np.einsum("ij,ij->i", e_star, e_star) - np.einsum("ij,ij->i", c_star, c_star)
        t_star = np.einsum("ij,ij->i", c_star, c_star) / (p * rss_star / dof)
        s_stat = np.einsum("ij,ij->i", e_star, e_star) / (p * s2)
        w = np.exp(-theta * (s_stat - a) + psi_a)
        t_crit = weighted_upper_quantile(t_star, w, alpha)
        vol = math.exp(log_ball + 0.5 * p * math.log(p * s2 * t_crit))
        return float(t_obs > t_crit), vol, t_crit

    def run(r):
        return one(block_rng(seed, r, 23))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            arr = np.array(list(pool.map(run, range(trials))))
    else:
        arr = np.array([run(r) for r in range(trials)])
    return CoverageReport(method, int(B), int(trials), float(nominal), float(theta),
                          float(arr[:, 0].mean()), float(arr[:, 1].mean()), float(arr[:, 1].std(ddof=1)),
                          float(arr[:, 2].mean()))
