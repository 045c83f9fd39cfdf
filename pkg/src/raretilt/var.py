"""Tail probabilities of a delta-gamma portfolio loss under a jump diffusion.

After diagonalisation the loss (net of its constant part) is

    L_b = sum_j b_j Z_j + c_j Z_j^2 + a1' J,

with ``Z`` standard normal, ``c_j`` the diagonalised quadratic coefficients
and ``J`` a compound Poisson sum of multivariate normal log-jumps.  The
cumulant generating function of ``L_b - r`` is available in closed form, so
the tilted law is again of the same type: independent normals with shifted
means and inflated variances, and a compound Poisson term with a tilted
intensity and jump mean.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize

from .core import DomainError, NumericalError, PreconditionError
from .solver import SolverConfig, SolverResult, SolverStatus, solve_fixed_point
from .estimator import ReplicatedEstimate
from .streams import block_rng, replicate

__all__ = [
    "JumpDiffusionSpec",
    "QuadraticPortfolio",
    "TiltedJDParams",
    "InsufficientHitsError",
    "ReplicatedEstimate",
    "QuantileResult",
    "diagonalize",
    "admissible_strip",
    "tilted_params",
    "loss_sample",
    "psi_loss",
    "psi_loss_prime",
    "conditional_tail_mean",
    "solve_theta_p",
    "estimate_var_tail",
    "find_var_quantile",
]

log = logging.getLogger(__name__)

MIN_HITS = 50


class InsufficientHitsError(NumericalError):
    """Too few conjugate samples exceed the threshold."""


def _check_corr(mat, name):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.shape[0] != mat.shape[1] or not np.allclose(mat, mat.T, atol=1e-12):
        raise PreconditionError(f"{name} must be a symmetric square matrix")
    if not np.allclose(np.diag(mat), 1.0, atol=1e-12):
        raise PreconditionError(f"{name} must have unit diagonal")
    try:
        linalg.cholesky(mat, lower=True)
    except linalg.LinAlgError as exc:
        raise PreconditionError(f"{name} is not positive definite") from exc
    return mat


@dataclass(frozen=True)
class JumpDiffusionSpec:
    """Per-asset drift, volatility, jump parameters and the horizon ``dt``.

    A jump intensity of zero is allowed and switches the jump part off.
    """

    mu: np.ndarray
    sigma: np.ndarray
    corr: np.ndarray
    lam: float
    eta: np.ndarray
    delta: np.ndarray
    jump_corr: np.ndarray
    dt: float

    def __post_init__(self):
        vec = lambda v: np.atleast_1d(np.asarray(v, dtype=float))
        for name in ("mu", "sigma", "eta", "delta"):
            object.__setattr__(self, name, vec(getattr(self, name)))
        d = self.sigma.size
        object.__setattr__(self, "corr", _check_corr(self.corr, "corr"))
        object.__setattr__(self, "jump_corr", _check_corr(self.jump_corr, "jump_corr"))
        for name in ("mu", "eta", "delta"):
            if getattr(self, name).size != d:
                raise PreconditionError(f"{name} must have length {d}")
        if self.corr.shape != (d, d) or self.jump_corr.shape != (d, d):
            raise PreconditionError(f"correlation matrices must be {d}x{d}")
        if np.any(self.sigma <= 0) or np.any(self.delta <= 0):
            raise PreconditionError("sigma and delta must be positive")
        if self.lam < 0 or not self.dt > 0:
            raise PreconditionError("need lam >= 0 and dt > 0")

    @property
    def d(self) -> int:
        return self.sigma.size

    @property
    def jump_cov(self) -> np.ndarray:
        return self.delta[:, None] * self.jump_corr * self.delta[None, :]


def diagonalize(Sigma, A1, a1=None, scale=None):
    """Return ``(C, lam, b)`` with ``C C' = Sigma`` and ``C' A1 C = diag(lam)``.

    ``Sigma = L L'`` by Cholesky, ``L' A1 L = U diag(lam) U'`` by a symmetric
    eigendecomposition (eigenvalues in decreasing order) and ``C = L U``.
    When ``a1`` is given, ``b = C' diag(scale) a1`` (``scale`` defaults to
    ones), otherwise ``b`` is ``None``.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    A1 = np.atleast_2d(np.asarray(A1, dtype=float))
    if not np.allclose(A1, A1.T, atol=1e-12):
        raise PreconditionError("A1 must be symmetric")
    try:
        L = linalg.cholesky(Sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise PreconditionError("Sigma is not positive definite") from exc
    M = L.T @ A1 @ L
    lam, U = linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(lam)[::-1]
    lam, U = lam[order], U[:, order]
    C = L @ U
    mag = max(1.0, float(np.abs(Sigma).max()), float(np.abs(lam).max()))
    resid = max(np.abs(C @ C.T - Sigma).max(), np.abs(C.T @ A1 @ C - np.diag(lam)).max())
    if resid > 1e-10 * mag:
        raise NumericalError(f"diagonalisation residual {resid:.2e} exceeds 1e-10")
    b = None
    if a1 is not None:
        s = np.ones(len(lam)) if scale is None else np.asarray(scale, dtype=float)
        b = C.T @ (s * np.asarray(a1, dtype=float))
    return C, lam, b


@dataclass(frozen=True)
class QuadraticPortfolio:
    """Diagonal form of the loss: linear weights ``b``, quadratic ``quad``, jump loadings ``a1``."""

    b: np.ndarray
    quad: np.ndarray
    a1: np.ndarray
    b0: float = 0.0
    C: Optional[np.ndarray] = field(default=None, compare=False)
    lam: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("b", "quad", "a1"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not (self.b.size == self.quad.size == self.a1.size):
            raise PreconditionError("b, quad and a1 must have equal length")

    @property
    def d(self) -> int:
        return self.b.size

    @classmethod
    def from_eigen(cls, spec: JumpDiffusionSpec, b, lam, a1, b0: float = 0.0) -> "QuadraticPortfolio":
        """Diagonal form with ``quad_j = lam_j * sigma_j^2 * dt``."""
        lam = np.asarray(lam, dtype=float)
        return cls(b, lam * spec.sigma**2 * spec.dt, a1, b0, lam=lam)

    @classmethod
    def from_greeks(cls, spec: JumpDiffusionSpec, a0: float, a1, A1) -> "QuadraticPortfolio":
        """Diagonalise ``a0 + a1' r + r' A1 r`` for diffusion returns ``r = mu dt + D X``.

        ``D = diag(sigma sqrt(dt))`` is absorbed into the quadratic form before
        diagonalising, so the coefficients are exact for unequal volatilities.
        """
        a1 = np.asarray(a1, dtype=float)
        A1 = np.atleast_2d(np.asarray(A1, dtype=float))
        s = spec.sigma * math.sqrt(spec.dt)
        C, quad, b = diagonalize(spec.corr, s[:, None] * A1 * s[None, :], a1, s)
        mu = spec.mu * spec.dt
        b0 = float(a0 + a1 @ mu + mu @ A1 @ mu)
        return cls(b, quad, a1, b0, C=C)

    def jump_moments(self, spec: JumpDiffusionSpec) -> tuple[float, float]:
        """Mean and variance of ``a1' V`` for one jump vector ``V``."""
        return float(self.a1 @ spec.eta), float(self.a1 @ spec.jump_cov @ self.a1)


@dataclass(frozen=True)
class TiltedJDParams:
    """Law of ``(Z, N, a1'J)`` under ``Q_theta``."""

    theta: float
    mu: np.ndarray
    var: np.ndarray
    intensity: float
    eta: np.ndarray
    jump_mean: float
    jump_var: float


def admissible_strip(portfolio: QuadraticPortfolio, both_signs: bool = True) -> tuple[float, float]:
    """Open interval of ``theta`` with ``1 - 2 theta c_j > 0`` for every ``j``.

    With ``both_signs`` the interval is intersected with its reflection so
    the conjugate parameters at ``-theta`` exist too.
    """
    c = portfolio.quad
    hi = float(np.min(1.0 / (2 * c[c > 0]))) if np.any(c > 0) else math.inf
    lo = float(np.max(1.0 / (2 * c[c < 0]))) if np.any(c < 0) else -math.inf
    if both_signs:
        r = min(hi, -lo)
        return -r, r
    return lo, hi


def _check_theta(portfolio, theta, both_signs=True):
    for sign in ((1, -1) if both_signs else (1,)):
        u = 1.0 - 2.0 * sign * theta * portfolio.quad
        bad = np.flatnonzero(u <= 0)
        if bad.size:
            j = int(bad[0])
            raise DomainError(
                f"theta={theta!r} violates 1 - 2*({sign * theta:g})*c_{j + 1} > 0 "
                f"(c_{j + 1}={portfolio.quad[j]:.6g}); admissible strip is "
                f"{admissible_strip(portfolio, both_signs)}"
            )


def tilted_params(portfolio: QuadraticPortfolio, spec: JumpDiffusionSpec, theta: float) -> TiltedJDParams:
    """Tilted normal means/variances, jump intensity and jump mean at ``theta``.

    The conjugate parameters are ``tilted_params(..., -theta)``.
    """
    _check_theta(portfolio, theta, both_signs=False)
    u = 1.0 - 2.0 * theta * portfolio.quad
    m1, v1 = portfolio.jump_moments(spec)
    intensity = spec.lam * spec.dt * math.exp(theta * m1 + 0.5 * theta**2 * v1)
    eta = spec.eta + theta * (spec.jump_cov @ portfolio.a1)
    return TiltedJDParams(float(theta), theta * portfolio.b / u, 1.0 / u, intensity, eta,
                          float(portfolio.a1 @ eta), v1)


def loss_sample(portfolio: QuadraticPortfolio, spec: JumpDiffusionSpec, params: TiltedJDParams,
                rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Draw ``L_b`` under the law described by ``params``.

    Only ``a1' J`` enters the loss; given ``N`` jumps it is normal with mean
    ``N a1'eta`` and variance ``N a1' V a1``, which is how it is drawn.
    """
    z = rng.standard_normal((size, portfolio.d)) * np.sqrt(params.var) + params.mu
    out = z @ portfolio.b + (z * z) @ portfolio.quad
    if params.intensity > 0:
        n = rng.poisson(params.intensity, size)
        out += n * params.jump_mean + np.sqrt(n * params.jump_var) * rng.standard_normal(size)
    return out


def psi_loss(portfolio: QuadraticPortfolio, spec: JumpDiffusionSpec, theta: float, r_p: float) -> float:
    """Cumulant generating function of ``L_b - r_p``."""
    _check_theta(portfolio, theta, both_signs=False)
    u = 1.0 - 2.0 * theta * portfolio.quad
    m1, v1 = portfolio.jump_moments(spec)
    diff = np.sum(0.5 * (theta * portfolio.b) ** 2 / u - 0.5 * np.log(u))
    jump = spec.lam * spec.dt * math.expm1(theta * m1 + 0.5 * theta**2 * v1) if spec.lam > 0 else 0.0
    return float(diff + jump - theta * r_p)


def psi_loss_prime(portfolio: QuadraticPortfolio, spec: JumpDiffusionSpec, theta: float, r_p: float) -> float:
    _check_theta(portfolio, theta, both_signs=False)
    c, b = portfolio.quad, portfolio.b
    u = 1.0 - 2.0 * theta * c
    m1, v1 = portfolio.jump_moments(spec)
    diff = np.sum(theta * b**2 * (1 - theta * c) / u**2 + c / u)
    jump = 0.0
    if spec.lam > 0:
        jump = spec.lam * spec.dt * math.exp(theta * m1 + 0.5 * theta**2 * v1) * (m1 + theta * v1)
    return float(diff + jump - r_p)


class _ConjugateSampler:
    """Reweighted draws for ``E_{Qbar_theta}[L_b | L_b > r]``.

    Draws are made once from ``Q_tau`` and reweighted to ``Q_{-theta}`` by
    ``exp(-(theta + tau) L)`` (the normalising constants cancel in the
    ratio).  With ``tau = -theta`` this is plain conjugate sampling.  With
    the dominating-point ``tau`` the tail is hit often even when the
    conjugate law itself almost never reaches it, and the estimate is a
    smooth, strictly decreasing function of ``theta`` for a fixed seed.
    """

    def __init__(self, portfolio, spec, m, seed, tau):
        rng = block_rng(seed, 0, 7)
        self.tau = float(tau)
        self.x = loss_sample(portfolio, spec, tilted_params(portfolio, spec, self.tau), rng, m)

    def conditional_mean(self, theta, r_p):
        tail = self.x[self.x > r_p]
        k = tail.size
        if k < MIN_HITS:
            raise InsufficientHitsError(
                f"only {k} of {self.x.size} proposal samples exceed r_p={r_p:g}; increase m"
            )
        logw = -(theta + self.tau) * tail
        w = np.exp(logw - logw.max())
        w /= w.sum()
        ess = 1.0 / np.sum(w * w)
        if ess < MIN_HITS:
            raise InsufficientHitsError(
                f"effective sample size {ess:.1f} below {MIN_HITS} at theta={theta:.6g}; increase m"
            )
        mean = float(w @ tail)
        se = float(math.sqrt(np.sum(w * w * (tail - mean) ** 2)))
        return mean, se


def _dominating_tilt(portfolio, spec, r_p):
    """Root of ``psi'(theta) = 0`` for ``L_b - r_p`` inside the admissible strip."""
    _, hi = admissible_strip(portfolio, both_signs=False)
    f = lambda t: _safe_prime(portfolio, spec, t, r_p)
    right = min(1.0, 0.5 * hi)
    while f(right) < 0:
        if not math.isfinite(hi) and right > 1e8:
            raise NumericalError("could not bracket the dominating point")
        right = right * 2 if not math.isfinite(hi) else 0.5 * (right + hi)
    return optimize.brentq(f, 0.0, right, xtol=1e-14, rtol=1e-12)


def _safe_prime(portfolio, spec, t, r_p):
    try:
        return psi_loss_prime(portfolio, spec, t, r_p)
    except OverflowError:
        return math.inf


def conditional_tail_mean(portfolio, spec, theta, r_p, m=50_000, seed=0,
                          proposal_theta=None) -> tuple[float, float]:
    """Monte Carlo ``E_{Qbar_theta}[L_b | L_b > r_p]`` and its standard error.

    ``proposal_theta`` defaults to the dominating point for ``r_p``.
    """
    tau = _dominating_tilt(portfolio, spec, r_p) if proposal_theta is None else proposal_theta
    return _ConjugateSampler(portfolio, spec, m, seed, tau).conditional_mean(theta, r_p)


def solve_theta_p(portfolio: QuadraticPortfolio, spec: JumpDiffusionSpec, r_p: float,
                  cfg: Optional[SolverConfig] = None, m: int = 50_000, seed: int = 0) -> SolverResult:
    """Optimal tilt for ``P(L_b > r_p)``.

    Solves ``psi_L'(theta) = E_{Qbar_theta}[L_b | L_b > r_p]`` where ``psi_L``
    is the cumulant generating function of ``L_b`` itself (that of
    ``L_b - r_p`` plus ``r_p``).  The right-hand side is estimated from ``m``
    draws at the dominating point, held fixed across iterations and
    reweighted to each conjugate law.
    """
    cfg = cfg or SolverConfig()
    mean0 = psi_loss_prime(portfolio, spec, 0.0, 0.0)
    if not r_p > mean0:
        raise PreconditionError(f"r_p={r_p:g} must exceed the mean loss {mean0:.6g}")
    lo, hi_strip = admissible_strip(portfolio, both_signs=True)
    tau = _dominating_tilt(portfolio, spec, r_p)
    sampler = _ConjugateSampler(portfolio, spec, m, seed, tau)
    se = {}

    def g(t):
        return _safe_prime(portfolio, spec, t, 0.0)

    def h(t):
        val, s = sampler.conditional_mean(t, r_p)
        se[t] = s
        return val

    hi = min(1.5 * tau, 0.5 * (tau + hi_strip))
    while g(hi) - h(hi) <= 0:
        if hi >= hi_strip * (1 - 1e-6):
            raise NumericalError("no sign change of psi' - conditional mean inside the admissible strip")
        hi = min(1.5 * hi, 0.5 * (hi + hi_strip))
    res = solve_fixed_point(g, h, SolverConfig(cfg.tol_rel, cfg.max_iter,
                                               tau if cfg.initial_theta is None else cfg.initial_theta,
                                               cfg.order), (0.0, hi))
    if res.status is SolverStatus.DOMAIN_FAILURE:
        raise NumericalError(res.message)
    theta = res.bisection_theta
    h(theta)
    return SolverResult(theta, res.status, res.iterations, res.trace, res.pair, theta, res.message,
                        {"cond_mean_se": se[theta], "dominating_point": tau, "strip": (lo, hi_strip)})


def estimate_var_tail(portfolio: QuadraticPortfolio, spec: JumpDiffusionSpec, theta: float,
                      r_p: float, k: int = 1000, M: int = 10_000, seed: int = 0,
                      workers: int = 1) -> ReplicatedEstimate:
    """Replicated importance-sampling estimate of ``P(L_b > r_p)``.

    Each replication averages ``1{L > r_p} exp(-theta (L - r_p) + psi(theta))``
    over ``k`` tilted draws; ``theta = 0`` is the crude estimator.
    """
    if k < 1 or M < 2:
        raise PreconditionError("need k >= 1 and M >= 2")
    params = tilted_params(portfolio, spec, theta)
    psi_t = psi_loss(portfolio, spec, theta, r_p)

    def one(rng):
        x = loss_sample(portfolio, spec, params, rng, k)
        hit = x > r_p
        return float(np.sum(np.exp(-theta * (x[hit] - r_p) + psi_t))) / k

    est = replicate(one, M, seed, workers, tag=(11,))
    return ReplicatedEstimate.from_samples(est, k, theta, seed, r_p)


@dataclass(frozen=True)
class QuantileResult:
    r_p: float
    p_hat: float
    std_err: float
    bracket: tuple
    status: str
    evaluations: int


def find_var_quantile(portfolio: QuadraticPortfolio, spec: JumpDiffusionSpec, p: float,
                      cfg: Optional[SolverConfig] = None, budget: int = 40, n: int = 200_000,
                      m: int = 20_000, seed: int = 0, z: float = 2.0,
                      rel_tol: float = 1e-4) -> QuantileResult:
    """Threshold ``r`` with ``P(L_b > r) = p`` by bisection on IS estimates.

    Every candidate re-solves its own tilt and is estimated from ``n`` tilted
    draws.  The search stops at the first midpoint whose ``z``-sigma interval
    covers ``p`` (the bracket can no longer be resolved against Monte Carlo
    noise) or once the bracket is narrower than ``rel_tol``.  ``budget``
    caps the number of candidates; exhausting it returns the best bracket
    with status ``"budget"``.
    """
    if not 0 < p < 0.5:
        raise PreconditionError("p must lie in (0, 0.5)")
    cfg = cfg or SolverConfig(tol_rel=1e-6)
    mean0 = psi_loss_prime(portfolio, spec, 0.0, 0.0)
    sd0 = math.sqrt(np.sum(portfolio.b**2 + 2 * portfolio.quad**2)
                    + spec.lam * spec.dt * sum(x for x in _jump_second(portfolio, spec)))
    evals = 0

    def estimate(r):
        nonlocal evals
        evals += 1
        try:
            theta = solve_theta_p(portfolio, spec, r, cfg, m, seed + evals).theta_star
        except (InsufficientHitsError, NumericalError):
            theta = 0.0
        rng = block_rng(seed, evals, 13)
        params = tilted_params(portfolio, spec, theta)
        psi_t = psi_loss(portfolio, spec, theta, r)
        x = loss_sample(portfolio, spec, params, rng, n)
        w = np.where(x > r, np.exp(-theta * (x - r) + psi_t), 0.0)
        return float(w.mean()), float(w.std() / math.sqrt(n))

    lo, hi = mean0 + 1e-9 * max(1.0, abs(mean0)), mean0 + sd0
    while True:
        ph, se = estimate(hi)
        if ph < p or evals >= budget:
            break
        lo, hi = hi, hi + 2 * (hi - lo)
    best = (hi, ph, se)
    while evals < budget:
        mid = 0.5 * (lo + hi)
        ph, se = estimate(mid)
        best = (mid, ph, se)
        if abs(ph - p) <= z * se or hi - lo <= rel_tol * max(1.0, abs(mid)):
            return QuantileResult(mid, ph, se, (lo, hi), "converged", evals)
        if ph > p:
            lo = mid
        else:
            hi = mid
    log.warning("find_var_quantile: budget of %d evaluations exhausted", budget)
    return QuantileResult(best[0], best[1], best[2], (lo, hi), "budget", evals)


def _jump_second(portfolio, spec):
    m1, v1 = portfolio.jump_moments(spec)
    return (m1 * m1, v1)
