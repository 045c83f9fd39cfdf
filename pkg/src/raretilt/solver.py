"""Root finding for the variance-optimal tilt.

The optimal tilt solves ``g(theta) = h(theta)`` with ``g = psi'`` (increasing)
and ``h(theta) = E_{Qbar_theta}[X | X in A]`` (decreasing).  Two solvers are
run: the recursive fixed-point scheme and a bracketed bisection on
``g - h``; the latter also certifies the former.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from scipy import optimize

from .core import (
    DomainError,
    NumericalError,
    PreconditionError,
    TailEvent,
    TiltingFamily,
)

__all__ = [
    "SolverConfig",
    "SolverStatus",
    "SolverResult",
    "solve_fixed_point",
    "solve_optimal_tilt",
    "large_deviation_tilt",
    "moderate_deviation_tilt",
    "pareto_tail_tilt",
    "pareto_optimal_index",
    "bisect_increasing",
]

log = logging.getLogger(__name__)

_EXPAND_LIMIT = 2.0**40


@dataclass(frozen=True)
class SolverConfig:
    """Stopping constants for the fixed-point recursion.

    ``order`` selects which side is inverted each step.  ``"direct"`` computes
    ``t = g(theta)`` and solves ``h(theta') = t``; ``"inverse"`` computes
    ``t = h(theta)`` and solves ``g(theta') = t``.  Both maps are decreasing,
    so successive iterates bracket the root, but the direct order expands
    whenever ``|h'| < g'`` (the usual case for steep families) and then ends
    in an alternating pair.
    """

    tol_rel: float = 1e-10
    max_iter: int = 200
    initial_theta: Optional[float] = None
    order: str = "inverse"

    def __post_init__(self):
        if not self.tol_rel > 0:
            raise PreconditionError("tol_rel must be positive")
        if self.max_iter < 1:
            raise PreconditionError("max_iter must be at least 1")
        if self.order not in ("direct", "inverse"):
            raise PreconditionError("order must be 'direct' or 'inverse'")


class SolverStatus(enum.Enum):
    CONVERGED = "converged"
    ALTERNATING_PAIR = "alternating_pair"
    DOMAIN_FAILURE = "domain_failure"


@dataclass(frozen=True)
class SolverResult:
    theta_star: float
    status: SolverStatus
    iterations: int
    trace: tuple = ()
    pair: Optional[tuple] = None
    bisection_theta: float = math.nan
    message: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def converged(self) -> bool:
        return self.status is SolverStatus.CONVERGED

    @property
    def agreement(self) -> float:
        """Gap between the fixed-point iterate and the bisection root."""
        if not self.trace:
            return math.nan
        return abs(self.trace[-1] - self.bisection_theta)


def bisect_increasing(fn: Callable[[float], float], target: float, lo: float, hi: float,
                      xtol: float = 1e-15) -> float:
    """Solve ``fn(x) = target`` for increasing ``fn`` on ``[lo, hi]``, clipping to the ends."""
    flo, fhi = fn(lo) - target, fn(hi) - target
    if flo >= 0:
        return lo
    if fhi <= 0:
        return hi
    return optimize.brentq(lambda x: fn(x) - target, lo, hi, xtol=xtol, rtol=1e-15)


def _scale(x):
    return max(1.0, abs(x))


def solve_fixed_point(g: Callable[[float], float], h: Callable[[float], float],
                      cfg: Optional[SolverConfig] = None,
                      interval: tuple = (-1e6, 1e6)) -> SolverResult:
    """Recursive solution of ``g(theta) = h(theta)`` on a finite ``interval``.

    ``g`` must be increasing and ``h`` decreasing there.  Each step inverts
    one side by bracketed root finding (see :class:`SolverConfig`).  When the
    iterates settle into a 2-cycle the pair is reported and the root is taken
    from bisection on ``g - h``, which always succeeds when ``g - h`` changes
    sign on the interval.
    """
    cfg = cfg or SolverConfig()
    lo, hi = map(float, interval)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise PreconditionError(f"solver interval must be finite and ordered, got {interval}")

    def F(x):
        return g(x) - h(x)

    f_lo, f_hi = F(lo), F(hi)
    if f_lo > 0 or f_hi < 0:
        return SolverResult(
            math.nan, SolverStatus.DOMAIN_FAILURE, 0,
            message=f"g - h has no sign change on [{lo}, {hi}] (values {f_lo:.3g}, {f_hi:.3g})",
        )
    root = optimize.brentq(F, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500) \
        if f_lo < 0 < f_hi else (lo if f_lo == 0 else hi)

    if cfg.order == "direct":
        # theta' solves h(theta') = g(theta); h decreasing so invert -h
        def step(x):
            return bisect_increasing(lambda y: -h(y), -g(x), lo, hi)
    else:
        def step(x):
            return bisect_increasing(g, h(x), lo, hi)

    theta = cfg.initial_theta if cfg.initial_theta is not None else 0.5 * (lo + hi)
    theta = min(max(float(theta), lo), hi)
    trace = [theta]
    status, pair = None, None
    for _ in range(cfg.max_iter):
        nxt = step(trace[-1])
        trace.append(nxt)
        tol = cfg.tol_rel * _scale(trace[-2])
        if abs(nxt - trace[-2]) <= tol:
            status = SolverStatus.CONVERGED
            break
        if len(trace) >= 4:
            t0, t1, t2, t3 = trace[-4:]
            tol = cfg.tol_rel * _scale(t3)
            if abs(t3 - t1) <= tol and abs(t2 - t0) <= tol and abs(t3 - t2) > tol:
                status, pair = SolverStatus.ALTERNATING_PAIR, (min(t2, t3), max(t2, t3))
                break
    if status is None:
        # budget exhausted without settling; report the last two iterates
        status = SolverStatus.ALTERNATING_PAIR
        pair = (min(trace[-2:]), max(trace[-2:]))
        log.warning("fixed-point recursion did not settle in %d steps", cfg.max_iter)
    theta_star = trace[-1] if status is SolverStatus.CONVERGED else root
    return SolverResult(theta_star, status, len(trace) - 1, tuple(trace), pair, root)


def _working_interval(family: TiltingFamily, F: Callable[[float], float]) -> tuple:
    """``[0, hi]`` with both ``hi`` and ``-hi`` admissible and ``F(hi) > 0``."""
    dom_lo, dom_hi = family.domain.clipped()
    hi = min(dom_hi, -dom_lo)
    if math.isfinite(hi):
        return 0.0, hi
    hi = 1.0
    while hi < _EXPAND_LIMIT:
        try:
            if F(hi) > 0:
                return 0.0, hi
        except NumericalError:
            break
        hi *= 2.0
    raise NumericalError(f"{family.name}: could not bracket the optimal tilt")


def _canonical(family, event):
    if isinstance(event, (int, float)):
        event = TailEvent(float(event))
    fam, a = event.canonical(family)
    sign = 1.0 if event.upper else -1.0
    return fam, a, sign


def solve_optimal_tilt(family: TiltingFamily, event, cfg: Optional[SolverConfig] = None) -> SolverResult:
    """Variance-minimising tilt: ``psi'(theta) = E_{Qbar_theta}[X | X in A]``.

    Lower-tail events are solved on ``-X`` and the tilt is reported for ``X``
    (so it is negative).
    """
    cfg = cfg or SolverConfig()
    fam, a, sign = _canonical(family, event)
    p = fam.tail_prob(a)
    if not p > 0:
        raise PreconditionError(f"event {{X > {a}}} has zero probability under {family.name}")
    mu = fam.base_mean
    cond0 = fam.conditional_mean_conjugate(0.0, a)
    if not cond0 > mu * (1 + 1e-12) + 1e-300:
        raise PreconditionError(
            f"E[X | X in A] = {cond0:.6g} does not exceed the mean {mu:.6g}: "
            "the event is not rare in the tilted direction"
        )

    g = lambda t: float(fam.psi_prime(t))
    h = lambda t: fam.conditional_mean_conjugate(t, a)
    lo, hi = _working_interval(fam, lambda t: g(t) - h(t))
    init = cfg.initial_theta
    if init is not None:
        init = sign * init
    else:
        try:
            init = large_deviation_tilt(fam, a)
        except DomainError:
            init = None
        if init is None or not lo <= init <= hi:
            init = 0.5 * (lo + hi)
    run_cfg = SolverConfig(cfg.tol_rel, cfg.max_iter, init, cfg.order)
    res = solve_fixed_point(g, h, run_cfg, (lo, hi))
    if res.status is SolverStatus.DOMAIN_FAILURE:
        return res
    if res.converged and res.agreement > 10 * cfg.tol_rel * _scale(res.bisection_theta):
        log.warning("fixed point %.12g and bisection %.12g disagree", res.trace[-1], res.bisection_theta)
    theta = res.bisection_theta
    return SolverResult(
        sign * theta, res.status, res.iterations,
        tuple(sign * t for t in res.trace),
        None if res.pair is None else tuple(sorted(sign * t for t in res.pair)),
        sign * res.bisection_theta, res.message,
        {"p": p, "threshold": a, "residual": g(theta) - h(theta)},
    )


def large_deviation_tilt(family: TiltingFamily, a: float) -> float:
    """Dominating-point tilt: the root of ``psi'(theta) = a``."""
    lo, hi = family.domain.clipped()
    g = lambda t: float(family.psi_prime(t))
    mu = g(0.0)
    if a == mu:
        return 0.0
    if a > mu:
        left, right = 0.0, (hi if math.isfinite(hi) else 1.0)
        while not math.isfinite(hi) and g(right) < a and right < _EXPAND_LIMIT:
            right *= 2
    else:
        left, right = (lo if math.isfinite(lo) else -1.0), 0.0
        while not math.isfinite(lo) and g(left) > a and -left < _EXPAND_LIMIT:
            left *= 2
    if not g(left) <= a <= g(right):
        raise DomainError(f"a={a} outside the range of psi' for {family.name}")
    return optimize.brentq(lambda t: g(t) - a, left, right, xtol=1e-15, rtol=1e-15)


def moderate_deviation_tilt(mean: float, var: float, family: TiltingFamily, a_n: float,
                            cfg: Optional[SolverConfig] = None) -> float:
    """Tilt from the linearised equation ``mean + var*theta = E_{Qbar_theta}[X | X > a_n]``.

    Only the first two moments enter the left-hand side, which is the
    one-term Taylor expansion of ``psi'`` at zero.
    """
    if not var > 0:
        raise PreconditionError("variance must be positive")
    cfg = cfg or SolverConfig()
    g = lambda t: mean + var * t
    h = lambda t: family.conditional_mean_conjugate(t, a_n)
    if not h(0.0) > mean:
        raise PreconditionError("E[X | X > a_n] must exceed the mean")
    lo, hi = _working_interval(family, lambda t: g(t) - h(t))
    res = solve_fixed_point(g, h, cfg, (lo, hi))
    if res.status is SolverStatus.DOMAIN_FAILURE:
        raise NumericalError(res.message)
    return res.bisection_theta


def pareto_optimal_index(alpha: float, a: float) -> float:
    """Exact variance-optimal Lomax index for ``P(X > a)``, ``X ~ Lomax(alpha)``.

    ``log(1 + X)`` is exponential with rate ``alpha``; tilting it by ``tau``
    gives a Lomax law with index ``alpha - tau``.  The optimal index ``b``
    solves ``1/b - 1/(2 alpha - b) = log(1 + a)``.
    """
    if not (alpha > 0 and a > 0):
        raise PreconditionError("need alpha > 0 and a > 0")
    c = math.log1p(a)
    # smaller root of c b^2 - 2(alpha c + 1) b + 2 alpha = 0, written without cancellation
    s = alpha * c + 1.0
    return 2.0 * alpha / (s + math.sqrt(1.0 + (alpha * c) ** 2))


def pareto_tail_tilt(alpha: float, a_n: float, mean: Optional[float] = None,
                     var: Optional[float] = None) -> float:
    """Tilted tail index ``alpha * theta(a_n)`` for a Lomax tail ``alpha (1+x)^(-alpha-1)``.

    The tilt acts on ``T = log(1 + X)`` (exponential with rate ``alpha``) so
    ``theta = 1`` is no tilting and the returned index is always below
    ``alpha``.  The linearised equation ``mean + var*tau =
    E_{Qbar_tau}[T | T > log(1 + a_n)]`` is solved with ``mean``/``var``
    defaulting to the moments of ``T`` (``1/alpha`` and ``1/alpha**2``); the
    conjugate law of ``T`` is exponential with rate ``alpha + tau``, whose
    conditional mean is ``log(1 + a_n) + 1/(alpha + tau)``.
    """
    if not alpha > 2:
        raise PreconditionError("pareto_tail_tilt requires alpha > 2 (finite mean and variance)")
    if not a_n > 0:
        raise PreconditionError("a_n must be positive")
    mean = 1.0 / alpha if mean is None else float(mean)
    var = 1.0 / alpha**2 if var is None else float(var)
    c = math.log1p(a_n)
    F = lambda tau: mean + var * tau - (c + 1.0 / (alpha + tau))
    if F(0.0) >= 0:
        raise PreconditionError("E[T | T > log(1 + a_n)] must exceed the supplied mean")
    hi = alpha * (1 - 1e-12)
    if F(hi) <= 0:
        raise NumericalError("linearised Pareto equation has no root with positive tilted index")
    tau = optimize.brentq(F, 0.0, hi, xtol=1e-15, rtol=1e-15)
    theta = 1.0 - tau / alpha
    return alpha * theta
