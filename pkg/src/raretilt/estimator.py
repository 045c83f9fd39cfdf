"""Crude and importance-sampling tail-probability estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field
from typing import Optional

import numpy as np

from .core import (
    PreconditionError,
    TailEvent,
    TiltingFamily,
    variance_functional_G,
)
from .solver import SolverConfig, SolverStatus, large_deviation_tilt, solve_optimal_tilt
from .streams import blocked_moments

__all__ = [
    "CSV_FIELDS",
    "EstimateReport",
    "EfficiencyReport",
    "ReplicatedEstimate",
    "estimate_naive",
    "estimate_is",
    "relative_efficiency",
    "analytic_re",
    "estimate_two_sided",
]

CSV_FIELDS = ("method", "family", "a", "theta", "n", "seed", "p_hat", "std_err", "re", "re_star")


def _as_event(event) -> TailEvent:
    return event if isinstance(event, TailEvent) else TailEvent(float(event))


@dataclass(frozen=True)
class EstimateReport:
    """Outcome of one Monte Carlo run.

    ``variance`` is the per-sample variance (ddof=0) of the weighted
    indicators, so ``std_err = sqrt(variance / n)``.
    """

    p_hat: float
    variance: float
    n: int
    method: str
    theta: float
    seed: int
    family: str = ""
    a: float = math.nan
    strata: tuple = field(default=(), compare=False)

    @property
    def std_err(self) -> float:
        return math.sqrt(self.variance / self.n)

    def row(self, re: float = math.nan, re_star: float = math.nan) -> dict:
        return {
            "method": self.method, "family": self.family, "a": self.a, "theta": self.theta,
            "n": self.n, "seed": self.seed, "p_hat": self.p_hat, "std_err": self.std_err,
            "re": re, "re_star": re_star,
        }


@dataclass(frozen=True)
class EfficiencyReport:
    re_empirical: float
    re_star: float
    p_reference: float
    theta_star: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReplicatedEstimate:
    """``M`` replications of a ``k``-sample estimator.

    ``variance`` is the sample variance (ddof=1) of the ``M`` estimates, i.e.
    the variance of one ``k``-sample estimator.
    """

    p_hat: float
    variance: float
    k: int
    M: int
    theta: float
    seed: int
    threshold: float

    @classmethod
    def from_samples(cls, est, k, theta, seed, threshold) -> "ReplicatedEstimate":
        est = np.asarray(est, dtype=float)
        return cls(float(est.mean()), float(est.var(ddof=1)), int(k), est.size,
                   float(theta), int(seed), float(threshold))

    @property
    def pooled_se(self) -> float:
        return math.sqrt(self.variance / self.M)


def estimate_naive(family: TiltingFamily, event, n: int, seed: int, workers: int = 1) -> EstimateReport:
    """Fraction of base-law draws that land in ``event``."""
    event = _as_event(event)
    if n < 1:
        raise PreconditionError("n must be at least 1")

    def draw(rng, size):
        return event.indicator(family.sample_tilted(0.0, rng, size)).astype(float)

    mean, var = blocked_moments(draw, n, seed, workers)
    return EstimateReport(mean, var, int(n), "naive", 0.0, int(seed), family.name, event.threshold)


def estimate_is(family: TiltingFamily, theta: float, event, n: int, seed: int,
                workers: int = 1) -> EstimateReport:
    """Average of ``1{X in A} exp(-theta X + psi(theta))`` with ``X ~ Q_theta``.

    With ``theta = 0`` this consumes the random stream exactly as
    :func:`estimate_naive` does and returns the same numbers.
    """
    event = _as_event(event)
    if n < 1:
        raise PreconditionError("n must be at least 1")
    family.domain.check(theta)
    psi_t = float(family.psi(theta))

    def draw(rng, size):
        x = family.sample_tilted(theta, rng, size)
        hit = event.indicator(x)
        out = np.zeros(size)
        out[hit] = np.exp(-theta * x[hit] + psi_t)
        return out

    mean, var = blocked_moments(draw, n, seed, workers)
    method = "naive" if theta == 0 else "is"
    return EstimateReport(mean, var, int(n), method, float(theta), int(seed), family.name, event.threshold)


def analytic_re(family: TiltingFamily, event, theta: float) -> float:
    """``p(1-p) / (G(theta) - p^2)`` with ``G`` from the quadrature oracle."""
    event = _as_event(event)
    fam, a = event.canonical(family)
    p = fam.tail_prob(a)
    g = variance_functional_G(family, theta, event)
    return p * (1 - p) / (g - p * p)


def relative_efficiency(naive: EstimateReport, is_report: EstimateReport,
                        family: Optional[TiltingFamily] = None, event=None,
                        cfg: Optional[SolverConfig] = None) -> EfficiencyReport:
    """Empirical variance ratio, plus the analytic benchmark when ``family`` is given.

    The benchmark is evaluated at the optimal tilt for ``event`` (defaulting
    to the IS report's threshold as an upper tail).
    """
    degenerate = not is_report.variance > 0
    if degenerate:
        re_emp = math.inf if naive.variance > 0 else math.nan
    else:
        re_emp = naive.variance / is_report.variance
    re_star, p_ref, theta_star = math.nan, math.nan, math.nan
    if family is not None:
        event = _as_event(event if event is not None else is_report.a)
        theta_star = solve_optimal_tilt(family, event, cfg).theta_star
        fam, a = event.canonical(family)
        p_ref = fam.tail_prob(a)
        re_star = analytic_re(family, event, theta_star)
    return EfficiencyReport(re_emp, re_star, p_ref, theta_star, degenerate)


def _chernoff_weight(fam: TiltingFamily, a: float) -> float:
    """Large-deviation bound ``exp(-(theta a - psi(theta)))`` at ``psi'(theta) = a``."""
    try:
        t = large_deviation_tilt(fam, a)
    except ValueError:
        # a beyond the range of psi': the stratum carries no mass worth sampling
        return 0.0
    return math.exp(-(t * a - float(fam.psi(t))))


def estimate_two_sided(family: TiltingFamily, a: float, n: int, seed: int,
                       lower: Optional[float] = None, cfg: Optional[SolverConfig] = None,
                       workers: int = 1) -> EstimateReport:
    """``P(X > a) + P(X < lower)`` with one optimally tilted run per stratum.

    ``lower`` defaults to ``-a``.  Samples are split in proportion to the
    large-deviation (Chernoff) bound of each stratum.  A stratum whose
    event is not rare in its tail direction is sampled without tilting; one
    whose optimal tilt falls outside the conjugate domain uses the
    dominating-point tilt instead.
    """
    if lower is None:
        if not a > 0:
            raise PreconditionError("a must be positive when lower is not given")
        lower = -a
    if not lower < a:
        raise PreconditionError("lower threshold must lie below the upper one")
    events = (TailEvent(float(a), True), TailEvent(float(lower), False))
    weights, tilts = [], []
    for ev in events:
        fam, thr = ev.canonical(family)
        weights.append(_chernoff_weight(fam, thr) if thr > fam.base_mean else 1.0)
        try:
            res = solve_optimal_tilt(family, ev, cfg)
        except PreconditionError:
            tilts.append(0.0)
            continue
        if res.status is SolverStatus.DOMAIN_FAILURE:
            # root lies where the conjugate law does not exist; use the dominating point
            t = large_deviation_tilt(fam, thr)
            tilts.append(t if ev.upper else -t)
        else:
            tilts.append(res.theta_star)
    total = sum(weights)
    if not total > 0:
        raise PreconditionError("both strata have negligible mass")
    n_up = int(round(n * weights[0] / total))
    sizes = (n_up, n - n_up)
    parts = []
    for s, (ev, th, m) in enumerate(zip(events, tilts, sizes)):
        if m == 0:
            parts.append(EstimateReport(0.0, 0.0, 1, "skipped", th, int(seed), family.name, ev.threshold))
            continue
        parts.append(_estimate_stratum(family, th, ev, m, seed, s, workers))
    p_hat = sum(r.p_hat for r in parts)
    var_of_mean = sum(r.variance / r.n for r in parts if r.method != "skipped")
    return EstimateReport(p_hat, var_of_mean * n, int(n), "is-two-sided", math.nan, int(seed),
                          family.name, float(a), tuple(parts))


def _estimate_stratum(family, theta, event, n, seed, stratum, workers):
    fam, thr = event.canonical(family)
    t = theta if event.upper else -theta
    fam.domain.check(t)
    psi_t = float(fam.psi(t))

    def draw(rng, size):
        x = fam.sample_tilted(t, rng, size)
        hit = x > thr
        out = np.zeros(size)
        out[hit] = np.exp(-t * x[hit] + psi_t)
        return out

    mean, var = blocked_moments(draw, n, seed, workers, tag=(stratum,))
    return EstimateReport(mean, var, int(n), "is", float(theta), int(seed), family.name, event.threshold)
