"""Exponential embedding primitives.

A :class:`TiltingFamily` wraps a base law ``P`` together with its cumulant
generating function ``psi``.  The tilted law is ``dQ_theta/dP = exp(theta*x -
psi(theta))`` and the conjugate law is ``Qbar_theta = Q_{-theta}``.
"""
from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "DomainError",
    "PreconditionError",
    "NumericalError",
    "ThetaDomain",
    "TailEvent",
    "TiltingFamily",
    "Negated",
    "ConjugateView",
    "likelihood_ratio",
    "conjugate_view",
    "variance_functional_G",
]

# relative margin kept away from poles of psi
BOUNDARY_MARGIN = 1e-9
# quadrature covers the conjugate mean +/- this many sds
QUAD_SPAN = 40.0


class DomainError(ValueError):
    """A tilt parameter lies outside the admissible interval."""


class PreconditionError(ValueError):
    """Inputs violate a documented precondition."""


class NumericalError(RuntimeError):
    """A numerical routine failed to reach the requested accuracy."""


@dataclass(frozen=True)
class ThetaDomain:
    """Open interval ``(lower, upper)`` on which psi is finite."""

    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.lower < 0 < self.upper:
            raise ValueError(f"theta domain must contain 0, got ({self.lower}, {self.upper})")

    def __contains__(self, theta) -> bool:
        return bool(self.lower < theta < self.upper)

    def clipped(self) -> tuple[float, float]:
        """Interval shrunk by a relative margin at finite ends."""
        lo = self.lower * (1 - BOUNDARY_MARGIN) if math.isfinite(self.lower) else self.lower
        hi = self.upper * (1 - BOUNDARY_MARGIN) if math.isfinite(self.upper) else self.upper
        return lo, hi

    def negated(self) -> "ThetaDomain":
        return ThetaDomain(-self.upper, -self.lower)

    def check(self, theta: float, what: str = "theta") -> None:
        if not (np.isfinite(theta) and theta in self):
            raise DomainError(
                f"{what}={theta!r} outside admissible interval ({self.lower}, {self.upper})"
            )


@dataclass(frozen=True)
class TailEvent:
    """``{X > threshold}`` if ``upper`` else ``{X < threshold}``."""

    threshold: float
    upper: bool = True

    def indicator(self, x):
        x = np.asarray(x)
        return x > self.threshold if self.upper else x < self.threshold

    def canonical(self, family: "TiltingFamily") -> tuple["TiltingFamily", float]:
        """Rewrite as an upper-tail event of a (possibly negated) family."""
        if self.upper:
            return family, self.threshold
        return Negated(family), -self.threshold


class TiltingFamily(ABC):
    """Base law embedded in its exponential family.

    Subclasses provide psi and its first two derivatives, a sampler for the
    tilted law, tail moments under the tilted law and the base density (the
    density is used only by the quadrature oracle :func:`variance_functional_G`).
    """

    name: str = "family"
    domain: ThetaDomain = ThetaDomain()
    discrete: bool = False
    support: tuple[float, float] = (-math.inf, math.inf)

    @abstractmethod
    def psi(self, theta): ...

    @abstractmethod
    def psi_prime(self, theta): ...

    @abstractmethod
    def psi_double_prime(self, theta): ...

    @abstractmethod
    def sample_tilted(self, theta: float, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` values from ``Q_theta``."""

    @abstractmethod
    def tail_moments(self, theta: float, a: float) -> tuple[float, float]:
        """Return ``(Q_theta(X > a), E_{Q_theta}[X; X > a])``."""

    def lower_tail_moments(self, theta: float, a: float) -> tuple[float, float]:
        """``(Q_theta(X < a), E_{Q_theta}[X; X < a])``; override where the complement cancels."""
        p, m = self.tail_moments(theta, a)
        return 1.0 - p, float(self.psi_prime(theta)) - m

    def logpdf(self, x):
        """Log density (log mass function for discrete laws) of ``P``."""
        raise NotImplementedError(f"{self.name} has no base density")

    @property
    def base_mean(self) -> float:
        return float(self.psi_prime(0.0))

    @property
    def base_var(self) -> float:
        return float(self.psi_double_prime(0.0))

    def tilted_sd(self, theta: float) -> float:
        return math.sqrt(float(self.psi_double_prime(theta)))

    def tail_prob(self, a: float) -> float:
        return self.tail_moments(0.0, a)[0]

    def conditional_mean_conjugate(self, theta: float, a: float) -> float:
        """``E_{Qbar_theta}[X | X > a]``."""
        self.domain.check(-theta, "-theta")
        p, m = self.tail_moments(-theta, a)
        if not p > 0:
            raise NumericalError(
                f"{self.name}: conjugate tail mass underflows at theta={theta}, a={a}"
            )
        return m / p

    def isf(self, p: float) -> float:
        """Threshold ``a`` with ``P(X > a) = p``."""
        if not 0 < p < 1:
            raise PreconditionError("tail probability must lie in (0, 1)")
        mu, sd = self.base_mean, math.sqrt(self.base_var)
        lo, hi = mu - sd, mu + sd
        if self.support[0] > -math.inf:
            lo = max(lo, self.support[0])
        while self.tail_prob(lo) < p:
            lo -= 2 * (hi - lo)
        while self.tail_prob(hi) > p:
            hi += 2 * (hi - lo)
        return optimize.brentq(lambda x: self.tail_prob(x) - p, lo, hi, xtol=1e-13, rtol=1e-14)

    def weighted_tail_integral(self, theta: float, a: float) -> float:
        """``E_P[exp(-theta*X + psi(theta)); X > a]`` by quadrature or summation."""
        lo, hi = max(a, self.support[0]), self.support[1]
        if not lo < hi:
            return 0.0
        psi_t = float(self.psi(theta))
        if self.discrete:
            return self._weighted_tail_sum(theta, psi_t, a)
        centre, scale = self._conjugate_location(theta)
        if not math.isfinite(lo):
            lo = centre - QUAD_SPAN * scale
        right = max(lo, centre) + QUAD_SPAN * scale
        pts = [lo]
        step = scale / 4
        while pts[-1] + step < min(right, hi):
            pts.append(pts[-1] + step)
            step *= 2
        pts.append(min(right, hi))
        if right < hi:
            pts.append(hi)

        def integrand(x):
            return math.exp(-theta * x + psi_t + float(self.logpdf(x)))

        total, err = 0.0, 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                for left, r in zip(pts[:-1], pts[1:]):
                    v, e = integrate.quad(integrand, left, r, epsabs=1e-16, epsrel=1e-11, limit=400)
                    total += v
                    err += e
            except integrate.IntegrationWarning as exc:
                raise NumericalError(f"{self.name}: quadrature failed on [{lo}, {hi}]: {exc}") from exc
        if err > 1e-12 + 1e-7 * abs(total):
            raise NumericalError(f"{self.name}: quadrature error estimate {err:.3g} too large")
        return total

    def _weighted_tail_sum(self, theta, psi_t, a):
        raise NotImplementedError

    def _conjugate_location(self, theta):
        """Mean and sd of ``Q_{-theta}``, where the quadrature integrand lives."""
        if -theta in self.domain:
            return float(self.psi_prime(-theta)), self.tilted_sd(-theta)
        return self.base_mean, math.sqrt(self.base_var)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class Negated(TiltingFamily):
    """Law of ``-X``; lower-tail events of ``X`` become upper-tail events here."""

    def __init__(self, base: TiltingFamily):
        if base.discrete:
            raise NotImplementedError("lower tails of discrete families are not supported")
        self.base = base
        self.name = f"-{base.name}"
        self.domain = base.domain.negated()
        self.support = (-base.support[1], -base.support[0])

    def psi(self, theta):
        return self.base.psi(-np.asarray(theta, dtype=float))

    def psi_prime(self, theta):
        return -self.base.psi_prime(-np.asarray(theta, dtype=float))

    def psi_double_prime(self, theta):
        return self.base.psi_double_prime(-np.asarray(theta, dtype=float))

    def sample_tilted(self, theta, rng, size):
        return -self.base.sample_tilted(-theta, rng, size)

    def tail_moments(self, theta, a):
        # Q^{-X}_theta(-X > a) = Q^X_{-theta}(X < -a)
        p, m = self.base.lower_tail_moments(-theta, -a)
        return p, -m

    def lower_tail_moments(self, theta, a):
        p, m = self.base.tail_moments(-theta, -a)
        return p, -m

    def logpdf(self, x):
        return self.base.logpdf(-np.asarray(x, dtype=float))


class ConjugateView:
    """Sampler for ``Qbar_theta = Q_{-theta}``."""

    def __init__(self, family: TiltingFamily, theta: float):
        family.domain.check(-theta, "-theta")
        self.family = family
        self.theta = float(theta)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.family.sample_tilted(-self.theta, rng, size)

    @property
    def mean(self) -> float:
        return float(self.family.psi_prime(-self.theta))


def likelihood_ratio(family: TiltingFamily, theta: float, x):
    """``dP/dQ_theta`` at ``x``, i.e. ``exp(-theta*x + psi(theta))``."""
    family.domain.check(theta)
    x = np.asarray(x, dtype=float)
    out = np.exp(-theta * x + family.psi(theta))
    return float(out) if out.ndim == 0 else out


def conjugate_view(family: TiltingFamily, theta: float) -> ConjugateView:
    return ConjugateView(family, theta)


def variance_functional_G(family: TiltingFamily, theta: float, event: TailEvent) -> float:
    """Second moment ``G(theta) = E[1{X in A} exp(-theta X + psi(theta))]``.

    Evaluated by deterministic quadrature (summation for discrete laws)
    against the base density.  This is the reference oracle for optimal
    tilts and for the analytic efficiency RE*; the Monte Carlo estimators
    never call it.
    """
    family.domain.check(theta)
    fam, a = event.canonical(family)
    return fam.weighted_tail_integral(theta if event.upper else -theta, a)
