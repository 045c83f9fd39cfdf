"""Concrete tilting families.

Each class exposes the cumulant generating function of its base law, the
tilted sampler and closed-form (or series) tail moments under the tilted law.
The table of tilted laws:

=================  ==========================================  ============================
base law           tilted law ``Q_theta``                      ``psi'(theta)``
=================  ==========================================  ============================
B(n, p)            B(n, p e^t / (p e^t + 1 - p))               n p e^t / (1 - p + p e^t)
Pois(lam)          Pois(lam e^t)                               lam e^t
N(0, s^2)          N(s^2 t, s^2)                               s^2 t
E(1)               E(rate 1 - t)                               1 / (1 - t)
chi2(k)            Gamma(k/2, scale 2 / (1 - 2t))              k / (1 - 2t)
Gamma(a, b)        Gamma(a, scale b / (1 - b t))               a b / (1 - b t)
ncchi2(k, lam)     Gamma((k+2N)/2, 2/(1-2t)),                  (lam + k(1-2t)) / (1-2t)^2
                   N ~ Pois(lam / (2(1-2t)))
U(0, 1)            density prop. to e^{t x} on [0, 1]          e^t/(e^t - 1) - 1/t
=================  ==========================================  ============================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .core import (
    NumericalError,
    PreconditionError,
    ThetaDomain,
    TiltingFamily,
)

__all__ = [
    "Binomial",
    "Poisson",
    "Normal",
    "Gamma",
    "Exponential",
    "ChiSquare",
    "NoncentralChiSquare",
    "Uniform",
    "CompoundPoisson",
    "FamilySpec",
    "CompoundPoissonSpec",
    "make_family",
    "make_compound_poisson",
    "exponential_theta_star",
    "normal_tilt_equation",
    "normal_hazard",
]

# series truncation for Poisson mixtures
MIXTURE_TAIL = 1e-14
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)
COMPOUND_TAIL = 1e-12


def normal_hazard(z):
    """``phi(z) / (1 - Phi(z))``, stable far into the upper tail."""
    z = np.asarray(z, dtype=float)
    out = np.exp(-0.5 * z * z - 0.5 * math.log(2 * math.pi) - special.log_ndtr(-z))
    return float(out) if out.ndim == 0 else out


def _poisson_window(mean: float, tail: float) -> np.ndarray:
    """Indices carrying all but ``tail`` of a Poisson(mean) law."""
    if mean <= 0:
        return np.arange(1)
    lo = int(stats.poisson.ppf(tail, mean))
    hi = int(stats.poisson.isf(tail, mean)) + 1
    return np.arange(max(lo - 1, 0), hi + 1)


class Normal(TiltingFamily):
    """``N(0, sigma^2)``; tilted law ``N(sigma^2 theta, sigma^2)``."""

    def __init__(self, sigma: float = 1.0):
        if not sigma > 0:
            raise PreconditionError("Normal: sigma must be positive")
        self.sigma = float(sigma)
        self.name = "normal" if sigma == 1 else f"normal(sigma={sigma:g})"

    def psi(self, theta):
        return 0.5 * self.sigma**2 * np.square(theta)

    def psi_prime(self, theta):
        return self.sigma**2 * np.asarray(theta, dtype=float)

    def psi_double_prime(self, theta):
        return self.sigma**2 + 0.0 * np.asarray(theta, dtype=float)

    def sample_tilted(self, theta, rng, size):
        self.domain.check(theta)
        return rng.normal(self.sigma**2 * theta, self.sigma, size)

    def tail_moments(self, theta, a):
        m, s = self.sigma**2 * theta, self.sigma
        z = (a - m) / s
        p = special.ndtr(-z)
        return float(p), float(m * p + s * stats.norm.pdf(z))

    def lower_tail_moments(self, theta, a):
        m, s = self.sigma**2 * theta, self.sigma
        z = (a - m) / s
        p = special.ndtr(z)
        return float(p), float(m * p - s * stats.norm.pdf(z))

    def conditional_mean_conjugate(self, theta, a):
        m, s = -self.sigma**2 * theta, self.sigma
        return m + s * normal_hazard((a - m) / s)

    def logpdf(self, x):
        z = np.asarray(x, dtype=float) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _HALF_LOG_2PI

    def isf(self, p):
        return float(stats.norm.isf(p, scale=self.sigma))


class Gamma(TiltingFamily):
    """``Gamma(shape=alpha, scale=beta)``; tilted scale ``beta / (1 - beta theta)``."""

    def __init__(self, alpha: float, beta: float):
        if not (alpha > 0 and beta > 0):
            raise PreconditionError("Gamma: alpha and beta must be positive")
        self.alpha, self.beta = float(alpha), float(beta)
        self.domain = ThetaDomain(-math.inf, 1.0 / self.beta)
        self.support = (0.0, math.inf)
        self.name = f"gamma({alpha:g},{beta:g})"
        self._log_norm = special.gammaln(self.alpha) + self.alpha * math.log(self.beta)

    def scale(self, theta):
        return self.beta / (1.0 - self.beta * theta)

    def psi(self, theta):
        return -self.alpha * np.log1p(-self.beta * np.asarray(theta, dtype=float))

    def psi_prime(self, theta):
        return self.alpha * self.beta / (1.0 - self.beta * np.asarray(theta, dtype=float))

    def psi_double_prime(self, theta):
        return self.alpha * self.beta**2 / (1.0 - self.beta * np.asarray(theta, dtype=float)) ** 2

    def sample_tilted(self, theta, rng, size):
        self.domain.check(theta)
        return rng.gamma(self.alpha, self.scale(theta), size)

    def tail_moments(self, theta, a):
        s = self.scale(theta)
        if a <= 0:
            return 1.0, self.alpha * s
        x = a / s
        return (
            float(special.gammaincc(self.alpha, x)),
            float(self.alpha * s * special.gammaincc(self.alpha + 1, x)),
        )

    def lower_tail_moments(self, theta, a):
        s = self.scale(theta)
        if a <= 0:
            return 0.0, 0.0
        x = a / s
        return (
            float(special.gammainc(self.alpha, x)),
            float(self.alpha * s * special.gammainc(self.alpha + 1, x)),
        )

    def conditional_mean_conjugate(self, theta, a):
        self.domain.check(-theta, "-theta")
        s = self.scale(-theta)
        if a <= 0:
            return self.alpha * s
        x = a / s
        q = special.gammaincc(self.alpha, x)
        if not q > 0:
            raise NumericalError(f"{self.name}: upper incomplete gamma underflows at x={x}")
        # Q(k+1, x) = Q(k, x) + x^k e^{-x} / Gamma(k+1)
        log_ratio = self.alpha * math.log(x) - x - special.gammaln(self.alpha) - math.log(q)
        return self.alpha * s + s * math.exp(log_ratio)

    def logpdf(self, x):
        # scipy.stats per-call overhead dominates scalar quadrature, so write it out
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = special.xlogy(self.alpha - 1, x) - x / self.beta - self._log_norm
        return np.where(x >= 0, out, -np.inf)

    def isf(self, p):
        return float(stats.gamma.isf(p, self.alpha, scale=self.beta))


class Exponential(Gamma):
    """Unit-rate exponential ``E(1)``."""

    def __init__(self):
        super().__init__(1.0, 1.0)
        self.name = "exp1"


class ChiSquare(Gamma):
    """Central ``chi2(k)``, i.e. ``Gamma(k/2, 2)``."""

    def __init__(self, k: float):
        if not k > 0:
            raise PreconditionError("ChiSquare: degrees of freedom must be positive")
        super().__init__(k / 2.0, 2.0)
        self.k = float(k)
        self.name = f"chi2({k:g})"


class NoncentralChiSquare(TiltingFamily):
    """Noncentral ``chi2(k, lam)`` as a Poisson mixture of central laws."""

    def __init__(self, k: float, lam: float):
        if not (k > 0 and lam > 0):
            raise PreconditionError("NoncentralChiSquare: k and lam must be positive")
        self.k, self.lam = float(k), float(lam)
        self.domain = ThetaDomain(-math.inf, 0.5)
        self.support = (0.0, math.inf)
        self.name = f"ncchi2({k:g},{lam:g})"

    def psi(self, theta):
        u = 1.0 - 2.0 * np.asarray(theta, dtype=float)
        return self.lam * theta / u - 0.5 * self.k * np.log(u)

    def psi_prime(self, theta):
        u = 1.0 - 2.0 * np.asarray(theta, dtype=float)
        return (self.lam + self.k * u) / u**2

    def psi_double_prime(self, theta):
        u = 1.0 - 2.0 * np.asarray(theta, dtype=float)
        return 4.0 * self.lam / u**3 + 2.0 * self.k / u**2

    def mixture(self, theta):
        """``(poisson_mean, gamma_scale)`` of the tilted mixture."""
        u = 1.0 - 2.0 * theta
        return self.lam / (2.0 * u), 2.0 / u

    def sample_tilted(self, theta, rng, size):
        self.domain.check(theta)
        mean, scale = self.mixture(theta)
        n = rng.poisson(mean, size)
        return rng.gamma(0.5 * self.k + n, scale)

    def tail_moments(self, theta, a):
        mean, s = self.mixture(theta)
        i = _poisson_window(mean, MIXTURE_TAIL)
        w = stats.poisson.pmf(i, mean)
        shape = 0.5 * self.k + i
        if a <= 0:
            return float(w.sum()), float(np.sum(w * shape * s))
        x = a / s
        p = np.sum(w * special.gammaincc(shape, x))
        m = np.sum(w * shape * s * special.gammaincc(shape + 1, x))
        return float(p), float(m)

    def lower_tail_moments(self, theta, a):
        if a <= 0:
            return 0.0, 0.0
        mean, s = self.mixture(theta)
        i = _poisson_window(mean, MIXTURE_TAIL)
        w = stats.poisson.pmf(i, mean)
        shape = 0.5 * self.k + i
        x = a / s
        p = np.sum(w * special.gammainc(shape, x))
        m = np.sum(w * shape * s * special.gammainc(shape + 1, x))
        return float(p), float(m)

    def logpdf(self, x):
        # Bessel form, with the exponentially scaled I_v for stability
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.sqrt(self.lam * x)
            out = (-math.log(2.0) - 0.5 * (x + self.lam) + (self.k / 4 - 0.5) * np.log(x / self.lam)
                   + np.log(special.ive(self.k / 2 - 1, r)) + r)
        return np.where(x > 0, out, -np.inf)

    def isf(self, p):
        return float(stats.ncx2.isf(p, self.k, self.lam))


def _uniform_psi(t):
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < 1e-4
    ts = np.where(small, 1.0, t)
    # log((e^t - 1)/t) = |t|-branch form that never takes the log of a negative number
    at = np.abs(ts)
    big = np.where(ts > 0, at, 0.0) + np.log(-np.expm1(-at) / at)
    out = np.where(small, t / 2 + t * t / 24, big)
    return float(out) if out.ndim == 0 else out


def _uniform_psi_prime(t):
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < 1e-4
    ts = np.where(small, 1.0, t)
    # e^t/(e^t-1), written in e^{-|t|} so neither sign overflows
    at = np.abs(ts)
    big = np.where(ts > 0, 1.0, -np.exp(-at)) / -np.expm1(-at) - 1.0 / ts
    out = np.where(small, 0.5 + t / 12 - t**3 / 720, big)
    return float(out) if out.ndim == 0 else out


def _uniform_psi_double_prime(t):
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < 1e-3
    ts = np.where(small, 1.0, t)
    # e^t/(e^t-1)^2 is even in t
    at = np.abs(ts)
    big = 1.0 / ts**2 - np.exp(-at) / np.expm1(-at) ** 2
    out = np.where(small, 1 / 12 - t * t / 240, big)
    return float(out) if out.ndim == 0 else out


class Uniform(TiltingFamily):
    """``U(0, 1)``; tilted density proportional to ``e^{theta x}`` on ``[0, 1]``."""

    name = "uniform"
    support = (0.0, 1.0)

    psi = staticmethod(_uniform_psi)
    psi_prime = staticmethod(_uniform_psi_prime)
    psi_double_prime = staticmethod(_uniform_psi_double_prime)

    def sample_tilted(self, theta, rng, size):
        self.domain.check(theta)
        u = rng.random(size)
        return self.inverse_cdf(theta, u)

    @staticmethod
    def inverse_cdf(theta, u):
        """``x = log(1 + u (e^theta - 1)) / theta``."""
        u = np.asarray(u, dtype=float)
        if abs(theta) < 1e-12:
            return u
        if theta > 0:
            # 1 + log(u + (1-u) e^{-theta}) / theta, no overflow
            return 1.0 + np.log(u + (1.0 - u) * math.exp(-theta)) / theta
        return np.log1p(u * math.expm1(theta)) / theta

    def tail_moments(self, theta, a):
        if a >= 1:
            return 0.0, 0.0
        a = max(a, 0.0)
        w = 1.0 - a
        # Q_theta(X > a)
        if theta > 0:
            p = math.expm1(-theta * w) / math.expm1(-theta)
        elif theta < 0:
            p = math.exp(theta * a) * math.expm1(theta * w) / math.expm1(theta)
        else:
            p = w
        # on [a, 1] the law is a shifted, rescaled tilted uniform
        cond = a + w * float(_uniform_psi_prime(theta * w))
        return p, p * cond

    def conditional_mean_conjugate(self, theta, a):
        if a >= 1:
            raise NumericalError("uniform: event {X > a} is empty for a >= 1")
        a = max(a, 0.0)
        w = 1.0 - a
        return a + w * float(_uniform_psi_prime(-theta * w))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0) & (x <= 1), 0.0, -np.inf)

    def isf(self, p):
        if not 0 < p < 1:
            raise PreconditionError("tail probability must lie in (0, 1)")
        return 1.0 - p


class _Discrete(TiltingFamily):
    discrete = True
    support = (0.0, math.inf)

    def _dist(self, theta):
        raise NotImplementedError

    def tail_moments(self, theta, a):
        m = max(math.floor(a) + 1, 0)
        k = self._tail_support(theta, m)
        pmf = self._dist(theta).pmf(k)
        return float(pmf.sum()), float(np.sum(k * pmf))

    def logpdf(self, x):
        return self._dist(0.0).logpmf(x)

    def isf(self, p):
        if not 0 < p < 1:
            raise PreconditionError("tail probability must lie in (0, 1)")
        # smallest integer threshold with P(X > a) <= p
        return float(self._dist(0.0).isf(p))

    def _weighted_tail_sum(self, theta, psi_t, a):
        m = max(math.floor(a) + 1, 0)
        conj = -theta if -theta in self.domain else 0.0
        k = self._tail_support(conj, m)
        logw = -theta * k + psi_t + self._dist(0.0).logpmf(k)
        return float(np.sum(np.exp(logw)))


class Binomial(_Discrete):
    """``B(n, p)``; tilted success probability ``p e^t / (p e^t + 1 - p)``."""

    def __init__(self, n: int, p: float):
        if not (int(n) == n and n >= 1 and 0 < p < 1):
            raise PreconditionError("Binomial: need integer n >= 1 and 0 < p < 1")
        self.n, self.p = int(n), float(p)
        self.support = (0.0, float(self.n))
        self.name = f"binomial({self.n},{p:g})"

    def tilted_p(self, theta):
        return special.expit(special.logit(self.p) + np.asarray(theta, dtype=float))

    def psi(self, theta):
        t = np.asarray(theta, dtype=float)
        return self.n * np.logaddexp(math.log1p(-self.p), math.log(self.p) + t)

    def psi_prime(self, theta):
        return self.n * self.tilted_p(theta)

    def psi_double_prime(self, theta):
        q = self.tilted_p(theta)
        return self.n * q * (1 - q)

    def sample_tilted(self, theta, rng, size):
        self.domain.check(theta)
        return rng.binomial(self.n, float(self.tilted_p(theta)), size).astype(float)

    def _dist(self, theta):
        return stats.binom(self.n, float(self.tilted_p(theta)))

    def _tail_support(self, theta, m):
        return np.arange(m, self.n + 1)


class Poisson(_Discrete):
    """``Pois(lam)``; tilted mean ``lam e^theta``."""

    def __init__(self, lam: float):
        if not lam > 0:
            raise PreconditionError("Poisson: lam must be positive")
        self.lam = float(lam)
        self.name = f"poisson({lam:g})"

    def psi(self, theta):
        return self.lam * np.expm1(np.asarray(theta, dtype=float))

    def psi_prime(self, theta):
        return self.lam * np.exp(np.asarray(theta, dtype=float))

    psi_double_prime = psi_prime

    def sample_tilted(self, theta, rng, size):
        self.domain.check(theta)
        return rng.poisson(self.lam * math.exp(theta), size).astype(float)

    def _dist(self, theta):
        return stats.poisson(self.lam * math.exp(theta))

    def _tail_support(self, theta, m):
        mean = self.lam * math.exp(theta)
        hi = int(stats.poisson.isf(MIXTURE_TAIL * 1e-2, mean)) + 2
        return np.arange(m, max(hi, m) + 1)


@dataclass(frozen=True)
class CompoundPoissonSpec:
    """Compound Poisson ``R_t`` with normal log-jumps, observed as ``R_t - r_p``."""

    lam: float
    t: float
    eta: float
    delta2: float
    r_p: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and self.t > 0 and self.delta2 > 0):
            raise PreconditionError("CompoundPoissonSpec: need lam > 0, t > 0, delta2 > 0")


class CompoundPoisson(TiltingFamily):
    """``f(R_t) = R_t - r_p`` where ``R_t`` sums ``Pois(lam t)`` normal jumps.

    Under ``Q_theta`` jumps are ``N(eta + theta delta2, delta2)`` and the jump
    count is ``Pois(lam t exp(theta eta + theta^2 delta2 / 2))``.
    """

    def __init__(self, spec: CompoundPoissonSpec):
        self.spec = spec
        self.name = f"cpoisson({spec.lam:g},{spec.t:g},{spec.eta:g},{spec.delta2:g},{spec.r_p:g})"

    def _kappa(self, theta):
        s = self.spec
        return theta * s.eta + 0.5 * np.square(theta) * s.delta2

    def intensity(self, theta):
        """Mean jump count under ``Q_theta``."""
        return self.spec.lam * self.spec.t * np.exp(self._kappa(theta))

    def jump_mean(self, theta):
        return self.spec.eta + theta * self.spec.delta2

    def psi(self, theta):
        s = self.spec
        theta = np.asarray(theta, dtype=float)
        return s.lam * s.t * np.expm1(self._kappa(theta)) - theta * s.r_p

    def psi_prime(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.intensity(theta) * self.jump_mean(theta) - self.spec.r_p

    def psi_double_prime(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.intensity(theta) * (self.jump_mean(theta) ** 2 + self.spec.delta2)

    def sample_tilted_counts(self, theta, rng, size):
        """Return ``(N(t), R_t - r_p)`` drawn under ``Q_theta``."""
        self.domain.check(theta)
        n = rng.poisson(float(self.intensity(theta)), size)
        z = rng.standard_normal(size)
        r = n * float(self.jump_mean(theta)) + np.sqrt(n * self.spec.delta2) * z
        return n, r - self.spec.r_p

    def sample_tilted(self, theta, rng, size):
        return self.sample_tilted_counts(theta, rng, size)[1]

    def tail_moments(self, theta, a):
        c = a + self.spec.r_p
        lam = float(self.intensity(theta))
        m = float(self.jump_mean(theta))
        n = _poisson_window(lam, COMPOUND_TAIL)
        w = stats.poisson.pmf(n, lam)
        pos = n > 0
        nn = n[pos]
        sd = np.sqrt(nn * self.spec.delta2)
        z = (c - nn * m) / sd
        p_n = special.ndtr(-z)
        mass = np.sum(w[pos] * p_n)
        first = np.sum(w[pos] * (nn * m * p_n + sd * stats.norm.pdf(z)))
        if n[0] == 0 and 0.0 > c:
            mass += w[0]
        mass, first = float(mass), float(first)
        return mass, first - self.spec.r_p * mass

    def weighted_tail_integral(self, theta, a):
        """Quadrature per jump count, summed against the Poisson weights."""
        from scipy import integrate

        s = self.spec
        c = a + s.r_p
        psi_t = float(self.psi(theta))
        lam = s.lam * s.t
        conj = -theta
        n = _poisson_window(float(self.intensity(conj)), COMPOUND_TAIL)
        total = 0.0
        for k, logw in zip(n, stats.poisson.logpmf(n, lam)):
            if k == 0:
                if 0.0 > c:
                    total += math.exp(logw - theta * (0.0 - s.r_p) + psi_t)
                continue
            mu, sd = k * s.eta, math.sqrt(k * s.delta2)
            centre = k * (s.eta + conj * s.delta2)
            lo = max(c, centre - 40 * sd)
            hi = max(c, centre) + 40 * sd
            if lo >= hi:
                continue

            const = logw + psi_t + theta * s.r_p - math.log(sd) - _HALF_LOG_2PI

            def f(x, mu=mu, sd=sd, const=const):
                z = (x - mu) / sd
                return math.exp(const - theta * x - 0.5 * z * z)

            total += integrate.quad(f, lo, hi, epsabs=1e-16, epsrel=1e-11, limit=200)[0]
        return total


@dataclass(frozen=True)
class FamilySpec:
    """A family name plus keyword parameters, e.g. ``ncchi2:k=2,lam=1``."""

    name: str
    params: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "FamilySpec":
        name, _, rest = text.strip().partition(":")
        params = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, value = item.partition("=")
            if not eq:
                raise PreconditionError(f"family parameter {item!r} is not key=value")
            params[key.strip()] = float(value)
        return cls(name.strip().lower(), params)

    def __str__(self):
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v:g}" for k, v in self.params.items())


_REGISTRY = {
    "binomial": lambda n, p: Binomial(int(n), p),
    "poisson": lambda lam: Poisson(lam),
    "normal": lambda sigma=1.0: Normal(sigma),
    "exp1": lambda: Exponential(),
    "chi2": lambda k: ChiSquare(k),
    "gamma": lambda alpha, beta: Gamma(alpha, beta),
    "ncchi2": lambda k, lam: NoncentralChiSquare(k, lam),
    "uniform": lambda: Uniform(),
    "cpoisson": lambda lam, t, eta, delta2, r_p=0.0: CompoundPoisson(
        CompoundPoissonSpec(lam, t, eta, delta2, r_p)
    ),
}


def make_family(spec) -> TiltingFamily:
    """Build a family from a :class:`FamilySpec`, a spec string or a mapping."""
    if isinstance(spec, str):
        spec = FamilySpec.parse(spec)
    elif isinstance(spec, dict):
        params = dict(spec)
        spec = FamilySpec(str(params.pop("name")).lower(), params)
    try:
        factory = _REGISTRY[spec.name]
    except KeyError:
        raise PreconditionError(
            f"unknown family {spec.name!r}; choose from {', '.join(sorted(_REGISTRY))}"
        ) from None
    try:
        return factory(**spec.params)
    except TypeError as exc:
        raise PreconditionError(f"bad parameters for family {spec.name!r}: {exc}") from None


def make_compound_poisson(spec: CompoundPoissonSpec) -> CompoundPoisson:
    return CompoundPoisson(spec)


def exponential_theta_star(a: float) -> float:
    """Variance-optimal tilt for ``P(E(1) > a)``: ``(sqrt(1 + a^2) - 1) / a``."""
    if not a > 0:
        raise PreconditionError("exponential_theta_star requires a > 0")
    # same value as (-1 + sqrt(1 + a^2)) / a without the cancellation
    return a / (1.0 + math.sqrt(1.0 + a * a))


def normal_tilt_equation(a: float, theta: float) -> float:
    """Residual ``theta - (phi(a+theta)/(1-Phi(a+theta)) - theta)`` for ``N(0,1)``."""
    return 2.0 * theta - normal_hazard(a + theta)
