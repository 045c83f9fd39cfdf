"""Harnesses for the benchmark experiments, one function per result layout.

Each function returns a list of flat ``dict`` rows; formatting is left to
the caller (see :mod:`raretilt.cli`).
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .bootstrap import (
    BootstrapStatistic,
    coverage_experiment,
    longley_problem,
    replicate_resampling,
    solve_bootstrap_tilt,
)
from .core import PreconditionError, TailEvent
from .estimator import analytic_re, estimate_is, estimate_naive
from .families import NoncentralChiSquare, make_family
from .solver import SolverConfig, solve_optimal_tilt
from .var import (
    JumpDiffusionSpec,
    QuadraticPortfolio,
    estimate_var_tail,
    find_var_quantile,
    solve_theta_p,
)

__all__ = [
    "TABLE2_FAMILIES",
    "TAIL_PROBS",
    "table2",
    "table3",
    "model_from_dict",
    "table4",
    "var_quantiles",
    "table5",
    "table6",
]

TABLE2_FAMILIES = ("normal", "exp1", "chi2:k=1", "gamma:alpha=4,beta=10", "ncchi2:k=2,lam=10")
TAIL_PROBS = (0.0001, 0.001, 0.01, 0.05, 0.1)


def _efficiency_row(fam, a, n, seed, cfg):
    event = TailEvent(a)
    res = solve_optimal_tilt(fam, event, cfg)
    th = res.theta_star
    nv = estimate_naive(fam, event, n, seed)
    iv = estimate_is(fam, th, event, n, seed + 1)
    re = nv.variance / iv.variance if iv.variance > 0 else math.nan
    return th, nv, iv, re, analytic_re(fam, event, th)


def table2(families: Sequence[str] = TABLE2_FAMILIES, probs: Sequence[float] = TAIL_PROBS,
           n: int = 100_000, seed: int = 1, cfg: SolverConfig | None = None) -> list[dict]:
    """Empirical and analytic relative efficiency at thresholds with ``P(X > a) = p``."""
    rows = []
    for i, spec in enumerate(families):
        fam = make_family(spec)
        for j, p in enumerate(probs):
            a = fam.isf(p)
            th, nv, iv, re, re_star = _efficiency_row(fam, a, n, seed + 100 * i + 10 * j, cfg)
            rows.append({"family": fam.name, "p": p, "a": a, "theta_star": th, "naive_p": nv.p_hat,
                         "is_p": iv.p_hat, "re": re, "re_star": re_star})
    return rows


def table3(kappa: float, lam: float, probs: Sequence[float] = TAIL_PROBS, n: int = 10_000,
           seed: int = 1, cfg: SolverConfig | None = None) -> list[dict]:
    """Crude versus optimally tilted estimates of ``P(ncchi2(kappa, lam) > a)``."""
    fam = NoncentralChiSquare(kappa, lam)
    rows = []
    for j, p in enumerate(probs):
        a = float(stats.ncx2.isf(p, kappa, lam))
        th, nv, iv, re, re_star = _efficiency_row(fam, a, n, seed + 10 * j, cfg)
        rows.append({"p": p, "a": a, "theta_star": th, "mc_mean": nv.p_hat, "mc_se": nv.std_err,
                     "is_mean": iv.p_hat, "is_se": iv.std_err, "re": re, "re_star": re_star})
    return rows


def _corr(d, rho=None, matrix=None):
    if matrix is not None:
        return np.asarray(matrix, dtype=float)
    out = np.full((d, d), float(rho or 0.0))
    np.fill_diagonal(out, 1.0)
    return out


def model_from_dict(cfg: dict) -> tuple[QuadraticPortfolio, JumpDiffusionSpec]:
    """Build ``(portfolio, spec)`` from a configuration mapping.

    Required keys: ``dt``, ``lam``, ``sigma``, ``delta``.  Optional: ``mu``,
    ``eta`` (default zeros), ``rho`` or ``corr``, ``jump_rho`` or
    ``jump_corr``.  The portfolio is given either in diagonal form (``b``,
    ``eigen``, ``a1``) or through greeks (``a0``, ``a1``, ``A1``).
    """
    sigma = np.asarray(cfg["sigma"], dtype=float)
    d = sigma.size
    zeros = np.zeros(d)
    spec = JumpDiffusionSpec(
        mu=cfg.get("mu", zeros), sigma=sigma, corr=_corr(d, cfg.get("rho"), cfg.get("corr")),
        lam=float(cfg["lam"]), eta=cfg.get("eta", zeros), delta=cfg["delta"],
        jump_corr=_corr(d, cfg.get("jump_rho"), cfg.get("jump_corr")), dt=float(cfg["dt"]),
    )
    a1 = cfg.get("a1", np.ones(d))
    if "A1" in cfg:
        pf = QuadraticPortfolio.from_greeks(spec, float(cfg.get("a0", 0.0)), a1, cfg["A1"])
    elif "b" in cfg and "eigen" in cfg:
        pf = QuadraticPortfolio.from_eigen(spec, cfg["b"], cfg["eigen"], a1, float(cfg.get("b0", 0.0)))
    else:
        raise PreconditionError("portfolio needs either A1 (greeks) or b and eigen (diagonal form)")
    return pf, spec


def table4(model: dict, thresholds: Iterable[float], k: int = 1000, M: int = 10_000,
           m: int = 50_000, seed: int = 1, workers: int = 1) -> list[dict]:
    """Crude versus tilted ``k``-sample estimators over ``M`` replications."""
    pf, spec = model_from_dict(model)
    rows = []
    for j, r in enumerate(thresholds):
        res = solve_theta_p(pf, spec, r, m=m, seed=seed + 10 * j)
        nv = estimate_var_tail(pf, spec, 0.0, r, k, M, seed + 10 * j + 1, workers)
        iv = estimate_var_tail(pf, spec, res.theta_star, r, k, M, seed + 10 * j + 2, workers)
        rows.append({"r_p": r, "theta": res.theta_star, "nv_p": nv.p_hat, "nv_var": nv.variance,
                     "is_p": iv.p_hat, "is_var": iv.variance, "is_pooled_se": iv.pooled_se,
                     "re": nv.variance / iv.variance})
    return rows


def var_quantiles(model: dict, probs: Iterable[float], n: int = 200_000, seed: int = 1,
                  budget: int = 40) -> list[dict]:
    pf, spec = model_from_dict(model)
    rows = []
    for j, p in enumerate(probs):
        q = find_var_quantile(pf, spec, p, n=n, seed=seed + 100 * j, budget=budget)
        rows.append({"p": p, "r_p": q.r_p, "p_hat": q.p_hat, "std_err": q.std_err,
                     "status": q.status, "evaluations": q.evaluations})
    return rows


def table5(alphas: Sequence[float] = (0.1, 0.05, 0.01), B: int = 100, M: int = 10_000,
           family: str = "normal", p_eff: int = 7, divisor: int | None = None, seed: int = 1,
           workers: int = 1) -> list[dict]:
    """Naive versus importance resampling of ``P(T* > a)`` on the Longley fit.

    Thresholds are the upper ``alpha`` points of ``chi2_n / p_eff``.
    """
    prob = longley_problem(divisor)
    n = prob.n
    rows = []
    for j, al in enumerate(alphas):
        a = float(stats.chi2.isf(al, n) / p_eff)
        th = solve_bootstrap_tilt(BootstrapStatistic(a, n, p_eff)).theta_star
        nv = replicate_resampling(prob, 0.0, a, family, B, M, seed + 10 * j, p_eff, workers)
        iv = replicate_resampling(prob, th, a, family, B, M, seed + 10 * j + 1, p_eff, workers)
        rows.append({"a": a, "alpha": al, "theta": th, "nv_mean": nv.p_hat, "nv_var": nv.variance,
                     "is_mean": iv.p_hat, "is_var": iv.variance, "re": nv.variance / iv.variance})
    return rows


def table6(runs: Sequence[tuple[str, int]] = (("naive", 1000), ("importance", 400),
                                                ("importance", 200), ("importance", 100)),
           trials: int = 500, nominal: float = 0.95, divisor: int | None = None, seed: int = 1,
           workers: int = 1) -> list[dict]:
    prob = longley_problem(divisor)
    rows = []
    for j, (method, B) in enumerate(runs):
        rep = coverage_experiment(prob, nominal, B, trials, seed + j, method, workers=workers)
        rows.append({"method": method, "B": B, "noncoverage": rep.noncoverage,
                     "mean_volume": rep.mean_volume, "sd_volume": rep.sd_volume,
                     "mean_t_crit": rep.mean_t_crit})
    return rows
