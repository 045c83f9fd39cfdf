"""Rare-event probability estimation by optimally tilted importance sampling."""
from .core import (
    ConjugateView,
    DomainError,
    Negated,
    NumericalError,
    PreconditionError,
    TailEvent,
    ThetaDomain,
    TiltingFamily,
    conjugate_view,
    likelihood_ratio,
    variance_functional_G,
)
from .families import (
    ChiSquare,
    Exponential,
    FamilySpec,
    Gamma,
    NoncentralChiSquare,
    Normal,
    make_family,
)
from .solver import (
    SolverConfig,
    SolverResult,
    SolverStatus,
    large_deviation_tilt,
    moderate_deviation_tilt,
    pareto_tail_tilt,
    solve_fixed_point,
    solve_optimal_tilt,
)
from .estimator import (
    EfficiencyReport,
    EstimateReport,
    ReplicatedEstimate,
    analytic_re,
    estimate_is,
    estimate_naive,
    estimate_two_sided,
    relative_efficiency,
)
from .var import (
    InsufficientHitsError,
    JumpDiffusionSpec,
    QuadraticPortfolio,
    diagonalize,
    estimate_var_tail,
    find_var_quantile,
    psi_loss,
    solve_theta_p,
)
from .bootstrap import (
    BootstrapStatistic,
    coverage_experiment,
    longley_problem,
    ols_fit,
    replicate_resampling,
    resample_tilted,
    solve_bootstrap_tilt,
)

__version__ = "0.1.0"
