"""Worst-case Monte Carlo under volatility uncertainty and Volterra solvers.

Simulates paths whose quadratic-variation density is constrained to a band,
estimates sublinear expectations as a supremum over volatility controls, and
solves stochastic Volterra integral equations on those scenarios by direct
recursion or Picard iteration.
"""

from .model import (
    Ensemble,
    GParams,
    LatticeSizeError,
    Scenario,
    TimeGrid,
    VolatilityControl,
    build_control_lattice,
    g_function,
    generate_ensemble,
    simulate_scenario,
)
from .expectation import (
    AdaptedProcess,
    Estimate,
    PayoffError,
    adaptedness_probe,
    estimate,
    ito_isometry_report,
    lower_expectation,
    maximal_inequality_report,
    mg_norm,
    stochastic_integral,
    sup_msq_distance,
)
from .coefficients import (
    AuditReport,
    CoefficientFamily,
    HypothesisMetadata,
    SamplerConfig,
    audit_integral_lipschitz,
    audit_lipschitz,
    audit_parameter_lipschitz,
    audit_time_regularity,
    builtin_family,
    divergence_probe,
)
from .solver import (
    PicardReport,
    SolutionEnsemble,
    VolterraProblem,
    direct_solve,
    direct_solve_ensemble,
    msq_continuity_profile,
    picard_solve,
    rhs_eval,
    solve_expect,
)
from .analysis import (
    BihariResult,
    RateFit,
    bihari_majorant,
    fit_factorial_rate,
    gronwall_bound,
    holder_exponent,
    jensen_gap,
    parameter_continuity_study,
    well_posedness_suite,
)

__version__ = "0.1.0"
