"""Inequality utilities and experiment-level rate studies.

Turns the qualitative guarantees of the solver (contraction, path
regularity, parameter continuity) into fitted, falsifiable numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .coefficients import CoefficientFamily, HypothesisMetadata
from .expectation import AdaptedProcess, adaptedness_probe, estimate, mg_norm, sup_msq_distance
from .model import Ensemble
from .solver import SolutionEnsemble, VolterraProblem, component_paths, direct_solve_ensemble

__all__ = [
    "RateFit",
    "BihariResult",
    "JensenReport",
    "gronwall_bound",
    "bihari_majorant",
    "jensen_gap",
    "fit_factorial_rate",
    "holder_exponent",
    "parameter_continuity_study",
    "well_posedness_suite",
]


@dataclass(frozen=True)
class RateFit:
    model: str
    constants: dict
    residuals: np.ndarray
    passed: bool
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "residuals", np.asarray(self.residuals, dtype=float))


def gronwall_bound(a: float, b: float, t: float) -> float:
    """Bound a*exp(b*t) for any u with u(t) <= a + b * int_0^t u(s) ds."""
    if a < 0.0 or b < 0.0 or t < 0.0:
        raise ValueError("gronwall_bound requires nonnegative a, b, t")
    return a * math.exp(b * t)


@dataclass(frozen=True)
class BihariResult:
    value: float
    blew_up: bool
    t_reached: float


def bihari_majorant(
    gamma,
    v0: float,
    t: float,
    rtol: float = 1e-9,
    blowup_cap: float = 1e12,
) -> BihariResult:
    """Majorant v(t) solving v' = gamma(v), v(0) = v0, by adaptive integration.

    Any u with u(t) <= v0 + int_0^t gamma(u) ds stays below this curve.  If
    the solution exceeds `blowup_cap` before time t the result flags blow-up
    instead of raising.
    """
    if v0 < 0.0:
        raise ValueError(f"v0 must be >= 0, got {v0}")
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0.0:
        return BihariResult(value=v0, blew_up=False, t_reached=0.0)
    if v0 == 0.0 and float(np.asarray(gamma(0.0))) == 0.0:
        return BihariResult(value=0.0, blew_up=False, t_reached=t)

    def rhs(_, v):
        return [float(np.asarray(gamma(max(v[0], 0.0))))]

    def blowup(_, v):
        return v[0] - blowup_cap

    blowup.terminal = True
    blowup.direction = 1.0

    sol = solve_ivp(
        rhs,
        (0.0, t),
        [v0],
        rtol=rtol,
        atol=max(v0 * 1e-12, 1e-300),
        events=blowup,
        dense_output=False,
        method="RK45",
    )
    if sol.t_events[0].size:
        return BihariResult(value=math.inf, blew_up=True, t_reached=float(sol.t_events[0][0]))
    if not sol.success:
        return BihariResult(value=math.inf, blew_up=True, t_reached=float(sol.t[-1]))
    return BihariResult(value=float(sol.y[0, -1]), blew_up=False, t_reached=t)


@dataclass(frozen=True)
class JensenReport:
    lhs: float        # worst-case mean of rho(payoff)
    rhs: float        # rho(worst-case mean of payoff)
    lhs_se: float

    @property
    def gap(self) -> float:
        return self.rhs - self.lhs


def jensen_gap(rho, payoff, ensemble: Ensemble) -> JensenReport:
    """Concave increasing rho: worst-case mean of rho(xi) <= rho(worst-case mean)."""
    from .expectation import _payoff_table  # shared evaluation/validation

    table = _payoff_table(payoff, ensemble)
    e_inner = estimate(np.asarray(rho(table), dtype=float), ensemble)
    e_raw = estimate(table, ensemble)
    return JensenReport(
        lhs=e_inner.value,
        rhs=float(np.asarray(rho(e_raw.value))),
        lhs_se=e_inner.std_error,
    )


def fit_factorial_rate(
    increments,
    theta: float,
    horizon: float,
    envelope_factor: float = 2.0,
    cauchy_tol: float = 1e-6,
) -> RateFit:
    """Fit sweep gaps d_n against the model M * C^(n+1) * (T^(n+1)/(n+1)!)^theta.

    Least squares in log space for (log M, log C); passes when every measured
    d_n sits under the fitted envelope scaled by `envelope_factor` and the
    partial sums of sqrt(d_n) are numerically Cauchy.
    """
    d = np.asarray(increments, dtype=float)
    if d.size == 0:
        raise ValueError("no increments to fit")
    sqrt_sums = np.cumsum(np.sqrt(d))
    tail = float(sqrt_sums[-1] - sqrt_sums[d.size // 2]) if d.size > 1 else 0.0
    cauchy = tail <= cauchy_tol * (1.0 + sqrt_sums[-1])

    positive = d > 0.0
    if not np.any(positive):
        return RateFit(
            model="factorial_contraction",
            constants={"log_M": -math.inf, "log_C": 0.0, "theta": theta},
            residuals=np.zeros(0),
            passed=True,
            details={"cauchy": True, "all_zero": True},
        )
    n = np.arange(d.size)[positive]
    y = np.log(d[positive])
    # log model: log M + (n+1) log C + theta * [(n+1) log T - log((n+1)!)]
    g = theta * ((n + 1) * math.log(horizon) - np.array([math.lgamma(k + 2) for k in n]))
    A = np.column_stack([np.ones(n.size), n + 1])
    coeffs, *_ = np.linalg.lstsq(A, y - g, rcond=None)
    log_m, log_c = float(coeffs[0]), float(coeffs[1])
    fitted = A @ coeffs + g
    residuals = y - fitted
    envelope_ok = bool(np.all(y <= fitted + math.log(envelope_factor)))
    return RateFit(
        model="factorial_contraction",
        constants={"log_M": log_m, "log_C": log_c, "theta": theta},
        residuals=residuals,
        passed=envelope_ok and cauchy,
        details={"cauchy": cauchy, "envelope_ok": envelope_ok, "sqrt_tail": tail},
    )


def holder_exponent(
    process: AdaptedProcess,
    p: float,
    ensemble: Ensemble,
    declared_excess: float = None,
    margin: float = 0.15,
) -> RateFit:
    """Regress log worst-case moment of |X(t)-X(s)|^p against log lag.

    Lags are dyadic multiples of dt, k = 0..floor(log2 N) with the two
    largest dropped (boundary effects).  The fitted slope estimates the lag
    exponent; when a target excess is declared the fit passes iff
    slope >= 1 + declared_excess - margin.
    """
    X = process.values
    N = ensemble.grid.steps
    dt = ensemble.grid.dt
    k_top = int(math.floor(math.log2(N)))
    ks = list(range(0, max(k_top - 1, 1)))
    lags, moments = [], []
    for k in ks:
        lag = 2**k
        if lag >= N:
            break
        diff = np.abs(X[..., lag:] - X[..., :-lag]) ** p
        per_control = np.mean(diff, axis=(1, 2))     # mean over replicas and offsets
        moments.append(float(np.max(per_control)))
        lags.append(lag * dt)
    lags = np.asarray(lags)
    moments = np.asarray(moments)
    ok = moments > 0.0
    if np.count_nonzero(ok) < 2:
        return RateFit(
            model="holder_lag_moment",
            constants={"exponent": math.inf, "log_c": -math.inf, "p": p},
            residuals=np.zeros(0),
            passed=True,
            details={"lags": lags, "moments": moments, "degenerate": True},
        )
    A = np.column_stack([np.ones(np.count_nonzero(ok)), np.log(lags[ok])])
    coeffs, *_ = np.linalg.lstsq(A, np.log(moments[ok]), rcond=None)
    slope = float(coeffs[1])
    residuals = np.log(moments[ok]) - A @ coeffs
    passed = True if declared_excess is None else slope >= 1.0 + declared_excess - margin
    return RateFit(
        model="holder_lag_moment",
        constants={"exponent": slope, "log_c": float(coeffs[0]), "p": p},
        residuals=residuals,
        passed=bool(passed),
        details={"lags": lags, "moments": moments},
    )


def parameter_continuity_envelope(
    params, horizon: float, L: float, L_bar: float, delta_alpha: float
) -> float:
    """Gronwall-derived upper bound on the worst-case mean squared parameter gap.

    From splitting the four terms of the difference equation, squaring, and
    bounding the quadratic-variation density by sigma_high^2:
        u(t) <= a + b * int_0^t u ds,
        a = 4 L_bar^2 |da|^2 (1 + 2T^2 + 2 sigma_high^4 T^2 + 2 sigma_high^2 T),
        b = 8 L^2 (T + sigma_high^4 T + sigma_high^2).
    """
    s2 = params.var_high
    a = 4.0 * L_bar**2 * delta_alpha**2 * (
        1.0 + 2.0 * horizon**2 + 2.0 * s2**2 * horizon**2 + 2.0 * s2 * horizon
    )
    b = 8.0 * L**2 * (horizon + s2**2 * horizon + s2)
    return gronwall_bound(a, b, horizon)


def parameter_continuity_study(
    family: CoefficientFamily,
    metadata: HypothesisMetadata,
    alphas,
    ensemble: Ensemble,
    slope_tol: float = 0.1,
    envelope_slack: float = 1e-9,
) -> RateFit:
    """Solve for each parameter value on the same draws and regress the
    squared distance between solutions against the parameter gap."""
    if not family.parameterized:
        raise ValueError("parameter continuity study needs a parameterized family")
    alphas = [float(a) for a in alphas]
    solutions = {}
    for a in alphas:
        problem = VolterraProblem(
            family=family.bind(a),
            grid=ensemble.grid,
            params=ensemble.params,
            metadata=metadata,
        )
        solutions[a] = direct_solve_ensemble(problem, ensemble)

    gaps, dists, pairs = [], [], []
    envelope_ok = True
    for i, a in enumerate(alphas):
        for b_ in alphas[i + 1 :]:
            if a == b_:
                continue
            dist = sup_msq_distance(
                solutions[a].process, solutions[b_].process, ensemble
            )
            gaps.append(abs(a - b_))
            dists.append(dist)
            pairs.append((a, b_))
            bound = parameter_continuity_envelope(
                ensemble.params,
                ensemble.grid.horizon,
                metadata.L_const or 0.0,
                metadata.L_bar,
                abs(a - b_),
            )
            if dist > bound * (1.0 + envelope_slack):
                envelope_ok = False
    gaps = np.asarray(gaps)
    dists = np.asarray(dists)
    ok = dists > 0.0
    if np.count_nonzero(ok) < 2:
        slope = 2.0
        residuals = np.zeros(0)
    else:
        A = np.column_stack([np.ones(np.count_nonzero(ok)), np.log(gaps[ok])])
        coeffs, *_ = np.linalg.lstsq(A, np.log(dists[ok]), rcond=None)
        slope = float(coeffs[1])
        residuals = np.log(dists[ok]) - A @ coeffs
    passed = abs(slope - 2.0) <= slope_tol and envelope_ok
    return RateFit(
        model="parameter_continuity",
        constants={"slope": slope},
        residuals=residuals,
        passed=bool(passed),
        details={"pairs": pairs, "gaps": gaps, "distances": dists, "envelope_ok": envelope_ok},
    )


@dataclass(frozen=True)
class WellPosednessReport:
    adapted: bool
    norm_p2: float
    norm_p2eps: float
    sup_second_moment: float
    ceiling: float
    passed: bool


def well_posedness_suite(
    problem: VolterraProblem,
    ensemble: Ensemble,
    ceiling: float = 100.0,
    probe_indices=None,
) -> WellPosednessReport:
    """Integrability diagnostics for the solution's integral components:
    adaptedness, finite norms at p = 2 and 2 + eps, bounded second moment."""
    solution = direct_solve_ensemble(problem, ensemble)
    stoch, drift = component_paths(problem, ensemble, solution)
    N = ensemble.grid.steps
    if probe_indices is None:
        probe_indices = sorted({0, N // 3, 2 * N // 3, N})
    adapted = all(
        adaptedness_probe(proc, ensemble, i)
        for proc in (solution.process, stoch, drift)
        for i in probe_indices
    )
    eps = problem.metadata.eps if problem.metadata is not None else 0.0
    n2 = mg_norm(solution.process, 2.0, ensemble)
    n2e = mg_norm(solution.process, 2.0 + eps, ensemble)
    X = solution.values
    sup_m2 = float(np.max(np.mean(X**2, axis=1)))
    passed = (
        adapted
        and math.isfinite(n2)
        and math.isfinite(n2e)
        and sup_m2 < ceiling
    )
    return WellPosednessReport(
        adapted=adapted,
        norm_p2=n2,
        norm_p2eps=n2e,
        sup_second_moment=sup_m2,
        ceiling=ceiling,
        passed=bool(passed),
    )
