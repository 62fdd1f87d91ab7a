"""Worst-case (sublinear) expectation estimator and discrete stochastic calculus.

The estimator takes a per-scenario payoff, averages over replicas within each
control, and returns the maximum over controls.  Replica means are computed
with exactly rounded summation (math.fsum) so the estimator's algebraic
axioms -- monotonicity, constant preservation, subadditivity, positive
homogeneity -- hold at the arithmetic level, not just statistically, and the
result is independent of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Ensemble, Scenario

__all__ = [
    "ControlStat",
    "Estimate",
    "AdaptedProcess",
    "PayoffError",
    "estimate",
    "lower_expectation",
    "stochastic_integral",
    "integrate_paths",
    "sup_msq_distance",
    "mg_norm",
    "ito_isometry_report",
    "maximal_inequality_report",
    "adaptedness_probe",
]


class PayoffError(ValueError):
    """A payoff produced a non-finite value; carries the offending scenario key."""

    def __init__(self, control_index, replica, value):
        self.scenario_key = (control_index, replica)
        super().__init__(
            f"non-finite payoff {value!r} at scenario "
            f"(control={control_index}, replica={replica})"
        )


@dataclass(frozen=True)
class ControlStat:
    control_index: int
    mean: float
    std_error: float
    replicas: int


@dataclass(frozen=True)
class Estimate:
    """Sup-over-controls Monte Carlo estimate with per-control statistics."""

    value: float
    per_control: tuple
    argmax_control: int

    @property
    def std_error(self) -> float:
        """Standard error of the argmax control's mean."""
        return self.per_control[self.argmax_control].std_error


@dataclass(frozen=True)
class AdaptedProcess:
    """Per-scenario paths X(t_i), shape (C, M, N+1), aligned to an ensemble."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", arr)


def _fsum_mean(values: np.ndarray) -> float:
    return math.fsum(values.tolist()) / len(values)


def _payoff_table(payoff, ensemble: Ensemble) -> np.ndarray:
    """Evaluate a payoff into a (C, M) table; accepts arrays or callables."""
    C, M = ensemble.n_controls, ensemble.replicas_per_control
    if callable(payoff):
        table = np.empty((C, M))
        for (c, m), scen in ensemble.scenarios():
            table[c, m] = payoff(scen)
    else:
        table = np.asarray(payoff, dtype=float)
        if table.shape != (C, M):
            raise ValueError(
                f"payoff table has shape {table.shape}, expected {(C, M)}"
            )
    bad = np.argwhere(~np.isfinite(table))
    if bad.size:
        c, m = bad[0]
        raise PayoffError(int(c), int(m), table[c, m])
    return table


def _reduce(table: np.ndarray, pick) -> Estimate:
    M = table.shape[1]
    stats = []
    for c in range(table.shape[0]):
        row = table[c]
        mean = _fsum_mean(row)
        if M > 1:
            se = float(np.std(row, ddof=1)) / math.sqrt(M)
        else:
            se = 0.0
        stats.append(ControlStat(c, mean, se, M))
    means = [s.mean for s in stats]
    idx = pick(range(len(means)), key=lambda c: means[c])
    return Estimate(value=means[idx], per_control=tuple(stats), argmax_control=idx)


def estimate(payoff, ensemble: Ensemble) -> Estimate:
    """Upper expectation: max over controls of the per-control replica mean."""
    return _reduce(_payoff_table(payoff, ensemble), max)


def lower_expectation(payoff, ensemble: Ensemble) -> Estimate:
    """Lower expectation: min over controls (conjugate of `estimate`)."""
    return _reduce(_payoff_table(payoff, ensemble), min)


_MODES = ("dB", "dQV", "dt")


def _increments(scenario_or_ensemble, mode: str, grid):
    if mode == "dB":
        return scenario_or_ensemble.dB
    if mode == "dQV":
        return scenario_or_ensemble.dQV
    if mode == "dt":
        return grid.dt
    raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")


def stochastic_integral(integrand: np.ndarray, scenario: Scenario, grid, mode: str) -> np.ndarray:
    """Left-endpoint partial sums I(t_i) = sum_{j<i} eta(t_j) * increment_j.

    The integrand is evaluated at the left endpoint of each interval (Ito
    convention); that is what makes the discrete isometry exact in
    expectation.  Returns a path of length N+1 with I(0) = 0.
    """
    eta = np.asarray(integrand, dtype=float)
    N = grid.steps
    if eta.shape[-1] not in (N, N + 1):
        raise ValueError(
            f"integrand has {eta.shape[-1]} values, expected {N} or {N + 1}"
        )
    left = eta[..., :N]
    delta = _increments(scenario, mode, grid)
    out = np.zeros(eta.shape[:-1] + (N + 1,))
    np.cumsum(left * delta, axis=-1, out=out[..., 1:])
    return out


def integrate_paths(values: np.ndarray, ensemble: Ensemble, mode: str) -> np.ndarray:
    """Vectorized left-endpoint partial sums over the whole ensemble.

    ``values`` has shape (C, M, N+1) (or broadcastable); the result has the
    same shape with I(0) = 0 in the last axis.
    """
    N = ensemble.grid.steps
    vals = np.broadcast_to(
        np.asarray(values, dtype=float),
        (ensemble.n_controls, ensemble.replicas_per_control, N + 1),
    )
    left = vals[..., :N]
    if mode == "dB":
        delta = ensemble.dB
    elif mode == "dQV":
        delta = ensemble.dQV[:, None, :]
    elif mode == "dt":
        delta = ensemble.grid.dt
    else:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    out = np.zeros(vals.shape)
    np.cumsum(left * delta, axis=-1, out=out[..., 1:])
    return out


def _pathwise_sup_estimate(squared: np.ndarray, ensemble: Ensemble) -> float:
    """max over grid times of the worst-case mean of a (C, M, N+1) array."""
    per_control = np.mean(squared, axis=1)  # (C, N+1)
    return float(np.max(per_control))


def sup_msq_distance(X: AdaptedProcess, Y: AdaptedProcess, ensemble: Ensemble) -> float:
    """sup over grid times of the worst-case mean squared gap between X and Y."""
    diff2 = (X.values - Y.values) ** 2
    return _pathwise_sup_estimate(diff2, ensemble)


def mg_norm(X: AdaptedProcess, p: float, ensemble: Ensemble) -> float:
    """(worst-case mean of the left-endpoint quadrature of |X|^p dt)^(1/p)."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    integral = integrate_paths(np.abs(X.values) ** p, ensemble, "dt")[..., -1]
    return estimate(integral, ensemble).value ** (1.0 / p)


@dataclass(frozen=True)
class IsometryReport:
    lhs: float            # worst-case mean of |int eta dB|^2
    mid: float            # worst-case mean of int eta^2 dQV
    rhs: float            # sigma_high^2 * worst-case mean of int eta^2 dt
    lhs_se: float
    mid_se: float
    rhs_se: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.mid_se)


def ito_isometry_report(integrand: AdaptedProcess, ensemble: Ensemble) -> IsometryReport:
    """Discrete isometry check: E|int eta dB|^2 = E int eta^2 dQV <= band bound."""
    eta = integrand.values
    I = integrate_paths(eta, ensemble, "dB")[..., -1]
    qv = integrate_paths(eta**2, ensemble, "dQV")[..., -1]
    tm = integrate_paths(eta**2, ensemble, "dt")[..., -1]
    e_lhs = estimate(I**2, ensemble)
    e_mid = estimate(qv, ensemble)
    e_rhs = estimate(tm, ensemble)
    s2 = ensemble.params.var_high
    return IsometryReport(
        lhs=e_lhs.value,
        mid=e_mid.value,
        rhs=s2 * e_rhs.value,
        lhs_se=e_lhs.std_error,
        mid_se=e_mid.std_error,
        rhs_se=s2 * e_rhs.std_error,
    )


@dataclass(frozen=True)
class MaximalReport:
    sup_moment: float     # worst-case mean of sup_t |int_0^t eta dB|^2
    doob_bound: float     # 4 sigma_high^2 * worst-case mean of int eta^2 dt
    sup_moment_se: float
    doob_bound_se: float


def maximal_inequality_report(integrand: AdaptedProcess, ensemble: Ensemble) -> MaximalReport:
    """Doob L2 surrogate: E[sup |int eta dB|^2] <= 4 sigma_high^2 E[int eta^2 dt]."""
    eta = integrand.values
    I = integrate_paths(eta, ensemble, "dB")
    sup2 = np.max(I**2, axis=-1)
    tm = integrate_paths(eta**2, ensemble, "dt")[..., -1]
    e_sup = estimate(sup2, ensemble)
    e_tm = estimate(tm, ensemble)
    s2 = ensemble.params.var_high
    return MaximalReport(
        sup_moment=e_sup.value,
        doob_bound=4.0 * s2 * e_tm.value,
        sup_moment_se=e_sup.std_error,
        doob_bound_se=4.0 * s2 * e_tm.std_error,
    )


def adaptedness_probe(X: AdaptedProcess, ensemble: Ensemble, i: int) -> bool:
    """True iff X(t_i) agrees on every scenario pair sharing the same replica
    and the same control prefix lambda_{0..i-1}.

    Such pairs share all the data a time-t_i adapted functional may read
    (common random numbers give them identical dW), so any disagreement means
    the process peeks ahead.
    """
    if not 0 <= i <= ensemble.grid.steps:
        raise ValueError(f"index {i} outside the grid 0..{ensemble.grid.steps}")
    lam = ensemble.densities
    groups = {}
    for c in range(ensemble.n_controls):
        key = lam[c, :i].tobytes()
        groups.setdefault(key, []).append(c)
    for members in groups.values():
        if len(members) < 2:
            continue
        ref = X.values[members[0], :, i]
        for c in members[1:]:
            if not np.array_equal(ref, X.values[c, :, i]):
                return False
    return True
