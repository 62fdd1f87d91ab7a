"""Discrete Volterra solver: direct forward recursion and Picard iteration.

The equation is discretized with explicit left-endpoint sums for all three
integrals (ds, quadratic variation, dB).  Because the kernels depend on the
outer time, the sum over history is rebuilt for every output index (O(N^2)
per scenario per sweep).  The direct recursion computes the exact fixed point
of the discrete map; the Picard iteration updates the whole path from the
previous iterate and therefore reproduces the direct solution bitwise after
at most N sweeps (values at t_i freeze after i sweeps).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import CoefficientFamily, HypothesisMetadata
from .expectation import AdaptedProcess, Estimate, estimate
from .model import Ensemble, GParams, Scenario, TimeGrid

__all__ = [
    "VolterraProblem",
    "SolutionEnsemble",
    "PicardReport",
    "rhs_eval",
    "direct_solve",
    "direct_solve_ensemble",
    "picard_solve",
    "solve_expect",
    "component_paths",
    "msq_continuity_profile",
]


class CoefficientEvaluationError(ValueError):
    """A kernel returned a non-finite value; carries (i, j, x) context."""

    def __init__(self, which, i, j, x):
        self.context = (which, i, j, x)
        super().__init__(
            f"kernel {which!r} produced a non-finite value at output index {i}, "
            f"history index {j}, state {x!r}"
        )


@dataclass(frozen=True)
class VolterraProblem:
    family: CoefficientFamily
    grid: TimeGrid
    params: GParams
    metadata: HypothesisMetadata = None

    def __post_init__(self):
        if self.family.parameterized:
            raise ValueError(
                "parameterized family must be bound to a value before solving"
            )

    def phi_path(self) -> np.ndarray:
        return self.family.phi_values(self.grid.times)


@dataclass(frozen=True)
class SolutionEnsemble:
    """Per-scenario solution paths, shape (C, M, N+1)."""

    process: AdaptedProcess
    problem: VolterraProblem
    solver: str

    @property
    def values(self) -> np.ndarray:
        return self.process.values


@dataclass(frozen=True)
class PicardReport:
    increments: np.ndarray   # d_n = sup_t worst-case mean squared sweep gap
    iterations: int
    converged: bool
    tol: float

    def __post_init__(self):
        object.__setattr__(self, "increments", np.asarray(self.increments, dtype=float))


def _check_finite(which, arr, i):
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(np.atleast_1d(arr)))
        j = int(bad[0][-1]) if bad.size else -1
        raise CoefficientEvaluationError(which, i, j, None)


def _history_sum(problem, X, i, times, dt, dQV, dB):
    """phi-free right-hand side at output index i from history X[..., :i].

    ``dQV`` and ``dB`` carry the increments for indices j < i with shapes
    broadcastable against X[..., :i].  Shared by the direct recursion and the
    Picard sweep so both produce identical arithmetic.
    """
    fam = problem.family
    t_i = times[i]
    tj = times[:i]
    Xj = X[..., :i]
    total = 0.0
    if fam.b is not None:
        vals = np.asarray(fam.b(t_i, tj, Xj), dtype=float)
        _check_finite("b", vals, i)
        total = total + np.sum(np.broadcast_to(vals * dt, Xj.shape), axis=-1)
    if fam.h is not None:
        vals = np.asarray(fam.h(t_i, tj, Xj), dtype=float)
        _check_finite("h", vals, i)
        total = total + np.sum(np.broadcast_to(vals, Xj.shape) * dQV, axis=-1)
    if fam.sigma is not None:
        vals = np.asarray(fam.sigma(t_i, tj, Xj), dtype=float)
        _check_finite("sigma", vals, i)
        total = total + np.sum(np.broadcast_to(vals, Xj.shape) * dB, axis=-1)
    return total


def _require_fast_path(problem):
    if not problem.family.time_invariant:
        raise ValueError(
            "fast_path requires a family whose kernels ignore the outer time "
            f"(family {problem.family.name!r} does not declare time_invariant)"
        )


def _fast_contrib(fam, tj, Xj, dt, dQV, dB):
    """Per-step contributions b*dt + h*dQV + sigma*dB for all history indices.

    Valid only when the kernels ignore the outer time, so the contribution of
    step j is the same for every output index.  ``tj`` is passed as both time
    arguments; shapes broadcast against Xj.
    """
    total = np.zeros(np.broadcast_shapes(Xj.shape, dB.shape))
    if fam.b is not None:
        vals = np.asarray(fam.b(tj, tj, Xj), dtype=float)
        _check_finite("b", vals, -1)
        total = total + vals * dt
    if fam.h is not None:
        vals = np.asarray(fam.h(tj, tj, Xj), dtype=float)
        _check_finite("h", vals, -1)
        total = total + vals * dQV
    if fam.sigma is not None:
        vals = np.asarray(fam.sigma(tj, tj, Xj), dtype=float)
        _check_finite("sigma", vals, -1)
        total = total + vals * dB
    return total


def rhs_eval(problem: VolterraProblem, X: np.ndarray, scenario: Scenario, i: int) -> float:
    """phi(t_i) + left-endpoint history sum for one scenario path X."""
    times = problem.grid.times
    phi = problem.phi_path()
    if i == 0:
        return float(phi[0])
    X = np.asarray(X, dtype=float)
    val = _history_sum(
        problem, X, i, times, problem.grid.dt, scenario.dQV[:i], scenario.dB[:i]
    )
    return float(phi[i] + val)


def direct_solve(problem: VolterraProblem, scenario: Scenario) -> np.ndarray:
    """Exact fixed point of the discrete map for one scenario."""
    N = problem.grid.steps
    times = problem.grid.times
    phi = problem.phi_path()
    dt = problem.grid.dt
    X = np.empty(N + 1)
    X[0] = phi[0]
    for i in range(1, N + 1):
        X[i] = phi[i] + _history_sum(
            problem, X, i, times, dt, scenario.dQV[:i], scenario.dB[:i]
        )
    return X


def direct_solve_ensemble(
    problem: VolterraProblem, ensemble: Ensemble, fast_path: bool = False
) -> SolutionEnsemble:
    """Direct forward recursion vectorized over all scenarios.

    With ``fast_path=True`` (allowed only for families declaring
    ``time_invariant``) the history sum is maintained as a running total,
    dropping the cost per sweep from O(N^2) to O(N).
    """
    N = problem.grid.steps
    times = problem.grid.times
    phi = problem.phi_path()
    dt = problem.grid.dt
    C, M = ensemble.n_controls, ensemble.replicas_per_control
    X = np.empty((C, M, N + 1))
    X[..., 0] = phi[0]
    dQV = ensemble.dQV[:, None, :]
    dB = ensemble.dB
    if fast_path:
        _require_fast_path(problem)
        fam = problem.family
        S = np.zeros((C, M))
        for i in range(1, N + 1):
            j = i - 1
            S = S + _fast_contrib(
                fam, times[j], X[..., j], dt, dQV[..., j], dB[..., j]
            )
            X[..., i] = phi[i] + S
    else:
        for i in range(1, N + 1):
            X[..., i] = phi[i] + _history_sum(
                problem, X, i, times, dt, dQV[..., :i], dB[..., :i]
            )
    return SolutionEnsemble(process=AdaptedProcess(X), problem=problem, solver="direct")


def _sweep(problem, Xold, times, phi, dt, dQV, dB, fast_path=False):
    Xnew = np.empty_like(Xold)
    Xnew[..., 0] = phi[0]
    if fast_path:
        # cumsum accumulates left to right, matching the running total of the
        # fast direct recursion term for term
        contrib = _fast_contrib(
            problem.family, times[:-1], Xold[..., :-1], dt, dQV, dB
        )
        Xnew[..., 1:] = phi[1:] + np.cumsum(contrib, axis=-1)
        return Xnew
    for i in range(1, Xold.shape[-1]):
        Xnew[..., i] = phi[i] + _history_sum(
            problem, Xold, i, times, dt, dQV[..., :i], dB[..., :i]
        )
    return Xnew


def picard_solve(
    problem: VolterraProblem,
    ensemble: Ensemble,
    tol: float = 1e-10,
    max_iter: int = 50,
    initial_offset: float = 0.0,
    fast_path: bool = False,
):
    """Full-path Picard iteration started from phi (+ optional offset).

    Each sweep rebuilds every grid value from the previous iterate; the sweep
    gap d_n is the sup over grid times of the worst-case mean squared change.
    Non-convergence within max_iter is reported, not raised.
    """
    if tol < 0.0:
        raise ValueError(f"tol must be >= 0, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    if fast_path:
        _require_fast_path(problem)
    N = problem.grid.steps
    times = problem.grid.times
    phi = problem.phi_path()
    dt = problem.grid.dt
    C, M = ensemble.n_controls, ensemble.replicas_per_control
    dQV = ensemble.dQV[:, None, :]
    dB = ensemble.dB
    X = np.broadcast_to(phi + initial_offset, (C, M, N + 1)).copy()
    increments = []
    converged = False
    iterations = 0
    for _ in range(max_iter):
        Xnew = _sweep(problem, X, times, phi, dt, dQV, dB, fast_path=fast_path)
        iterations += 1
        gap = np.max(np.mean((Xnew - X) ** 2, axis=1))
        increments.append(float(gap))
        X = Xnew
        if gap <= tol:
            converged = True
            break
    report = PicardReport(
        increments=np.asarray(increments),
        iterations=iterations,
        converged=converged,
        tol=tol,
    )
    solution = SolutionEnsemble(process=AdaptedProcess(X), problem=problem, solver="picard")
    return solution, report


def solve_expect(
    problem: VolterraProblem,
    ensemble: Ensemble,
    payoff,
    solver: str = "direct",
    tol: float = 1e-10,
    max_iter: int = 200,
    fast_path: bool = False,
) -> Estimate:
    """Solve per scenario, then estimate the worst-case expected payoff.

    ``payoff`` maps (times, paths of shape (C, M, N+1)) to a (C, M) table.
    """
    if solver == "direct":
        sol = direct_solve_ensemble(problem, ensemble, fast_path=fast_path)
    elif solver == "picard":
        sol, _ = picard_solve(
            problem, ensemble, tol=tol, max_iter=max_iter, fast_path=fast_path
        )
    else:
        raise ValueError(f"solver must be 'direct' or 'picard', got {solver!r}")
    table = np.asarray(payoff(problem.grid.times, sol.values), dtype=float)
    return estimate(table, ensemble)


def component_paths(problem: VolterraProblem, ensemble: Ensemble, solution: SolutionEnsemble):
    """Split a solution into its stochastic and drift integral parts.

    Returns (stochastic, drift) AdaptedProcess values, where stochastic(t) is
    the dB integral of sigma along the solution and drift(t) collects the ds
    and quadratic-variation integrals; both use the outer-time kernels.
    """
    N = problem.grid.steps
    times = problem.grid.times
    dt = problem.grid.dt
    fam = problem.family
    X = solution.values
    C, M = ensemble.n_controls, ensemble.replicas_per_control
    dQV = ensemble.dQV[:, None, :]
    dB = ensemble.dB
    stoch = np.zeros((C, M, N + 1))
    drift = np.zeros((C, M, N + 1))
    for i in range(1, N + 1):
        tj = times[:i]
        Xj = X[..., :i]
        if fam.sigma is not None:
            vals = np.asarray(fam.sigma(times[i], tj, Xj), dtype=float)
            stoch[..., i] = np.sum(np.broadcast_to(vals, Xj.shape) * dB[..., :i], axis=-1)
        acc = 0.0
        if fam.b is not None:
            vals = np.asarray(fam.b(times[i], tj, Xj), dtype=float)
            acc = acc + np.sum(np.broadcast_to(vals * dt, Xj.shape), axis=-1)
        if fam.h is not None:
            vals = np.asarray(fam.h(times[i], tj, Xj), dtype=float)
            acc = acc + np.sum(np.broadcast_to(vals, Xj.shape) * dQV[..., :i], axis=-1)
        drift[..., i] = acc
    return AdaptedProcess(stoch), AdaptedProcess(drift)


def msq_continuity_profile(solution: SolutionEnsemble, ensemble: Ensemble) -> np.ndarray:
    """Adjacent-pair table (t_i, t_{i+1}, worst-case mean |X(t_{i+1})-X(t_i)|^2)."""
    X = solution.values
    diff2 = (X[..., 1:] - X[..., :-1]) ** 2
    per_control = np.mean(diff2, axis=1)          # (C, N)
    values = np.max(per_control, axis=0)          # (N,)
    times = solution.problem.grid.times
    return np.column_stack([times[:-1], times[1:], values])
