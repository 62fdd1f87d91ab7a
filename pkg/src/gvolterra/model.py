"""Volatility-uncertainty model: band parameters, time grids, controls, scenarios.

A scenario is one sampled path of Brownian increments together with a
piecewise-constant quadratic-variation density lambda(.) constrained to the
band [sigma_low^2, sigma_high^2].  The ensemble pairs every control with the
same underlying Gaussian draws (common random numbers), so worst-case
expectations over controls are exactly comparable path by path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GParams",
    "TimeGrid",
    "VolatilityControl",
    "Scenario",
    "Ensemble",
    "LatticeSizeError",
    "g_function",
    "build_control_lattice",
    "simulate_scenario",
    "generate_ensemble",
]

DEFAULT_LATTICE_CAP = 4096


class LatticeSizeError(ValueError):
    """Requested control lattice exceeds the configured size cap."""


@dataclass(frozen=True)
class GParams:
    """Volatility band (sigma_low, sigma_high) defining the sublinear generator."""

    sigma_low: float
    sigma_high: float

    def __post_init__(self):
        if not (0.0 < self.sigma_low <= self.sigma_high < math.inf):
            raise ValueError(
                "volatility band requires 0 < sigma_low <= sigma_high < inf, "
                f"got ({self.sigma_low}, {self.sigma_high})"
            )

    @property
    def var_low(self) -> float:
        return self.sigma_low**2

    @property
    def var_high(self) -> float:
        return self.sigma_high**2


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < t_1 < ... < t_N = horizon."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True)
class VolatilityControl:
    """Per-interval quadratic-variation density lambda_j, j = 0..N-1."""

    densities: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.densities, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "densities", arr)

    def validate(self, params: GParams) -> None:
        lo, hi = params.var_low, params.var_high
        if np.any(self.densities < lo) or np.any(self.densities > hi):
            raise ValueError(
                f"control densities must lie in [{lo}, {hi}]; "
                f"range observed [{self.densities.min()}, {self.densities.max()}]"
            )


@dataclass(frozen=True)
class Scenario:
    """One sampled path under a given control.

    dW are the raw Gaussian increments (variance dt), dB = sqrt(lambda)*dW and
    dQV = lambda*dt exactly, so the quadratic-variation band holds by
    construction rather than statistically.
    """

    control: VolatilityControl
    dW: np.ndarray
    dB: np.ndarray
    dQV: np.ndarray
    seed: tuple

    def __post_init__(self):
        for name in ("dW", "dB", "dQV"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def path(self) -> np.ndarray:
        """Cumulative path B(t_i), starting at 0."""
        return np.concatenate(([0.0], np.cumsum(self.dB)))


@dataclass(frozen=True)
class Ensemble:
    """Control lattice x Monte Carlo replicas with common random numbers.

    Arrays are laid out for vectorized work: ``dW`` has shape (M, N) and is
    shared by every control; ``dB`` has shape (C, M, N); ``dQV`` has shape
    (C, N) (deterministic given the control).
    """

    params: GParams
    grid: TimeGrid
    controls: tuple
    replicas_per_control: int
    master_seed: int
    dW: np.ndarray = field(repr=False)
    dB: np.ndarray = field(repr=False)
    dQV: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("dW", "dB", "dQV"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @property
    def n_scenarios(self) -> int:
        return self.n_controls * self.replicas_per_control

    @property
    def densities(self) -> np.ndarray:
        """Stacked control densities, shape (C, N)."""
        return np.stack([c.densities for c in self.controls])

    def scenario(self, control_index: int, replica: int) -> Scenario:
        return Scenario(
            control=self.controls[control_index],
            dW=self.dW[replica],
            dB=self.dB[control_index, replica],
            dQV=self.dQV[control_index],
            seed=(self.master_seed, replica),
        )

    def scenarios(self):
        for c in range(self.n_controls):
            for m in range(self.replicas_per_control):
                yield (c, m), self.scenario(c, m)

    @property
    def paths(self) -> np.ndarray:
        """Cumulative paths B(t_i), shape (C, M, N+1)."""
        out = np.zeros(self.dB.shape[:-1] + (self.grid.steps + 1,))
        np.cumsum(self.dB, axis=-1, out=out[..., 1:])
        return out


def g_function(x: float, params: GParams) -> float:
    """Sublinear generator 0.5*(sigma_high^2 * x+ - sigma_low^2 * x-)."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"g_function requires finite input, got {x}")
    if x >= 0.0:
        return 0.5 * params.var_high * x
    return 0.5 * params.var_low * x


def _block_sizes(steps: int, pieces: int) -> list:
    # equal blocks; the last block absorbs any remainder
    if pieces > steps:
        raise ValueError(f"pieces ({pieces}) must not exceed steps ({steps})")
    base = steps // pieces
    sizes = [base] * (pieces - 1)
    sizes.append(steps - base * (pieces - 1))
    return sizes


def build_control_lattice(
    params: GParams,
    grid: TimeGrid,
    levels: int,
    pieces: int,
    cap: int = DEFAULT_LATTICE_CAP,
) -> tuple:
    """All piecewise-constant controls on `pieces` blocks with `levels` density
    levels equally spaced in the band.  The two constant extremes are always
    included, duplicates are removed, and the order is deterministic.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if pieces < 1:
        raise ValueError(f"pieces must be >= 1, got {pieces}")
    size = levels**pieces
    if size > cap:
        raise LatticeSizeError(
            f"lattice of {size} controls (levels={levels}, pieces={pieces}) "
            f"exceeds the cap of {cap}"
        )
    sizes = _block_sizes(grid.steps, pieces)
    values = np.linspace(params.var_low, params.var_high, levels)

    def expand(block_vals) -> np.ndarray:
        return np.concatenate(
            [np.full(n, v) for n, v in zip(sizes, block_vals)]
        )

    candidates = [tuple([params.var_low] * pieces), tuple([params.var_high] * pieces)]
    candidates.extend(itertools.product(values, repeat=pieces))
    seen = set()
    controls = []
    for block_vals in candidates:
        if block_vals in seen:
            continue
        seen.add(block_vals)
        controls.append(VolatilityControl(expand(block_vals)))
    return tuple(controls)


def _draw_increments(grid: TimeGrid, master_seed: int, replica: int) -> np.ndarray:
    # Counter-based stream keyed by (master_seed, replica): the j-th draw is a
    # pure function of (master_seed, replica, j), independent of any control.
    key = np.array([master_seed, replica], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal(grid.steps) * math.sqrt(grid.dt)


def simulate_scenario(
    control: VolatilityControl,
    grid: TimeGrid,
    master_seed: int,
    replica: int,
) -> Scenario:
    """Sample one path under the given control; bit-identical on re-invocation."""
    lam = control.densities
    if lam.shape != (grid.steps,):
        raise ValueError(
            f"control has {lam.shape[0]} densities but the grid has {grid.steps} steps"
        )
    dW = _draw_increments(grid, master_seed, replica)
    dB = np.sqrt(lam) * dW
    dQV = lam * grid.dt
    return Scenario(control=control, dW=dW, dB=dB, dQV=dQV, seed=(master_seed, replica))


def generate_ensemble(
    params: GParams,
    grid: TimeGrid,
    controls,
    replicas: int,
    master_seed: int,
) -> Ensemble:
    """Build controls x replicas scenarios sharing Gaussian draws per replica."""
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")
    controls = tuple(controls)
    if not controls:
        raise ValueError("at least one control is required")
    for c in controls:
        c.validate(params)
        if c.densities.shape != (grid.steps,):
            raise ValueError("control does not conform to the grid")
    dW = np.stack([_draw_increments(grid, master_seed, m) for m in range(replicas)])
    lam = np.stack([c.densities for c in controls])
    dB = np.sqrt(lam)[:, None, :] * dW[None, :, :]
    dQV = lam * grid.dt
    return Ensemble(
        params=params,
        grid=grid,
        controls=controls,
        replicas_per_control=replicas,
        master_seed=master_seed,
        dW=dW,
        dB=dB,
        dQV=dQV,
    )
