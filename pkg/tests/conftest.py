import numpy as np
import pytest

from gvolterra import GParams, TimeGrid, build_control_lattice, generate_ensemble


@pytest.fixture(scope="session")
def params():
    return GParams(1.0, 2.0)


@pytest.fixture(scope="session")
def grid():
    return TimeGrid(1.0, 64)


@pytest.fixture(scope="session")
def small_ensemble(params, grid):
    controls = build_control_lattice(params, grid, levels=2, pieces=1)
    return generate_ensemble(params, grid, controls, replicas=64, master_seed=20240901)


@pytest.fixture(scope="session")
def det_ensemble():
    # degenerate band: a single deterministic-friendly scenario source
    p = GParams(1.0, 1.0)
    g = TimeGrid(1.0, 64)
    controls = build_control_lattice(p, g, levels=1, pieces=1)
    return generate_ensemble(p, g, controls, replicas=1, master_seed=5)
