import math

import numpy as np
import pytest

from glvortex.applied import DriveSpec, classify_regime, precompute
from glvortex.elliptic import EllipticSolver
from glvortex.grid import make_grid
from glvortex.state import State
from glvortex.tdgl import InitSpec, StepperConfig, init_well_prepared


EPS64 = 1.0 / 16.0  # matched to the 65x65 unit-square grid (h = eps/4)


@pytest.fixture(scope="session")
def grid65():
    return make_grid(1, 1, 65, 65)


@pytest.fixture(scope="session")
def solver65(grid65):
    return EllipticSolver(grid65)


@pytest.fixture(scope="session")
def pre65(grid65, solver65):
    drive = DriveSpec(j_ex=1.0, h_ex=1.0, J_nu=[0.0, 0.3], I_nu=[0.1], H=[1.0])
    return precompute(drive, grid65, solver=solver65)


@pytest.fixture(scope="session")
def regime65():
    return classify_regime(1.0, 1.0, EPS64)


@pytest.fixture(scope="session")
def cfg65():
    return StepperConfig(epsilon=EPS64)


@pytest.fixture(scope="session")
def single_vortex65(grid65, solver65, pre65, cfg65):
    spec = InitSpec(vortices=[(0.5, 0.5, 1)], relax_steps=120)
    return init_well_prepared(spec, pre65, grid65, cfg65, solver65)


def ansatz_state(grid, vortices, epsilon) -> State:
    """Bare tanh-core ansatz with zero potential (no relaxation, no B)."""
    X, Y = grid.node_coords()
    theta = np.zeros(grid.shape_nodes)
    rho = np.ones(grid.shape_nodes)
    for (x0, y0, d) in vortices:
        theta += d * np.arctan2(Y - y0, X - x0)
        rho *= np.tanh(np.hypot(X - x0, Y - y0) / (math.sqrt(2.0) * epsilon))
    return State(grid, rho * np.exp(1j * theta),
                 np.zeros(grid.shape_xedges), np.zeros(grid.shape_yedges))


def smooth_gauge(grid, seed):
    rng = np.random.default_rng(seed)
    X, Y = grid.node_coords()
    xi = np.zeros(grid.shape_nodes)
    for _ in range(3):
        a, b = rng.integers(1, 4, size=2)
        c = rng.standard_normal()
        xi += c * np.sin(np.pi * a * X / grid.Lx) * np.cos(np.pi * b * Y / grid.Ly)
    xi += rng.standard_normal() * 0.5
    return xi
