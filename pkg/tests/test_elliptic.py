import math

import numpy as np
import pytest
from scipy import integrate

from glvortex.elliptic import (
    CELL_LOG_AVG,
    EllipticSolver,
    HelmholtzProblem,
    build_green_table,
    green_G,
    solve_helmholtz,
    solve_s_omega,
)
from glvortex.grid import (
    BoundaryTrace,
    NodeField,
    boundary_node_indices,
    make_grid,
)


def bt(grid, values):
    return BoundaryTrace(grid, np.asarray(values, dtype=float))


def const_bt(grid, c):
    n = 2 * grid.Nx + 2 * grid.Ny - 4
    return bt(grid, np.full(n, float(c)))


def manufactured_error(n, bc_kind):
    """L-inf error of the (-lap+1) solve against u* = cos(pi x) cos(pi y)."""
    g = make_grid(1, 1, n, n)
    X, Y = g.node_coords()
    ustar = np.cos(np.pi * X) * np.cos(np.pi * Y)
    rhs = (2 * np.pi**2 + 1) * ustar
    bi, bj = boundary_node_indices(g)
    if bc_kind == "dirichlet":
        data = ustar[bi, bj]
    else:
        data = np.zeros(len(bi))  # normal derivative of u* vanishes on all sides
    u = solve_helmholtz(HelmholtzProblem(NodeField(g, rhs), bc_kind, bt(g, data)))
    return float(np.max(np.abs(u.values - ustar)))


class TestHelmholtz:
    def test_zero_problem(self):
        g = make_grid(1, 1, 33, 33)
        u = solve_helmholtz(HelmholtzProblem(
            NodeField(g, np.zeros(g.shape_nodes)), "dirichlet", const_bt(g, 0)))
        assert np.max(np.abs(u.values)) < 1e-12

    @pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
    def test_manufactured_order(self, bc):
        e1 = manufactured_error(33, bc)
        e2 = manufactured_error(65, bc)
        assert 3.6 <= e1 / e2 <= 4.4

    def test_maximum_principle(self):
        g = make_grid(1, 1, 33, 33)
        u = solve_helmholtz(HelmholtzProblem(
            NodeField(g, np.zeros(g.shape_nodes)), "dirichlet", const_bt(g, 1)))
        inner = u.values[1:-1, 1:-1]
        assert np.max(u.values) <= 1 + 1e-12
        assert np.all(inner > 0) and np.all(inner < 1)

    def test_negative_data_negative_solution(self):
        g = make_grid(1, 1, 33, 33)
        rng = np.random.default_rng(4)
        rhs = -np.abs(rng.standard_normal(g.shape_nodes))
        data = -np.abs(rng.standard_normal(2 * g.Nx + 2 * g.Ny - 4))
        u = solve_helmholtz(HelmholtzProblem(
            NodeField(g, rhs), "dirichlet", bt(g, data)))
        assert np.max(u.values) <= 1e-13

    def test_neumann_divergence_identity(self):
        # integrating (-lap+1)u = 0 gives sum(u) h^2 = boundary integral of data
        g = make_grid(1, 1, 49, 49)
        rng = np.random.default_rng(5)
        data = rng.standard_normal(2 * g.Nx + 2 * g.Ny - 4)
        u = solve_helmholtz(HelmholtzProblem(
            NodeField(g, np.zeros(g.shape_nodes)), "neumann", bt(g, data)))
        lhs = np.sum(u.values * g.node_weights()) * g.h**2
        rhs = np.sum(data) * g.h
        assert lhs == pytest.approx(rhs, rel=1e-6)


class TestCellLogConstant:
    def test_independent_quadrature(self):
        # octant reduction of the integral of log|z| over the unit cell
        def f(th):
            R = 1.0 / (2 * math.cos(th))
            return 8 * (R**2 / 2) * (math.log(R) - 0.5)

        val, err = integrate.quad(f, 0, math.pi / 4, epsabs=1e-13)
        assert err < 1e-11
        assert CELL_LOG_AVG == pytest.approx(val, abs=1e-12)


class TestSOmega:
    def test_symmetry(self):
        g = make_grid(1, 1, 129, 129)
        table = build_green_table(g, [(0.3, 0.5), (0.7, 0.5)])
        assert table.symmetry_defect() <= 5 * g.h**2

    def test_center_self_convergence(self):
        center = (0.5, 0.5)
        vals = {}
        for n in (65, 129, 257, 513):
            gg = make_grid(1, 1, n, n)
            s = solve_s_omega(center, gg, EllipticSolver(gg))
            vals[n] = s.values[(n - 1) // 2, (n - 1) // 2]
        ref = vals[513]
        e65, e129, e257 = (abs(vals[n] - ref) for n in (65, 129, 257))
        order1 = math.log2(e65 / e129)
        order2 = math.log2(e129 / e257)
        assert order1 >= 1.8
        assert order2 >= 1.8

    def test_mirror_symmetry(self):
        g = make_grid(1, 1, 65, 65)
        s = solve_s_omega((0.5, 0.5), g).values
        assert np.max(np.abs(s - s[::-1, :])) < 1e-10
        assert np.max(np.abs(s - s[:, ::-1])) < 1e-10

    def test_rejects_boundary_source(self):
        g = make_grid(1, 1, 65, 65)
        with pytest.raises(ValueError):
            solve_s_omega((0.01, 0.5), g)


@pytest.fixture(scope="module")
def table():
    g = make_grid(1, 1, 129, 129)
    return build_green_table(g, [(0.3, 0.5), (0.7, 0.5)])


class TestGreenG:

    def test_log_divergence(self, table):
        h = table.grid.h
        y = (0.3, 0.5)
        near = green_G((0.3 + 2 * h, 0.5), y, table)
        far = green_G((0.3 + 8 * h, 0.5), y, table)
        assert near > far

    def test_dirichlet_boundary(self, table):
        h = table.grid.h
        for x in [(0.0, 0.4), (1.0, 0.6), (0.5, 0.0), (0.5, 1.0)]:
            assert abs(green_G(x, (0.3, 0.5), table)) <= 10 * h**2

    def test_reciprocity(self, table):
        h = table.grid.h
        a = green_G((0.7, 0.5), (0.3, 0.5), table)
        b = green_G((0.3, 0.5), (0.7, 0.5), table)
        assert abs(a - b) <= 5 * h**2

    def test_rejects_coincident(self, table):
        with pytest.raises(ValueError):
            green_G((0.3, 0.5), (0.3, 0.5), table)
