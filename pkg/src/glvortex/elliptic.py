"""Screened-Laplacian solves and the regularized London Green's function.

The discrete operator is the variational form of (-lap + c) on the staggered
grid: A = G^T W_e G + c W_n with trapezoid-consistent quadrature weights, so
it is symmetric positive definite for c > 0 under both boundary conditions
and realizes second-order ghost elimination for Neumann data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RectBivariateSpline

from .grid import (
    BoundaryTrace,
    DomainGrid,
    EdgeField,
    NodeField,
    boundary_node_indices,
    discrete_grad,
)

__all__ = [
    "HelmholtzProblem",
    "GreenTable",
    "EllipticSolver",
    "SolverError",
    "solve_helmholtz",
    "solve_s_omega",
    "green_G",
    "build_green_table",
    "CELL_LOG_AVG",
]

# Mean of log|z| over the unit cell [-1/2,1/2]^2 (= pi/4 - 3/2 - ln2/2),
# used to regularize the log right-hand side at the source node.
CELL_LOG_AVG = math.pi / 4 - 1.5 - 0.5 * math.log(2.0)

DIRECT_LIMIT = 400_000  # unknown count above which CG replaces direct solve


class SolverError(RuntimeError):
    """Raised when an iterative solve fails to reach the requested residual."""


@dataclass
class HelmholtzProblem:
    rhs: NodeField
    bc_kind: str  # "dirichlet" | "neumann"
    bc_data: BoundaryTrace
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.bc_kind not in ("dirichlet", "neumann"):
            raise ValueError(f"bc_kind must be dirichlet|neumann, got {self.bc_kind}")
        if not (0.0 < self.tolerance <= 1e-6):
            raise ValueError("tolerance must lie in (0, 1e-6]")


def _gradient_matrix(grid: DomainGrid):
    """Sparse edge-by-node forward-difference matrix (entries +-1/h)."""
    nx, ny = grid.Nx, grid.Ny
    n = nx * ny

    def nid(i, j):
        return i * ny + j

    rows, cols, vals = [], [], []
    r = 0
    for i in range(nx - 1):
        for j in range(ny):
            rows += [r, r]
            cols += [nid(i + 1, j), nid(i, j)]
            vals += [1.0, -1.0]
            r += 1
    for i in range(nx):
        for j in range(ny - 1):
            rows += [r, r]
            cols += [nid(i, j + 1), nid(i, j)]
            vals += [1.0, -1.0]
            r += 1
    G = sp.csr_matrix((np.array(vals) / grid.h, (rows, cols)), shape=(r, n))
    return G


class EllipticSolver:
    """Factorization-caching solver for (-lap + c) on one grid.

    One instance per grid; Dirichlet/Neumann/Poisson operators are assembled
    and factorized once, then reused for every right-hand side (the Green
    table in particular issues many solves against one factorization).
    Instances are safe for concurrent solves once warm.
    """

    def __init__(self, grid: DomainGrid):
        self.grid = grid
        self._G = _gradient_matrix(grid)
        we = np.concatenate([grid.xedge_weights().ravel(),
                             grid.yedge_weights().ravel()])
        self._We = sp.diags(we * grid.h**2)
        self._wn = grid.node_weights().ravel() * grid.h**2
        self._stiff = (self._G.T @ self._We @ self._G).tocsr()
        bi, bj = boundary_node_indices(grid)
        self._bidx = bi * grid.Ny + bj
        mask = np.ones(grid.Nx * grid.Ny, dtype=bool)
        mask[self._bidx] = False
        self._iidx = np.flatnonzero(mask)
        self._fact = {}

    def _operator(self, bc_kind: str, mass: float):
        A = self._stiff + mass * sp.diags(self._wn)
        if bc_kind == "neumann":
            return A.tocsr(), None
        A = A.tocsc()
        return A[self._iidx][:, self._iidx].tocsr(), A[self._iidx][:, self._bidx].tocsr()

    def _factorize(self, key):
        if key not in self._fact:
            bc_kind, mass = key
            A, coupling = self._operator(bc_kind, mass)
            if bc_kind == "neumann" and mass == 0.0:
                # pure Neumann Poisson: pin the first node to fix the constant
                A = A.tolil()
                A[0, :] = 0.0
                A[0, 0] = 1.0
                A = A.tocsr()
            if A.shape[0] <= DIRECT_LIMIT:
                solve = spla.factorized(A.tocsc())
            else:
                M = sp.diags(1.0 / A.diagonal())

                def solve(b, A=A, M=M):
                    x, info = spla.cg(A, b, rtol=1e-12, atol=0.0,
                                      maxiter=20_000, M=M)
                    if info != 0:
                        r = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
                        raise SolverError(
                            f"CG failed (info={info}), rel residual {r:.3e}")
                    return x

            self._fact[key] = (A, coupling, solve)
        return self._fact[key]

    def solve(self, problem: HelmholtzProblem, mass: float = 1.0) -> NodeField:
        g = self.grid
        f = np.asarray(problem.rhs.values, dtype=float).ravel()
        bdata = np.asarray(problem.bc_data.values, dtype=float)
        A, coupling, solve = self._factorize((problem.bc_kind, mass))

        if problem.bc_kind == "neumann":
            b = self._wn * f
            b[self._bidx] += bdata * g.h
            u = solve(b)
        else:
            b = (self._wn * f)[self._iidx] - coupling @ bdata
            ui = solve(b)
            u = np.empty(g.Nx * g.Ny)
            u[self._iidx] = ui
            u[self._bidx] = bdata
            # residual check on the interior system
            ri = np.linalg.norm(A @ ui - b)
            nb = np.linalg.norm(b)
            if nb > 0 and ri / nb > problem.tolerance:
                raise SolverError(f"Dirichlet solve residual {ri / nb:.3e} "
                                  f"exceeds tolerance {problem.tolerance:.3e}")
            return NodeField(g, u.reshape(g.Nx, g.Ny))

        rn = np.linalg.norm(A @ u - b)
        nb = np.linalg.norm(b)
        if nb > 0 and rn / nb > problem.tolerance:
            raise SolverError(f"Neumann solve residual {rn / nb:.3e} "
                              f"exceeds tolerance {problem.tolerance:.3e}")
        return NodeField(g, u.reshape(g.Nx, g.Ny))

    def solve_poisson_dirichlet(self, rhs: NodeField) -> NodeField:
        """-lap u = rhs with u = 0 on the boundary."""
        zero = BoundaryTrace(self.grid, np.zeros(len(self._bidx)))
        prob = HelmholtzProblem(rhs, "dirichlet", zero, 1e-8)
        return self.solve(prob, mass=0.0)

    def solve_poisson_neumann(self, rhs_load: np.ndarray) -> NodeField:
        """Pinned pure-Neumann Poisson solve against a raw load vector.

        rhs_load is the assembled variational load (node shape); the solution
        is fixed by pinning the first node to zero. The load must sum to zero
        (it does for divergence loads and closed boundary data), in which case
        the pinned solution satisfies the full singular system exactly.
        """
        A, _, solve = self._factorize(("neumann", 0.0))
        b = np.asarray(rhs_load, dtype=float).ravel().copy()
        b[0] = 0.0
        u = solve(b)
        return NodeField(self.grid, u.reshape(self.grid.Nx, self.grid.Ny))

    def coulomb_gauge_phase(self, bx: np.ndarray, by: np.ndarray) -> np.ndarray:
        """Phase xi making div(B + grad xi) = 0 exactly at every node in the
        plain adjoint divergence, which folds in a vanishing normal trace
        (missing boundary edges count as zero flux)."""
        key = ("graph_laplacian", 0.0)
        if key not in self._fact:
            A = (self._G.T @ self._G).tolil()
            A[0, :] = 0.0
            A[0, 0] = 1.0
            self._fact[key] = (A.tocsr(), None, spla.factorized(A.tocsc()))
        _, _, solve = self._fact[key]
        bvec = np.concatenate([np.ravel(bx), np.ravel(by)])
        load = -(self._G.T @ bvec)
        load[0] = 0.0
        xi = solve(load)
        return xi.reshape(self.grid.Nx, self.grid.Ny)

    def dirichlet_heat_stepper(self, dt: float, mass: float = 1.0):
        """Implicit-Euler stepper for d/dt u = lap u - mass*u + src with u = 0
        on the boundary. Returns (advance, apply_op, interior_index) where
        advance(u_int, src_load) maps one step on interior vectors and
        apply_op(u_int) evaluates the weighted elliptic operator."""
        A, _, _ = self._factorize(("dirichlet", mass))
        wn_i = self._wn[self._iidx]
        M = (sp.diags(wn_i) + dt * A).tocsc()
        solve = spla.factorized(M)

        def advance(u_int, src_load):
            return solve(wn_i * u_int + dt * src_load)

        def apply_op(u_int):
            return A @ u_int

        return advance, apply_op, self._iidx


def solve_helmholtz(problem: HelmholtzProblem,
                    solver: EllipticSolver | None = None) -> NodeField:
    if solver is None:
        solver = EllipticSolver(problem.rhs.grid)
    return solver.solve(problem)


def _log_rhs(grid: DomainGrid, y):
    """log|x - y| at nodes, cell-averaged at the node containing y."""
    X, Y = grid.node_coords()
    r = np.hypot(X - y[0], Y - y[1])
    i0 = int(round(y[0] / grid.h))
    j0 = int(round(y[1] / grid.h))
    with np.errstate(divide="ignore"):
        out = np.log(np.maximum(r, 1e-300))
    out[i0, j0] = math.log(grid.h) + CELL_LOG_AVG
    return out


def solve_s_omega(y, grid: DomainGrid,
                  solver: EllipticSolver | None = None) -> NodeField:
    """Smooth part of the London Green's function anchored at y.

    Solves (-lap + 1) S = log|x-y| with S = log|x-y| on the boundary; the
    Green's function itself is G(x, y) = S(x, y) - log|x-y|.
    """
    if grid.boundary_distance(*y) < 4 * grid.h:
        raise ValueError(f"source {tuple(y)} closer than 4h to the boundary")
    if solver is None:
        solver = EllipticSolver(grid)
    rhs = _log_rhs(grid, y)
    bi, bj = boundary_node_indices(grid)
    bdata = rhs[bi, bj]
    prob = HelmholtzProblem(NodeField(grid, rhs), "dirichlet",
                            BoundaryTrace(grid, bdata), 1e-8)
    return solver.solve(prob)


@dataclass
class GreenTable:
    """London Green's-function data for a list of source points.

    Stores, per source, the smooth part S(., y_k) and its edge-collocated
    gradient; point evaluation goes through bicubic splines of S rebuilt
    lazily (never a separate derivative solve).
    """

    grid: DomainGrid
    sources: np.ndarray           # (n, 2)
    S: list                       # NodeField per source
    gradS: list                   # EdgeField per source
    _splines: list = field(default=None, repr=False)

    def __post_init__(self):
        self.sources = np.atleast_2d(np.asarray(self.sources, dtype=float))

    def _spline(self, k):
        if self._splines is None:
            self._splines = [None] * len(self.S)
        if self._splines[k] is None:
            g = self.grid
            x = np.arange(g.Nx) * g.h
            y = np.arange(g.Ny) * g.h
            self._splines[k] = RectBivariateSpline(x, y, self.S[k].values)
        return self._splines[k]

    def s_at(self, k, x, y):
        return float(self._spline(k)(x, y, grid=False))

    def grad_s_at(self, k, x, y):
        s = self._spline(k)
        return np.array([float(s(x, y, dx=1, grid=False)),
                         float(s(x, y, dy=1, grid=False))])

    def symmetry_defect(self):
        """max |S(y_j at y_k) - S(y_k at y_j)| over source pairs."""
        n = len(self.sources)
        worst = 0.0
        for j in range(n):
            for k in range(j + 1, n):
                a = self.s_at(k, *self.sources[j])
                b = self.s_at(j, *self.sources[k])
                worst = max(worst, abs(a - b))
        return worst


def build_green_table(grid: DomainGrid, sources,
                      solver: EllipticSolver | None = None) -> GreenTable:
    if solver is None:
        solver = EllipticSolver(grid)
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    S = [solve_s_omega(yk, grid, solver) for yk in sources]
    gradS = [discrete_grad(s) for s in S]
    return GreenTable(grid, sources, S, gradS)


def green_G(x, y, table: GreenTable) -> float:
    """G(x, y) = S(x, y) - log|x-y| for a tabulated source y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.hypot(*(x - y))
    if d == 0.0:
        raise ValueError("green_G is singular at x = y")
    k = int(np.argmin(np.hypot(table.sources[:, 0] - y[0],
                               table.sources[:, 1] - y[1])))
    if np.hypot(*(table.sources[k] - y)) > 1e-9:
        raise ValueError(f"{tuple(y)} is not a tabulated source")
    return table.s_at(k, x[0], x[1]) - math.log(d)
