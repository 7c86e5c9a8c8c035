"""Point-vortex reduction: interaction energy, its gradient, the unified
limiting drift law, conserved quantities, and the limiting induced field.

The unified law
    da_i/dtau = -(c_W / pi) grad_i W  -  2 d_i [alpha perp(grad f1)
                + beta (grad h0 - perp(grad f0))](a_i)
covers every drive regime through the switch triple (c_W, alpha, beta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .applied import PrecomputedFields, RegimeInfo
from .elliptic import CELL_LOG_AVG, EllipticSolver, GreenTable, build_green_table
from .grid import DomainGrid, NodeField

__all__ = ["ReducedState", "LawCoefficients", "GreenCache", "W", "grad_W",
           "law_rhs", "integrate", "conserved_H", "london_field",
           "limit_induced_field"]


@dataclass
class ReducedState:
    positions: np.ndarray   # (n, 2)
    degrees: np.ndarray     # (n,), entries +-1
    tau: float = 0.0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.degrees = np.asarray(self.degrees, dtype=int)
        if np.any(np.abs(self.degrees) != 1):
            raise ValueError("degrees must be +-1")
        if len(self.degrees) != len(self.positions):
            raise ValueError("positions/degrees length mismatch")


@dataclass
class LawCoefficients:
    c_W: float
    alpha: float
    beta: float

    @classmethod
    def from_regime(cls, info: RegimeInfo) -> "LawCoefficients":
        if info.regime == 1:
            return cls(1.0, 1.0, 1.0)
        if info.regime == 2:
            return cls(0.0, 1.0, 0.0)
        if info.regime == 3:
            return cls(0.0, 0.0, 1.0)
        return cls(0.0, info.alpha, info.beta)


class GreenCache:
    """Green-table manager re-anchoring interaction solves as vortices move.

    Tables are rebuilt (one cached back-solve per source) whenever any vortex
    drifts more than `refresh_h` spacings from its anchor; between refreshes
    the smooth parts are spline-interpolated with a first-order source-shift
    correction on values.
    """

    def __init__(self, grid: DomainGrid, solver: EllipticSolver | None = None,
                 refresh_h: float = 2.0):
        self.grid = grid
        self.solver = solver if solver is not None else EllipticSolver(grid)
        self.refresh_dist = refresh_h * grid.h
        self.table: GreenTable | None = None
        self.rebuilds = 0

    def table_for(self, positions: np.ndarray) -> GreenTable:
        positions = np.atleast_2d(positions)
        if (self.table is None
                or len(self.table.sources) != len(positions)
                or np.max(np.hypot(*(self.table.sources - positions).T))
                > self.refresh_dist):
            self.table = build_green_table(self.grid, positions, self.solver)
            self.rebuilds += 1
        return self.table


def _check_interior(positions, grid: DomainGrid):
    for k, (x, y) in enumerate(np.atleast_2d(positions)):
        if grid.boundary_distance(x, y) < 4 * grid.h:
            raise ValueError(f"point {k} closer than 4h to the boundary")


def _s_matrix(positions, table: GreenTable):
    """S(a_i, a_j) with first-order correction for anchor drift in the
    source slot (using reciprocity to express the source derivative)."""
    positions = np.atleast_2d(positions)
    n = len(positions)
    S = np.empty((n, n))
    for j in range(n):
        dj = positions[j] - table.sources[j]
        for i in range(n):
            val = table.s_at(j, *positions[i])
            if dj @ dj > 0:
                val += float(dj @ table.grad_s_at(i, *table.sources[j]))
            S[i, j] = val
    return 0.5 * (S + S.T)


def W(positions, degrees, table: GreenTable) -> float:
    """Inter-vortex interaction energy
    -pi sum_{i != j} d_i d_j log|a_i - a_j| + pi sum_{i,j} d_i d_j S(a_i, a_j).
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    degrees = np.asarray(degrees, dtype=float)
    _check_interior(positions, table.grid)
    n = len(positions)
    S = _s_matrix(positions, table)
    total = math.pi * float(degrees @ S @ degrees)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            r = math.hypot(*(positions[i] - positions[j]))
            if r == 0:
                raise ValueError("coincident vortex positions")
            total -= math.pi * degrees[i] * degrees[j] * math.log(r)
    return total


def grad_W(positions, degrees, table: GreenTable) -> np.ndarray:
    """Gradient of W with respect to each position (n, 2).

    The log part is differentiated analytically; the smooth part uses the
    spline gradients, with reciprocity supplying the source-slot derivative.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    degrees = np.asarray(degrees, dtype=float)
    _check_interior(positions, table.grid)
    n = len(positions)
    out = np.zeros((n, 2))
    for k in range(n):
        acc = np.zeros(2)
        for j in range(n):
            if j != k:
                diff = positions[k] - positions[j]
                r2 = float(diff @ diff)
                if r2 == 0:
                    raise ValueError("coincident vortex positions")
                acc += -2.0 * degrees[j] * diff / r2
            acc += 2.0 * degrees[j] * table.grad_s_at(j, *positions[k])
        out[k] = math.pi * degrees[k] * acc
    return out


def _drive_velocity(point, degree, coeffs: LawCoefficients,
                    pre: PrecomputedFields) -> np.ndarray:
    gx1, gy1 = pre.grad_at("f1", *point)
    gx0, gy0 = pre.grad_at("f0", *point)
    ghx, ghy = pre.grad_at("h0", *point)
    perp1 = np.array([-gy1, gx1])
    perp0 = np.array([-gy0, gx0])
    gh = np.array([ghx, ghy])
    return -2.0 * degree * (coeffs.alpha * perp1 + coeffs.beta * (gh - perp0))


def law_rhs(state: ReducedState, coeffs: LawCoefficients,
            pre: PrecomputedFields, green: GreenCache | GreenTable | None) \
        -> np.ndarray:
    """Per-vortex velocity of the unified limiting law, shape (n, 2)."""
    n = len(state.degrees)
    out = np.zeros((n, 2))
    if coeffs.c_W != 0.0:
        table = (green.table_for(state.positions)
                 if isinstance(green, GreenCache) else green)
        out -= (coeffs.c_W / math.pi) * grad_W(state.positions, state.degrees,
                                               table)
    for i in range(n):
        out[i] += _drive_velocity(state.positions[i], state.degrees[i],
                                  coeffs, pre)
    return out


def _admissible(positions, grid: DomainGrid, sigma_star: float) -> bool:
    pts = np.atleast_2d(positions)
    margin = max(sigma_star, 4 * grid.h)
    for k, (x, y) in enumerate(pts):
        if grid.boundary_distance(x, y) < margin:
            return False
        for l in range(k):
            if math.hypot(x - pts[l][0], y - pts[l][1]) < sigma_star:
                return False
    return True


def integrate(state0: ReducedState, coeffs: LawCoefficients,
              pre: PrecomputedFields, green: GreenCache | None,
              T: float, dtau: float, sigma_star: float,
              sample_stride: int = 1):
    """Classical RK4 with fixed step; halts at the first separation violation.

    Returns (samples, t_star) where samples is a list of (tau, positions
    array) at the configured stride (always including tau=0 and the final
    accepted time) and t_star is the last accepted time.
    """
    if not _admissible(state0.positions, pre.grid, sigma_star):
        raise ValueError("initial positions violate the separation margin")
    n_steps = int(round(T / dtau))
    pos = state0.positions.copy()
    samples = [(0.0, pos.copy())]
    tau = 0.0

    def rhs(p):
        return law_rhs(ReducedState(p, state0.degrees, tau), coeffs, pre, green)

    for k in range(1, n_steps + 1):
        k1 = rhs(pos)
        k2 = rhs(pos + 0.5 * dtau * k1)
        k3 = rhs(pos + 0.5 * dtau * k2)
        k4 = rhs(pos + dtau * k3)
        cand = pos + (dtau / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not _admissible(cand, pre.grid, sigma_star):
            break
        pos = cand
        tau = k * dtau
        if k % sample_stride == 0 or k == n_steps:
            samples.append((tau, pos.copy()))
    if samples[-1][0] != tau:
        samples.append((tau, pos.copy()))
    return samples, tau


def conserved_H(samples, pre: PrecomputedFields):
    """Per-vortex series of f1 along a trajectory and its maximum drift.

    Returns (series, drift) with series shape (n_samples, n) and drift the
    max |f1(a_i(tau)) - f1(a_i(0))| over vortices and times.
    """
    vals = np.array([[pre.f1_at(x, y) for (x, y) in np.atleast_2d(p)]
                     for (_, p) in samples])
    drift = float(np.max(np.abs(vals - vals[0]), initial=0.0))
    return vals, drift


class LondonField(NodeField):
    """Screened-response node field that remembers its source decomposition
    (positions, degrees, Green table) for exact-gradient consumers."""

    source_decomposition = None


def london_field(positions, degrees, table: GreenTable,
                 grid: DomainGrid) -> LondonField:
    """Superposed screened response h = sum_j d_j G(., a_j) as a node field.

    Near each source the log part is capped by its cell average, matching the
    regularization used in the smooth-part solves.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    degrees = np.asarray(degrees, dtype=float)
    X, Y = grid.node_coords()
    out = np.zeros(grid.shape_nodes)
    for j, (x0, y0) in enumerate(positions):
        k = int(np.argmin(np.hypot(table.sources[:, 0] - x0,
                                   table.sources[:, 1] - y0)))
        r = np.hypot(X - x0, Y - y0)
        with np.errstate(divide="ignore"):
            logr = np.log(np.maximum(r, 1e-300))
        i0 = int(round(x0 / grid.h))
        j0 = int(round(y0 / grid.h))
        logr[i0, j0] = math.log(grid.h) + CELL_LOG_AVG
        out += degrees[j] * (table.S[k].values - logr)
    field = LondonField(grid, out)
    field.source_decomposition = (positions, degrees, table)
    return field


def limit_induced_field(positions, degrees, grid: DomainGrid,
                        T: float, dt: float,
                        solver: EllipticSolver | None = None,
                        table: GreenTable | None = None,
                        initial: NodeField | None = None,
                        stride: int = 1):
    """Heat flow of the limiting induced field toward the static screened
    response of pinned vortices (implicit Euler, homogeneous boundary).

    The source is the discrete elliptic image of the static response, so the
    static response is an exact fixed point. Returns list of (t, NodeField).
    """
    if solver is None:
        solver = EllipticSolver(grid)
    if table is None:
        table = build_green_table(grid, positions, solver)
    hL = london_field(positions, degrees, table, grid)
    advance, apply_op, iidx = solver.dirichlet_heat_stepper(dt)
    src = apply_op(hL.values.ravel()[iidx])

    u = (np.zeros(grid.Nx * grid.Ny) if initial is None
         else np.asarray(initial.values, dtype=float).ravel().copy())
    out = []
    n_steps = int(round(T / dt))
    full = u.copy()
    out.append((0.0, NodeField(grid, full.reshape(grid.shape_nodes).copy())))
    ui = u[iidx]
    for k in range(1, n_steps + 1):
        ui = advance(ui, src)
        if k % stride == 0 or k == n_steps:
            full[:] = 0.0
            full[iidx] = ui
            out.append((k * dt,
                        NodeField(grid, full.reshape(grid.shape_nodes).copy())))
    return out
