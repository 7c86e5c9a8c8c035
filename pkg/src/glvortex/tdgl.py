"""Time integration of the modified order-parameter / vector-potential system
in the current-potential gauge, with link-variable covariant derivatives.

The explicit Euler scheme is the reference path (compiled kernel when built);
a semi-implicit variant treats the stiff linear parts spectrally for long
accelerated runs. Initial data are a core-profile ansatz with the screened
induced-field response, relaxed current-free and gauge-fixed so the initial
potential is divergence-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import energetics, vortex
from .applied import PrecomputedFields, RegimeInfo
from .elliptic import EllipticSolver, build_green_table
from .grid import DomainGrid, EdgeField, NodeField, discrete_perp_grad, boundary_node_indices
from .kernels import StepWorkspace, get_step_fn
from .state import State

__all__ = ["StepperConfig", "InitSpec", "Stepper", "init_well_prepared",
           "apply_gauge", "recover_physical", "step", "run", "RunResult",
           "SimulationAbort"]


class ConfigError(ValueError):
    pass


class SimulationAbort(RuntimeError):
    """Raised internally on NaN/Inf blow-up; run() converts it to a report."""


@dataclass
class StepperConfig:
    epsilon: float
    dt: float = None
    scheme: str = "explicit-euler"
    dt_factor: float = 0.2
    T_end: float = 0.0
    stride: int = 50

    def __post_init__(self):
        if not (0.0 < self.dt_factor <= 0.5):
            raise ConfigError("dt_factor must lie in (0, 0.5]")
        if self.scheme not in ("explicit-euler", "semi-implicit"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")

    def stable_dt(self, grid: DomainGrid) -> float:
        if self.scheme == "explicit-euler":
            return self.dt_factor * min(self.epsilon**2, grid.h**2 / 4)
        # implicit diffusion: the reaction and advective remainders limit dt
        return self.dt_factor * min(self.epsilon**2, grid.h)

    def resolve_dt(self, grid: DomainGrid) -> float:
        limit = self.stable_dt(grid)
        if self.dt is None:
            return limit
        if self.dt > limit * (1 + 1e-12):
            raise ConfigError(
                f"dt={self.dt:g} violates the stability bound {limit:g} "
                f"for scheme {self.scheme}")
        return self.dt


@dataclass
class InitSpec:
    vortices: list            # (x, y, degree) triples, degree in {-1, +1}
    core_profile: str = "tanh"
    relax_steps: int = 200
    C0: float = 5.0

    def __post_init__(self):
        for (x, y, d) in self.vortices:
            if int(d) not in (-1, 1):
                raise ConfigError(f"vortex degree must be +-1, got {d}")
        if self.core_profile != "tanh":
            raise ConfigError(f"unknown core profile {self.core_profile!r}")
        if self.relax_steps < 0:
            raise ConfigError("relax_steps must be nonnegative")


def apply_gauge(state: State, xi: np.ndarray) -> State:
    """Gauge change v -> v e^{i xi}, B -> B + grad xi (discrete, exact)."""
    xi = np.asarray(xi, dtype=float)
    g = state.grid
    v = state.v * np.exp(1j * xi)
    bx = state.bx + (xi[1:, :] - xi[:-1, :]) / g.h
    by = state.by + (xi[:, 1:] - xi[:, :-1]) / g.h
    return State(g, v, bx, by, state.t, state.step)


def recover_physical(state: State, pre: PrecomputedFields):
    """Undo the splitting: u = v e^{i f}, A = B + h_ex perp_grad h0."""
    g = state.grid
    u = state.v * np.exp(1j * pre.f.values)
    p0 = discrete_perp_grad(pre.h0)
    h_ex = pre.drive.h_ex
    A = EdgeField(g, state.bx + h_ex * p0.x, state.by + h_ex * p0.y)
    return NodeField(g, u), A


class _ZeroForcing:
    """Z/f-free view of the precomputed fields (relaxation phase)."""

    def __init__(self, grid):
        self.Z = EdgeField(grid, np.zeros(grid.shape_xedges),
                           np.zeros(grid.shape_yedges))
        self.zn2 = np.zeros(grid.shape_nodes)
        self.f = NodeField(grid, np.zeros(grid.shape_nodes))


class Stepper:
    """Owns workspaces for repeated stepping of one State (single writer)."""

    def __init__(self, grid: DomainGrid, pre, cfg: StepperConfig,
                 kernel: str | None = None):
        self.grid = grid
        self.pre = pre
        self.cfg = cfg
        self.dt = cfg.resolve_dt(grid)
        self.ws = StepWorkspace(grid)
        self._fn = get_step_fn(kernel)
        self._f = np.ascontiguousarray(pre.f.values, dtype=float)
        self._zx = np.ascontiguousarray(pre.Z.x, dtype=float)
        self._zy = np.ascontiguousarray(pre.Z.y, dtype=float)
        self._zn2 = np.ascontiguousarray(pre.zn2, dtype=float)
        if cfg.scheme == "semi-implicit":
            self._setup_spectral()

    # -- explicit path ------------------------------------------------------

    def step_inplace(self, state: State):
        """Advance by one dt; returns (diss_rate, dv_l2, vf_l2, maxv)."""
        if self.cfg.scheme == "explicit-euler":
            ws = self.ws
            ws.fill_links(state.bx, state.by, self.grid.h)
            dv, db, vf2, maxv2 = self._fn(
                state.v, state.bx, state.by, self._zx, self._zy, self._zn2,
                self._f, ws.wn, ws.wex, ws.wey,
                self.grid.h, self.dt, self.cfg.epsilon**2,
                ws.vout, ws.bxout, ws.byout, ws.ux, ws.uy, ws.hp)
            state.v, ws.vout = ws.vout, state.v
            state.bx, ws.bxout = ws.bxout, state.bx
            state.by, ws.byout = ws.byout, state.by
        else:
            dv, db, vf2, maxv2 = self._semi_implicit_step(state)
        state.t += self.dt
        state.step += 1
        h2 = self.grid.h**2
        return ((dv + db) * h2, math.sqrt(dv * h2), math.sqrt(vf2 * h2),
                math.sqrt(maxv2))

    # -- semi-implicit path --------------------------------------------------

    def _setup_spectral(self):
        g = self.grid
        h2 = g.h**2

        def neumann_eigs(n):
            k = np.arange(n)
            return 2.0 * (1.0 - np.cos(np.pi * k / (n - 1))) / h2

        def dirichlet_cell_eigs(m):
            k = np.arange(m)
            return 2.0 * (1.0 - np.cos(np.pi * (k + 1) / m)) / h2

        lx = neumann_eigs(g.Nx)[:, None]
        ly = neumann_eigs(g.Ny)[None, :]
        self._den_v = 1.0 + self.dt * (lx + ly)
        mx = dirichlet_cell_eigs(g.Nx - 1)[:, None]
        my = dirichlet_cell_eigs(g.Ny - 1)[None, :]
        self._den_h = 1.0 + self.dt * (mx + my)

    def _plain_neumann_lap(self, v):
        h2 = self.grid.h**2
        out = np.zeros_like(v)
        out[1:-1, :] += v[2:, :] - 2 * v[1:-1, :] + v[:-2, :]
        out[0, :] += 2 * (v[1, :] - v[0, :])
        out[-1, :] += 2 * (v[-2, :] - v[-1, :])
        out[:, 1:-1] += v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]
        out[:, 0] += 2 * (v[:, 1] - v[:, 0])
        out[:, -1] += 2 * (v[:, -2] - v[:, -1])
        return out / h2

    def _dct_solve(self, rhs):
        coef = sfft.dctn(rhs, type=1)
        coef /= self._den_v
        return sfft.idctn(coef, type=1)

    def _dst_solve(self, rhs):
        coef = sfft.dstn(rhs, type=2)
        coef /= self._den_h
        return sfft.idstn(coef, type=2)

    def _semi_implicit_step(self, state: State):
        from ._step_numpy import step_explicit as np_step
        g, ws, dt = self.grid, self.ws, self.dt
        h = g.h
        v0 = state.v.copy()
        bx0 = state.bx.copy()
        by0 = state.by.copy()
        ws.fill_links(bx0, by0, h)
        # full explicit right-hand sides via the fallback kernel at dt=1
        np_step(state.v, state.bx, state.by, self._zx, self._zy, self._zn2,
                self._f, ws.wn, ws.wex, ws.wey, h, 1.0, self.cfg.epsilon**2,
                ws.vout, ws.bxout, ws.byout, ws.ux, ws.uy, ws.hp)
        rv = ws.vout - v0
        rbx = ws.bxout - bx0
        rby = ws.byout - by0

        # v: shift the plain screened diffusion to the implicit side
        lap = ((self._plain_neumann_lap(v0.real)
                + 1j * self._plain_neumann_lap(v0.imag)))
        vr = v0 + dt * (rv - lap)
        vnew = self._dct_solve(vr.real) + 1j * self._dct_solve(vr.imag)

        # B: implicit induced-field diffusion via the cell variable
        sx = rbx.copy()
        sy = rby.copy()
        sx[:, 1:-1] -= (ws.hp[:, :-1] - ws.hp[:, 1:]) / h
        sx[:, 0] -= -2.0 * ws.hp[:, 0] / h
        sx[:, -1] -= 2.0 * ws.hp[:, -1] / h
        sy[1:-1, :] -= (ws.hp[1:, :] - ws.hp[:-1, :]) / h
        sy[0, :] -= 2.0 * ws.hp[0, :] / h
        sy[-1, :] -= -2.0 * ws.hp[-1, :] / h
        curl_s = (sx[:, :-1] + sy[1:, :] - sx[:, 1:] - sy[:-1, :]) / h
        hnew = self._dst_solve(ws.hp + dt * curl_s)
        perp_x = np.empty_like(bx0)
        perp_x[:, 1:-1] = (hnew[:, :-1] - hnew[:, 1:]) / h
        perp_x[:, 0] = -2.0 * hnew[:, 0] / h
        perp_x[:, -1] = 2.0 * hnew[:, -1] / h
        perp_y = np.empty_like(by0)
        perp_y[1:-1, :] = (hnew[1:, :] - hnew[:-1, :]) / h
        perp_y[0, :] = 2.0 * hnew[0, :] / h
        perp_y[-1, :] = -2.0 * hnew[-1, :] / h
        bxnew = bx0 + dt * (perp_x + sx)
        bynew = by0 + dt * (perp_y + sy)

        dvdt = (vnew - v0) / dt
        dbx = (bxnew - bx0) / dt
        dby = (bynew - by0) / dt
        diss_v = float(np.sum(ws.wn * (dvdt.real**2 + dvdt.imag**2)))
        diss_b = float(np.sum(ws.wex * dbx**2) + np.sum(ws.wey * dby**2))
        m2 = v0.real**2 + v0.imag**2
        gq = (m2 - 1.0) * self._f
        vf2 = float(np.sum(ws.wn * gq * gq))
        state.v = vnew
        state.bx = bxnew
        state.by = bynew
        maxv2 = float(np.max(vnew.real**2 + vnew.imag**2))
        return diss_v, diss_b, vf2, maxv2


def step(state: State, pre: PrecomputedFields, cfg: StepperConfig,
         kernel: str | None = None) -> State:
    """Single-step convenience wrapper (allocates a fresh stepper)."""
    s = state.copy()
    Stepper(state.grid, pre, cfg, kernel).step_inplace(s)
    return s


# ---------------------------------------------------------------------------
# Initial data

def _phase_and_modulus(grid: DomainGrid, vortices, epsilon):
    X, Y = grid.node_coords()
    theta = np.zeros(grid.shape_nodes)
    rho = np.ones(grid.shape_nodes)
    for (x0, y0, d) in vortices:
        theta += d * np.arctan2(Y - y0, X - x0)
        r = np.hypot(X - x0, Y - y0)
        rho *= np.tanh(r / (math.sqrt(2.0) * epsilon))
    return theta, rho


def _phase_boundary_correction(grid: DomainGrid, vortices,
                               solver: EllipticSolver) -> np.ndarray:
    """Harmonic-type phase correction zeroing the normal phase gradient.

    Solves the pinned Neumann Poisson problem with boundary load
    -(grad Theta . nu); the corrected phase Theta + psi makes the ansatz
    compatible with the current-free boundary condition.
    """
    bi, bj = boundary_node_indices(grid)
    from .grid import boundary_normals
    nxv, nyv = boundary_normals(grid)
    xb = bi * grid.h
    yb = bj * grid.h
    gn = np.zeros(len(bi))
    for (x0, y0, d) in vortices:
        r2 = (xb - x0) ** 2 + (yb - y0) ** 2
        gn += d * (-(yb - y0) * nxv + (xb - x0) * nyv) / r2
    load = np.zeros(grid.Nx * grid.Ny)
    load[bi * grid.Ny + bj] = -gn * grid.h
    return solver.solve_poisson_neumann(load).values


def init_well_prepared(spec: InitSpec, pre: PrecomputedFields,
                       grid: DomainGrid, cfg: StepperConfig,
                       solver: EllipticSolver | None = None,
                       green_table=None) -> State:
    """Construct relaxed, gauge-fixed initial data carrying the requested
    vortices: tanh cores with the winding phase (plus a boundary phase
    correction), screened induced-field response, a current-free relaxation
    phase, and a final gauge fix putting B(0) in the Coulomb gauge."""
    eps = cfg.epsilon
    if grid.h > eps / 4 + 1e-12:
        raise ConfigError(
            f"core resolution requires h <= eps/4: h={grid.h:g}, eps={eps:g}")
    pts = [(float(x), float(y), int(d)) for (x, y, d) in spec.vortices]
    for k, (x, y, d) in enumerate(pts):
        if grid.boundary_distance(x, y) < 4 * eps:
            raise ConfigError(f"vortex {k} closer than 4 eps to the boundary")
        for l in range(k):
            # 6 eps: tightest admissible spacing for non-overlapping cores
            if math.hypot(x - pts[l][0], y - pts[l][1]) < 6 * eps - 1e-12:
                raise ConfigError(f"vortices {l} and {k} closer than 6 eps")
    if solver is None:
        solver = EllipticSolver(grid)

    if pts:
        theta, rho = _phase_and_modulus(grid, pts, eps)
        psi = _phase_boundary_correction(grid, pts, solver)
        v = rho * np.exp(1j * (theta + psi))
        if green_table is None:
            green_table = build_green_table(
                grid, [(x, y) for (x, y, _) in pts], solver)
        from .reduced import london_field
        hl = london_field([(x, y) for (x, y, _) in pts],
                          [d for (_, _, d) in pts], green_table, grid)
        # stream function of the screened response: lap psi_b = h_london
        psi_b = solver.solve_poisson_dirichlet(
            NodeField(grid, -hl.values))
        B0 = discrete_perp_grad(psi_b)
        state = State(grid, v, B0.x, B0.y)
    else:
        state = State(grid, np.ones(grid.shape_nodes, dtype=complex),
                      np.zeros(grid.shape_xedges), np.zeros(grid.shape_yedges))

    # current-free relaxation absorbs the ansatz error
    if spec.relax_steps > 0:
        relax_cfg = StepperConfig(epsilon=eps, scheme="explicit-euler",
                                  dt_factor=min(cfg.dt_factor, 0.2))
        stepper = Stepper(grid, _ZeroForcing(grid), relax_cfg)
        for _ in range(spec.relax_steps):
            stepper.step_inplace(state)
        state.t = 0.0
        state.step = 0

    # Coulomb gauge fix: div(B + grad xi) = 0 weakly at every node
    xi = solver.coulomb_gauge_phase(state.bx, state.by)
    state = apply_gauge(state, xi)
    if not state.is_finite():
        raise SimulationAbort("initialization produced non-finite data")
    return state


# ---------------------------------------------------------------------------
# Run loop

@dataclass
class RunResult:
    rows: list                 # energetics.LedgerRow
    frames: list               # (t, tau, [Detection])
    state0: State
    state_final: State
    snapshots: dict            # t -> State copies at requested times
    aborted: bool = False
    abort_reason: str = ""
    lam: float = 1.0


def run(grid: DomainGrid, pre: PrecomputedFields, regime: RegimeInfo,
        state: State, cfg: StepperConfig, snapshot_times=(),
        kernel: str | None = None) -> RunResult:
    """March from t=0 to T_end, emitting ledger rows and detection frames
    every `stride` steps. Reported tau is t / lambda (acceleration scale)."""
    stepper = Stepper(grid, pre, cfg, kernel)
    dt = stepper.dt
    lam = regime.lam
    n_steps = int(round(cfg.T_end / dt)) if cfg.T_end > 0 else 0
    eps = cfg.epsilon

    snapshot_times = sorted(float(t) for t in snapshot_times)
    snap_iter = iter(snapshot_times)
    next_snap = next(snap_iter, None)

    state0 = state.copy()
    cum_diss = cum_dv = cum_vf = 0.0
    rows = []
    frames = []
    snaps = {}

    def ledger_row(prev, cur, stats):
        terms = (energetics.IdentityTerms(0.0, 0.0, 0.0, 0.0) if prev is None
                 else energetics.energy_identity_residual(prev, cur, pre, eps))
        rows.append(energetics.LedgerRow(
            step=cur.step, t=cur.t, tau=cur.t / lam,
            F=energetics.free_energy(cur, eps),
            Ftilde=energetics.modified_energy(cur, pre, eps),
            dissipation=terms.dissipation, interaction=terms.interaction,
            residual=terms.residual,
            supv=float(np.max(np.abs(cur.v))),
            divB_norm=energetics.div_b_norm(cur),
            cum_dissipation=cum_diss, cum_vf_l2=cum_vf, cum_dv_l2=cum_dv))
        frames.append((cur.t, cur.t / lam, vortex.detect(cur)))

    ledger_row(None, state, None)
    if next_snap is not None and next_snap <= 0.0:
        snaps[0.0] = state.copy()
        next_snap = next(snap_iter, None)

    last_good = state.copy()
    prev_cache = None
    for k in range(1, n_steps + 1):
        is_ledger = (k % cfg.stride == 0) or (k == n_steps)
        if is_ledger:
            prev_cache = state.copy()
        diss_rate, dv_l2, vf_l2, maxv = stepper.step_inplace(state)
        if not math.isfinite(maxv):
            return RunResult(rows, frames, state0, last_good, snaps,
                             aborted=True,
                             abort_reason=f"non-finite state at step {k}",
                             lam=lam)
        cum_diss += dt * diss_rate
        cum_dv += dt * dv_l2
        cum_vf += dt * vf_l2
        if is_ledger:
            ledger_row(prev_cache, state, None)
            last_good = state.copy()
        if next_snap is not None and state.t >= next_snap - dt / 2:
            snaps[next_snap] = state.copy()
            next_snap = next(snap_iter, None)
    return RunResult(rows, frames, state0, state, snaps, lam=lam)
