"""Orchestration: simulate / reduce / compare / verify pipelines, ladder
management, discrepancy metrics, and artifact export.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import energetics, io, reduced, vortex
from .applied import classify_regime, precompute
from .config import RunConfig
from .elliptic import EllipticSolver, build_green_table
from .grid import (
    EdgeField,
    NodeField,
    discrete_curl,
    discrete_div,
    discrete_grad,
    discrete_perp_grad,
    make_grid,
    nodes_to_cells,
)
from .state import State
from .tdgl import InitSpec, Stepper, StepperConfig, apply_gauge, init_well_prepared, run

ENERGY_HEADER = ["step", "t", "tau", "F", "Ftilde", "dissipation",
                 "interaction", "residual", "supv", "divB_norm"]
TRACKS_HEADER = ["step", "t", "tau", "vortex_id", "x", "y", "degree"]
MONITORS_HEADER = ["t", "monitor_id", "lhs", "rhs", "slack", "verdict"]

# fitted constants; see calibration notes in the repository root
CALIBRATION = {
    "boundary_modulus_C": 1.0,
    "delta_disc_multiplier": 20.0,
}


@dataclass
class Prepared:
    grid: object
    solver: EllipticSolver
    pre: object
    regime: object
    stepcfg: StepperConfig


def prepare(cfg: RunConfig, grid=None, epsilon=None) -> Prepared:
    g = grid if grid is not None else cfg.grid()
    eps = epsilon if epsilon is not None else cfg.epsilon
    solver = EllipticSolver(g)
    pre = precompute(cfg.drive_spec(), g, solver=solver)
    regime = classify_regime(cfg.j_ex, cfg.h_ex, eps,
                             override=None if cfg.regime_override == "auto"
                             else cfg.regime_override)
    stepcfg = StepperConfig(epsilon=eps, dt=cfg.dt, scheme=cfg.scheme,
                            dt_factor=cfg.dt_factor, stride=cfg.stride)
    return Prepared(g, solver, pre, regime, stepcfg)


def _track_rows(result, grid, pre, regime):
    """Greedy-track the detection frames and flatten them into CSV rows."""
    dt_frame = (result.rows[1].t - result.rows[0].t) if len(result.rows) > 1 \
        else 1.0
    ale = regime.lam * regime.k_ex  # |log eps|
    v_est = 4.0 * pre.sup_Z / max(ale, 1e-6)
    max_jump = 5 * grid.h + 2 * dt_frame * v_est
    frames = [(t, dets) for (t, _tau, dets) in result.frames]
    tracks = vortex.track(frames, grid, max_jump)
    t_to_rowmeta = {r.t: (r.step, r.tau) for r in result.rows}
    rows = []
    for tr in tracks:
        for (t, x, y) in tr.samples:
            step, tau = t_to_rowmeta.get(t, (-1, t / regime.lam))
            rows.append((step, t, tau, tr.vortex_id, x, y, tr.degree))
    rows.sort(key=lambda r: (r[0], r[3]))
    return rows, tracks


def export_run(out_dir, result, prep, cfg: RunConfig, extra_fields=()):
    os.makedirs(out_dir, exist_ok=True)
    io.write_csv(os.path.join(out_dir, "energy.csv"), ENERGY_HEADER,
                 [(r.step, r.t, r.tau, r.F, r.Ftilde, r.dissipation,
                   r.interaction, r.residual, r.supv, r.divB_norm)
                  for r in result.rows])
    track_rows, tracks = _track_rows(result, prep.grid, prep.pre, prep.regime)
    io.write_csv(os.path.join(out_dir, "tracks.csv"), TRACKS_HEADER, track_rows)

    monitors = energetics.evaluate_monitors(
        result.rows, prep.pre, cfg.C0, prep.regime.k_ex, prep.regime.lam,
        boundary_c=None)
    io.write_csv(os.path.join(out_dir, "monitors.csv"), MONITORS_HEADER,
                 [(m.t, m.monitor_id, m.lhs, m.rhs, m.slack, int(m.verdict))
                  for m in monitors])

    g = prep.grid
    io.write_field_snapshot(out_dir, "f1", "node", prep.pre.f1.values, g)
    io.write_field_snapshot(out_dir, "h0", "node", prep.pre.h0.values, g)
    for label, st in (("initial", result.state0), ("final", result.state_final)):
        io.write_field_snapshot(out_dir, f"v_re_{label}", "node",
                                st.v.real, g, st.t)
        io.write_field_snapshot(out_dir, f"v_im_{label}", "node",
                                st.v.imag, g, st.t)
        io.write_field_snapshot(out_dir, f"b_x_{label}", "edge-x", st.bx, g, st.t)
        io.write_field_snapshot(out_dir, f"b_y_{label}", "edge-y", st.by, g, st.t)
        io.write_field_snapshot(out_dir, f"hprime_{label}", "cell",
                                discrete_curl(st.B).values, g, st.t)
    for name, site, values in extra_fields:
        io.write_field_snapshot(out_dir, name, site, values, g)
    with open(os.path.join(out_dir, "calibration"), "w", encoding="utf-8") as f:
        for k, v in sorted(CALIBRATION.items()):
            f.write(f"{k}: {io.fmt(v)}\n")
    io.write_manifest(out_dir)
    return monitors, tracks


def simulate(cfg: RunConfig, out_dir=None, kernel=None):
    """Full-field run per the config; returns (result, monitors, tracks)."""
    prep = prepare(cfg)
    state = init_well_prepared(
        InitSpec(vortices=cfg.vortices, relax_steps=cfg.relax_steps,
                 C0=cfg.C0),
        prep.pre, prep.grid, prep.stepcfg, prep.solver)
    T_end = cfg.T * prep.regime.lam if cfg.accelerated else cfg.T
    runcfg = StepperConfig(epsilon=cfg.epsilon, dt=cfg.dt, scheme=cfg.scheme,
                           dt_factor=cfg.dt_factor, T_end=T_end,
                           stride=cfg.stride)
    result = run(prep.grid, prep.pre, prep.regime, state, runcfg,
                 kernel=kernel)
    monitors, tracks = (None, None)
    if out_dir:
        monitors, tracks = export_run(out_dir, result, prep, cfg)
    return result, prep, monitors, tracks


def reduce_run(cfg: RunConfig, out_dir=None):
    """Reduced point-vortex integration per the config."""
    prep = prepare(cfg)
    positions = [(v[0], v[1]) for v in cfg.vortices]
    degrees = [int(v[2]) for v in cfg.vortices]
    coeffs = _law_coeffs(cfg, prep.regime)
    cache = reduced.GreenCache(prep.grid, prep.solver) if coeffs.c_W else None
    state0 = reduced.ReducedState(np.array(positions, dtype=float),
                                  np.array(degrees))
    samples, t_star = reduced.integrate(
        state0, coeffs, prep.pre, cache, cfg.compare_T, cfg.dtau,
        cfg.sigma_star, sample_stride=cfg.compare_stride)
    if out_dir:
        export_reduce(out_dir, samples, degrees, prep)
    return samples, t_star, prep


def _law_coeffs(cfg: RunConfig, regime):
    coeffs = reduced.LawCoefficients.from_regime(regime)
    if cfg.c_W == "on":
        coeffs.c_W = 1.0
    elif cfg.c_W == "off":
        coeffs.c_W = 0.0
    return coeffs


def export_reduce(out_dir, samples, degrees, prep):
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for (tau, pos) in samples:
        for i, (x, y) in enumerate(np.atleast_2d(pos)):
            rows.append((tau, i, x, y, degrees[i]))
    io.write_csv(os.path.join(out_dir, "ode_tracks.csv"),
                 ["tau", "vortex_id", "x", "y", "degree"], rows)
    series, _ = reduced.conserved_H(samples, prep.pre)
    crows = []
    for k, (tau, _pos) in enumerate(samples):
        for i in range(series.shape[1]):
            crows.append((tau, i, series[k, i]))
    io.write_csv(os.path.join(out_dir, "conserved.csv"),
                 ["tau", "vortex_id", "f1_value"], crows)
    io.write_manifest(out_dir)


# ---------------------------------------------------------------------------
# Compare: PDE ladder vs the reduced law

@dataclass
class MemberReport:
    epsilon: float
    D: float
    tau_max: float
    t_star_ode: float
    pde_drift_f1: float
    ode_drift_f1: float
    runtime_s: float
    aborted: bool
    monitors_ok: bool


@dataclass
class CompareReport:
    members: list
    monotone: bool
    osc_f1: float

    def to_json(self):
        return json.dumps({
            "members": [vars(m) for m in self.members],
            "monotone": self.monotone,
            "osc_f1": self.osc_f1,
        }, indent=2, sort_keys=True)


def _pde_series(track_rows, n_vortices, lam):
    """Per-vortex (tau, x, y) arrays from flattened track rows, active spans
    only; requires the first n_vortices track ids present from tau = 0."""
    series = {}
    for (step, t, tau, vid, x, y, deg) in track_rows:
        series.setdefault(vid, []).append((tau, x, y))
    out = []
    for vid in range(n_vortices):
        if vid not in series:
            return None
        out.append(np.array(series[vid]))
    return out


def run_member(cfg: RunConfig, eps: float, kernel=None):
    """One ladder member: accelerated PDE window plus the matched reduced law."""
    t0 = time.perf_counter()
    grid = cfg.ladder_grid(eps)
    prep = prepare(cfg, grid=grid, epsilon=eps)
    stepcfg = StepperConfig(epsilon=eps, scheme=cfg.scheme,
                            dt_factor=cfg.dt_factor,
                            T_end=cfg.compare_T * prep.regime.lam,
                            stride=cfg.stride)
    state = init_well_prepared(
        InitSpec(vortices=cfg.vortices, relax_steps=cfg.relax_steps,
                 C0=cfg.C0),
        prep.pre, prep.grid, stepcfg, prep.solver)
    result = run(prep.grid, prep.pre, prep.regime, state, stepcfg,
                 kernel=kernel)

    dets0 = result.frames[0][2]
    degrees = [d.degree for d in dets0]
    coeffs = _law_coeffs(cfg, prep.regime)
    cache = reduced.GreenCache(prep.grid, prep.solver) if coeffs.c_W else None
    state0 = reduced.ReducedState(
        np.array([[d.x, d.y] for d in dets0]), np.array(degrees))
    samples, t_star = reduced.integrate(
        state0, coeffs, prep.pre, cache, cfg.compare_T, cfg.dtau,
        cfg.sigma_star, sample_stride=cfg.compare_stride)
    return prep, result, samples, t_star, time.perf_counter() - t0


def member_discrepancy(cfg, prep, result, samples, t_star_ode):
    """Sup-over-time-and-vortices distance on a common tau grid."""
    track_rows, _ = _track_rows(result, prep.grid, prep.pre, prep.regime)
    n = len(result.frames[0][2])
    pde = _pde_series(track_rows, n, prep.regime.lam)
    if pde is None or result.aborted:
        return math.inf, 0.0, track_rows
    tau_pde = min(s[-1, 0] for s in pde)
    tau_max = min(cfg.compare_T, tau_pde, t_star_ode)
    taus = np.linspace(0.0, tau_max, 121)
    ode_tau = np.array([s[0] for s in samples])
    ode_pos = np.array([np.atleast_2d(p) for (_, p) in samples])
    D = 0.0
    for i in range(n):
        px = np.interp(taus, pde[i][:, 0], pde[i][:, 1])
        py = np.interp(taus, pde[i][:, 0], pde[i][:, 2])
        ox = np.interp(taus, ode_tau, ode_pos[:, i, 0])
        oy = np.interp(taus, ode_tau, ode_pos[:, i, 1])
        D = max(D, float(np.max(np.hypot(px - ox, py - oy))))
    return D, tau_max, track_rows


def _f1_drift_along(track_rows, pre, n):
    drift = 0.0
    base = {}
    for (step, t, tau, vid, x, y, deg) in track_rows:
        if vid >= n:
            continue
        val = pre.f1_at(x, y)
        if vid not in base:
            base[vid] = val
        drift = max(drift, abs(val - base[vid]))
    return drift


def compare(cfg: RunConfig, out_dir=None, threads: int = 1, kernel=None) \
        -> CompareReport:
    ladder = list(cfg.epsilon_ladder)
    if not ladder:
        raise ValueError("compare requires a nonempty epsilon ladder")

    def one(eps):
        prep, result, samples, t_star, rt = run_member(cfg, eps, kernel)
        D, tau_max, track_rows = member_discrepancy(cfg, prep, result,
                                                    samples, t_star)
        monitors = energetics.evaluate_monitors(
            result.rows, prep.pre, cfg.C0, prep.regime.k_ex, prep.regime.lam)
        mon_ok = all(m.verdict for m in monitors
                     if m.monitor_id in ("gronwall", "budget_energy",
                                         "budget_dissipation"))
        n = len(result.frames[0][2])
        pde_drift = _f1_drift_along(track_rows, prep.pre, n)
        _, ode_drift = reduced.conserved_H(samples, prep.pre)
        member = MemberReport(
            epsilon=eps, D=D, tau_max=tau_max, t_star_ode=t_star,
            pde_drift_f1=pde_drift, ode_drift_f1=ode_drift, runtime_s=rt,
            aborted=result.aborted, monitors_ok=mon_ok)
        return member, prep, result, samples, track_rows, monitors

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            outputs = list(ex.map(one, ladder))
    else:
        outputs = [one(e) for e in ladder]

    members = [o[0] for o in outputs]
    ds = [m.D for m in members]
    monotone = all(a > b for a, b in zip(ds, ds[1:]))
    f1 = outputs[0][1].pre.f1.values
    osc = float(np.max(f1) - np.min(f1))
    report = CompareReport(members, monotone, osc)

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for (member, prep, result, samples, track_rows, monitors) in outputs:
            sub = os.path.join(out_dir, f"eps_{member.epsilon:.6g}")
            export_run(sub, result, prep, cfg)
            export_reduce(sub, samples,
                          [int(v[2]) for v in cfg.vortices] or
                          [d.degree for d in result.frames[0][2]], prep)
        io.write_csv(os.path.join(out_dir, "ladder.csv"),
                     ["epsilon", "D", "tau_max", "t_star_ode", "pde_drift_f1",
                      "ode_drift_f1", "runtime_s", "monitors_ok"],
                     [(m.epsilon, m.D, m.tau_max, m.t_star_ode,
                       m.pde_drift_f1, m.ode_drift_f1, m.runtime_s,
                       int(m.monitors_ok)) for m in members])
        with open(os.path.join(out_dir, "report.json"), "w",
                  encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
        io.write_manifest(out_dir)
    return report


# ---------------------------------------------------------------------------
# Verify: named invariant suites with measured values

@dataclass
class VerifyItem:
    name: str
    measured: float
    threshold: float
    passed: bool


def _random_physical_state(grid, epsilon, seed) -> State:
    rng = np.random.default_rng(seed)
    X, Y = grid.node_coords()
    n = int(rng.integers(1, 3))
    theta = np.zeros(grid.shape_nodes)
    rho = np.ones(grid.shape_nodes)
    for _ in range(n):
        x0 = rng.uniform(0.25, 0.75) * grid.Lx
        y0 = rng.uniform(0.25, 0.75) * grid.Ly
        d = int(rng.choice([-1, 1]))
        theta += d * np.arctan2(Y - y0, X - x0)
        rho *= np.tanh(np.hypot(X - x0, Y - y0) / (math.sqrt(2) * epsilon))
    v = rho * np.exp(1j * theta)
    bx = 0.3 * rng.standard_normal(grid.shape_xedges)
    by = 0.3 * rng.standard_normal(grid.shape_yedges)
    return State(grid, v, bx, by)


def _smooth_gauge(grid, rng):
    X, Y = grid.node_coords()
    xi = rng.standard_normal() * 0.5
    for _ in range(3):
        a, b = rng.integers(1, 4, size=2)
        xi = xi + rng.standard_normal() * np.sin(np.pi * a * X / grid.Lx) \
            * np.cos(np.pi * b * Y / grid.Ly)
    return xi


def verify(cfg: RunConfig, corrupt: bool = False):
    """Machine-readable pass/fail per invariant with measured values."""
    items = []
    g = make_grid(1.0, 1.0, 65, 65)
    eps = 1 / 16
    rng = np.random.default_rng(cfg.seed)

    # grid identities, normalized by the size of the cancelling terms
    u = rng.standard_normal(g.shape_nodes)
    gu = discrete_grad(NodeField(g, u))
    scale = (np.max(np.abs(gu.x)) + np.max(np.abs(gu.y))) / g.h
    cg = discrete_curl(gu).values
    m = float(np.max(np.abs(cg)) / scale)
    items.append(VerifyItem("grid.curl_grad_zero", m, 1e-12, m <= 1e-12))
    pg = discrete_perp_grad(NodeField(g, u))
    scale = (np.max(np.abs(pg.x)) + np.max(np.abs(pg.y))) / g.h
    dp = discrete_div(pg).values
    m = float(np.max(np.abs(dp[1:-1, 1:-1])) / scale)
    items.append(VerifyItem("grid.div_perp_interior_zero", m, 1e-12,
                            m <= 1e-12))
    uc = rng.standard_normal(g.shape_nodes)
    uc[:2, :] = uc[-2:, :] = uc[:, :2] = uc[:, -2:] = 0.0
    B = EdgeField(g, rng.standard_normal(g.shape_xedges),
                  rng.standard_normal(g.shape_yedges))
    gradu = discrete_grad(NodeField(g, uc))
    sbp = abs((np.sum(gradu.x * B.x) + np.sum(gradu.y * B.y)
               + np.sum(uc * discrete_div(B).values)) * g.h**2)
    items.append(VerifyItem("grid.summation_by_parts", sbp, 1e-10,
                            sbp <= 1e-10))

    # gauge invariance block (20 random transforms)
    from .applied import DriveSpec
    pre = precompute(DriveSpec(j_ex=1.0, h_ex=1.0, J_nu=[0.0, 0.3], H=[1.0]),
                     g)
    worst = 0.0
    worst_mu = 0.0
    for k in range(20):
        st = _random_physical_state(g, eps, cfg.seed + k)
        F = energetics.free_energy(st, eps)
        Ft = energetics.modified_energy(st, pre, eps)
        mu = vortex.vorticity(st).mu.values
        hp = discrete_curl(st.B).values
        st2 = apply_gauge(st, _smooth_gauge(g, rng))
        if corrupt and k == 0:
            st2.bx[10, 10] += math.pi / g.h  # flip one link phase
        F2 = energetics.free_energy(st2, eps)
        Ft2 = energetics.modified_energy(st2, pre, eps)
        mu2 = vortex.vorticity(st2).mu.values
        hp2 = discrete_curl(st2.B).values
        worst = max(worst, abs(F2 - F) / F, abs(Ft2 - Ft) / Ft)
        scale = np.max(np.abs(mu)) + 1.0
        worst_mu = max(worst_mu, float(np.max(np.abs(mu2 - mu))) / scale,
                       float(np.max(np.abs(hp2 - hp))) / scale)
    items.append(VerifyItem("gauge.energy_invariance", worst, 1e-11,
                            worst <= 1e-11))
    items.append(VerifyItem("gauge.vorticity_invariance", worst_mu, 1e-11,
                            worst_mu <= 1e-11))

    # vorticity quantization on random states
    worst_q = 0.0
    for k in range(5):
        st = _random_physical_state(g, eps, 1000 + k)
        q = vortex.vorticity(st).total_winding / (2 * math.pi)
        worst_q = max(worst_q, abs(q - round(q)))
    items.append(VerifyItem("vorticity.quantization", worst_q, 1e-8,
                            worst_q <= 1e-8))

    # elliptic manufactured order (two refinements)
    from .elliptic import HelmholtzProblem, solve_helmholtz
    from .grid import BoundaryTrace, boundary_node_indices

    def m_err(n, bc):
        gg = make_grid(1, 1, n, n)
        X, Y = gg.node_coords()
        ustar = np.cos(np.pi * X) * np.cos(np.pi * Y)
        rhs = (2 * np.pi**2 + 1) * ustar
        bi, bj = boundary_node_indices(gg)
        data = ustar[bi, bj] if bc == "dirichlet" else np.zeros(len(bi))
        uu = solve_helmholtz(HelmholtzProblem(
            NodeField(gg, rhs), bc, BoundaryTrace(gg, data)))
        return float(np.max(np.abs(uu.values - ustar)))

    for bc in ("dirichlet", "neumann"):
        e1, e2, e3 = m_err(65, bc), m_err(129, bc), m_err(257, bc)
        o1 = math.log2(e1 / e2)
        o2 = math.log2(e2 / e3)
        ok = 1.8 <= o1 <= 2.2 and 1.8 <= o2 <= 2.2
        items.append(VerifyItem(f"elliptic.order_{bc}", min(o1, o2), 1.8, ok))

    # determinism: two identical mini-runs produce identical ledgers
    mini = RunConfig(nx=65, ny=65, epsilon=eps, j_ex=1.0, h_ex=1.0,
                     J_nu=[0.0, 0.3], vortices=[[0.5, 0.5, 1]],
                     relax_steps=20, T=20 * 0.2 * min(eps**2, g.h**2 / 4),
                     stride=5, seed=cfg.seed)
    r1, _, _, _ = simulate(mini)
    r2, _, _, _ = simulate(mini)
    same = all(
        (a.F == b.F and a.Ftilde == b.Ftilde and a.residual == b.residual)
        for a, b in zip(r1.rows, r2.rows))
    items.append(VerifyItem("determinism.ledger_bitwise", 0.0 if same else 1.0,
                            0.0, same))
    return items


def verify_report_rows(items):
    return [(i.name, i.measured, i.threshold, int(i.passed)) for i in items]
