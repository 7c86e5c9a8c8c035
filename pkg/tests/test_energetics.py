import math

import numpy as np
import pytest

from conftest import EPS64, ansatz_state
from glvortex import energetics
from glvortex.elliptic import EllipticSolver, build_green_table
from glvortex.grid import NodeField, make_grid
from glvortex.reduced import grad_W, london_field, W
from glvortex.state import State
from glvortex.tdgl import InitSpec, StepperConfig, init_well_prepared


class TestEnergies:
    def test_vacuum_zero(self, grid65, pre65):
        g = grid65
        st = State(g, np.ones(g.shape_nodes, complex),
                   np.zeros(g.shape_xedges), np.zeros(g.shape_yedges))
        assert energetics.free_energy(st, EPS64) == 0.0

    def test_normal_state_closed_form(self, grid65):
        g = grid65
        st = State(g, np.zeros(g.shape_nodes, complex),
                   np.zeros(g.shape_xedges), np.zeros(g.shape_yedges))
        assert energetics.free_energy(st, EPS64) == pytest.approx(
            1.0 / (4 * EPS64**2), rel=1e-12)

    def test_ftilde_ordering(self, pre65, single_vortex65):
        F = energetics.free_energy(single_vortex65, EPS64)
        Ft = energetics.modified_energy(single_vortex65, pre65, EPS64)
        assert Ft >= F >= 0
        gap = energetics.z_energy(single_vortex65, pre65)
        assert Ft - F == pytest.approx(gap, rel=1e-12)

    def test_single_vortex_band(self):
        # core self-energy pi |log eps| plus order-one corrections
        eps = 0.05
        g = make_grid(1, 1, 257, 257)
        st = ansatz_state(g, [(0.5, 0.5, 1)], eps)
        F = energetics.free_energy(st, eps)
        gamma = energetics.compute_gamma()
        base = math.pi * abs(math.log(eps))
        assert base - 2 <= F <= base + gamma + 3


class TestGamma:
    def test_domain_doubling(self):
        g20 = energetics._gamma_at(20.0, 4000)
        g40 = energetics._gamma_at(40.0, 8000)
        assert abs(g20 - g40) <= 1e-3

    def test_profile_shape(self):
        r, p = energetics.vortex_core_profile(20.0)
        assert np.all(np.diff(p) > -1e-12)
        assert p[-1] >= 0.99
        assert p[0] == 0.0

    def test_resolution_invariance(self):
        a = energetics._gamma_at(20.0, 4000)
        b = energetics._gamma_at(20.0, 8000)
        assert abs(a - b) <= 1e-3


class TestStress:
    def test_vacuum_zero(self, grid65):
        g = grid65
        st = State(g, np.ones(g.shape_nodes, complex),
                   np.zeros(g.shape_xedges), np.zeros(g.shape_yedges))
        T = energetics.stress_tensor(st, EPS64)
        for c in (T.t11, T.t12, T.t21, T.t22):
            assert np.max(np.abs(c.values)) < 1e-12

    def test_symmetric(self, single_vortex65):
        T = energetics.stress_tensor(single_vortex65, EPS64)
        assert np.max(np.abs(T.t12.values - T.t21.values)) < 1e-12

    def test_gauge_invariance(self, grid65, single_vortex65):
        from conftest import smooth_gauge
        from glvortex.tdgl import apply_gauge
        T0 = energetics.stress_tensor(single_vortex65, EPS64)
        Tg = energetics.stress_tensor(
            apply_gauge(single_vortex65, smooth_gauge(grid65, 9)), EPS64)
        scale = np.max(np.abs(T0.t11.values))
        assert np.max(np.abs(Tg.t11.values - T0.t11.values)) <= 1e-11 * scale
        assert np.max(np.abs(Tg.t12.values - T0.t12.values)) <= 1e-11 * scale

    def test_constant_limit_field(self, grid65):
        S = energetics.limit_stress(NodeField(grid65,
                                              np.full(grid65.shape_nodes, 2.0)))
        assert np.allclose(S.t11.values, 2.0, atol=1e-12)
        assert np.allclose(S.t22.values, 2.0, atol=1e-12)
        assert np.max(np.abs(S.t12.values)) < 1e-12


class TestRingIntegral:
    @pytest.fixture(scope="class")
    def setup257(self):
        g = make_grid(1, 1, 257, 257)
        solver = EllipticSolver(g)
        return g, solver

    def test_symmetric_vanishes(self, setup257):
        g, solver = setup257
        table = build_green_table(g, [(0.5, 0.5)], solver)
        hl = london_field([(0.5, 0.5)], [1], table, g)
        S = energetics.limit_stress(hl)
        for r in (0.2, 0.1):
            ri = energetics.ring_integral(S, (0.5, 0.5), r)
            assert np.linalg.norm(ri) <= 5e-2 * (math.pi / r)

    def test_matches_grad_w(self, setup257):
        g, solver = setup257
        pts = np.array([[0.3, 0.5]])
        table = build_green_table(g, pts, solver)
        hl = london_field(pts, [1], table, g)
        S = energetics.limit_stress(hl)
        gw = grad_W(pts, [1], table)[0]
        ri = energetics.ring_integral(S, (0.3, 0.5), 0.05)
        assert np.linalg.norm(ri - gw) <= 0.10 * np.linalg.norm(gw)

    def test_two_vortex_repulsion(self, setup257):
        g, solver = setup257
        pts = np.array([[0.35, 0.5], [0.65, 0.5]])
        table = build_green_table(g, pts, solver)
        hl = london_field(pts, [1, 1], table, g)
        S = energetics.limit_stress(hl)
        ri = energetics.ring_integral(S, (0.35, 0.5), 0.05)
        rep = -2 * math.pi * (pts[0] - pts[1]) / np.sum((pts[0] - pts[1]) ** 2)
        gw = grad_W(pts, [1, 1], table)[0]
        # log repulsion plus smooth corrections, within 10 percent
        assert np.linalg.norm(ri - gw) <= 0.10 * np.linalg.norm(gw)
        assert np.linalg.norm(gw - rep) <= 0.5 * np.linalg.norm(rep)

    def test_rejects_outside(self, setup257):
        g, solver = setup257
        table = build_green_table(g, [(0.5, 0.5)], solver)
        hl = london_field([(0.5, 0.5)], [1], table, g)
        S = energetics.limit_stress(hl)
        with pytest.raises(ValueError):
            energetics.ring_integral(S, (0.1, 0.5), 0.2)


class TestWellPrepared:
    @pytest.fixture(scope="class")
    def setup_wp(self):
        eps = 0.05
        g = make_grid(1, 1, 257, 257)
        solver = EllipticSolver(g)
        from glvortex.applied import DriveSpec, precompute
        pre = precompute(DriveSpec(j_ex=1.0, h_ex=1.0, J_nu=[0.0, 0.3],
                                   H=[1.0]), g, solver=solver)
        pts = [(0.35, 0.5, 1), (0.65, 0.5, -1)]
        table = build_green_table(g, [(x, y) for (x, y, _) in pts], solver)
        Wd = W([(x, y) for (x, y, _) in pts], [d for (_, _, d) in pts], table)
        gamma = energetics.compute_gamma()
        return eps, g, solver, pre, pts, table, Wd, gamma

    def test_standard_init_passes(self, setup_wp):
        eps, g, solver, pre, pts, table, Wd, gamma = setup_wp
        cfg = StepperConfig(epsilon=eps)
        st = init_well_prepared(InitSpec(vortices=pts, relax_steps=200),
                                pre, g, cfg, solver, green_table=table)
        rep = energetics.well_prepared_check(st, pre, 2, 5.0, 1.0, gamma, Wd,
                                             eps)
        assert rep.verdict, f"excess={rep.excess}, band=({rep.lower},{rep.upper})"

    def test_vacuum_excess_small(self, setup_wp):
        eps, g, solver, pre, *_ = setup_wp
        cfg = StepperConfig(epsilon=eps)
        st = init_well_prepared(InitSpec(vortices=[], relax_steps=100),
                                pre, g, cfg, solver)
        gamma = 1.0  # unused for n=0
        rep = energetics.well_prepared_check(st, pre, 0, 5.0, 1.0, gamma, 0.0,
                                             eps)
        assert abs(rep.excess) <= 0.5

    def test_unrelaxed_reports_larger_excess(self, setup_wp):
        eps, g, solver, pre, pts, table, Wd, gamma = setup_wp
        cfg = StepperConfig(epsilon=eps)
        raw = init_well_prepared(InitSpec(vortices=pts, relax_steps=0),
                                 pre, g, cfg, solver, green_table=table)
        rel = init_well_prepared(InitSpec(vortices=pts, relax_steps=200),
                                 pre, g, cfg, solver, green_table=table)
        e_raw = energetics.well_prepared_check(raw, pre, 2, 5.0, 1.0, gamma,
                                               Wd, eps).excess
        e_rel = energetics.well_prepared_check(rel, pre, 2, 5.0, 1.0, gamma,
                                               Wd, eps).excess
        assert e_raw > e_rel


class TestMonitors:
    def make_rows(self, f_values, pre):
        rows = []
        for k, f in enumerate(f_values):
            rows.append(energetics.LedgerRow(
                step=k, t=0.01 * k, tau=0.01 * k, F=f, Ftilde=f,
                dissipation=0.0, interaction=0.0, residual=0.0, supv=1.0,
                divB_norm=0.0, cum_dissipation=0.0))
        return rows

    def test_gronwall_flat(self, pre65):
        rows = self.make_rows([1.0, 1.0, 1.0], pre65)
        res = energetics.evaluate_monitors(rows, pre65, 5.0, 1.0, 1.0)
        assert all(m.verdict for m in res if m.monitor_id == "gronwall")

    def test_budget_violation_detected(self, pre65):
        rows = self.make_rows([1.0, 1.0, 500.0], pre65)
        res = energetics.evaluate_monitors(rows, pre65, 5.0, 1.0, 1.0)
        budget = [m for m in res if m.monitor_id == "budget_energy"]
        assert not budget[-1].verdict
