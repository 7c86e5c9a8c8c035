import math

import numpy as np
import pytest

from conftest import EPS64, ansatz_state, smooth_gauge
from glvortex import energetics, vortex
from glvortex.grid import discrete_curl, discrete_div, make_grid
from glvortex.kernels import USING_COMPILED
from glvortex.state import State
from glvortex.tdgl import (
    ConfigError,
    InitSpec,
    Stepper,
    StepperConfig,
    _ZeroForcing,
    apply_gauge,
    init_well_prepared,
    recover_physical,
    step,
)


class TestConfig:
    def test_cfl_rejection(self, grid65):
        cfg = StepperConfig(epsilon=EPS64, dt=1.0)
        with pytest.raises(ConfigError):
            cfg.resolve_dt(grid65)

    def test_default_dt(self, grid65):
        cfg = StepperConfig(epsilon=EPS64)
        expected = 0.2 * min(EPS64**2, grid65.h**2 / 4)
        assert cfg.resolve_dt(grid65) == pytest.approx(expected, rel=1e-15)

    def test_bad_scheme(self):
        with pytest.raises(ConfigError):
            StepperConfig(epsilon=0.1, scheme="leapfrog")

    def test_bad_dt_factor(self):
        with pytest.raises(ConfigError):
            StepperConfig(epsilon=0.1, dt_factor=0.9)


class TestFixedPoint:
    def test_vacuum_is_fixed(self, grid65):
        g = grid65
        st = State(g, np.ones(g.shape_nodes, complex),
                   np.zeros(g.shape_xedges), np.zeros(g.shape_yedges))
        cfg = StepperConfig(epsilon=EPS64)
        stepper = Stepper(g, _ZeroForcing(g), cfg)
        s2 = st.copy()
        stepper.step_inplace(s2)
        assert np.max(np.abs(s2.v - st.v)) < 1e-12
        assert np.max(np.abs(s2.bx)) < 1e-12
        assert np.max(np.abs(s2.by)) < 1e-12


class TestInit:
    def test_single_vortex_winding(self, single_vortex65):
        vort = vortex.vorticity(single_vortex65)
        assert vort.total_winding / (2 * math.pi) == pytest.approx(1.0, abs=1e-8)
        assert np.min(np.abs(single_vortex65.v)) < 0.1

    def test_coulomb_gauge(self, single_vortex65):
        d = discrete_div(single_vortex65.B).values
        assert np.max(np.abs(d)) < 1e-10

    def test_vacuum_init(self, grid65, solver65, pre65, cfg65):
        st = init_well_prepared(InitSpec(vortices=[], relax_steps=20),
                                pre65, grid65, cfg65, solver65)
        assert np.max(np.abs(np.abs(st.v) - 1.0)) < 1e-6
        # modified energy dominated by the (1/2)|Z|^2 term
        ft = energetics.modified_energy(st, pre65, EPS64)
        assert ft == pytest.approx(energetics.z_l2_half(pre65), rel=0.05)

    def test_rejects_close_pair(self, grid65, solver65, pre65, cfg65):
        spec = InitSpec(vortices=[(0.5, 0.5, 1), (0.5 + 3 * EPS64, 0.5, -1)])
        with pytest.raises(ConfigError):
            init_well_prepared(spec, pre65, grid65, cfg65, solver65)

    def test_rejects_boundary_vortex(self, grid65, solver65, pre65, cfg65):
        spec = InitSpec(vortices=[(2 * EPS64, 0.5, 1)])
        with pytest.raises(ConfigError):
            init_well_prepared(spec, pre65, grid65, cfg65, solver65)

    def test_rejects_coarse_grid(self, pre65, cfg65, solver65):
        g = make_grid(1, 1, 17, 17)
        spec = InitSpec(vortices=[(0.5, 0.5, 1)])
        with pytest.raises(ConfigError):
            init_well_prepared(spec, pre65, g, StepperConfig(epsilon=0.05),
                               solver65)


class TestGauge:
    def test_constant_phase(self, single_vortex65, pre65):
        st = single_vortex65
        g2 = apply_gauge(st, np.full(st.grid.shape_nodes, 1.234))
        assert np.max(np.abs(g2.bx - st.bx)) < 1e-12
        assert np.max(np.abs(g2.v - st.v * np.exp(1.234j))) < 1e-12

    def test_invariance_of_observables(self, single_vortex65, pre65):
        st = single_vortex65
        F = energetics.free_energy(st, EPS64)
        Ft = energetics.modified_energy(st, pre65, EPS64)
        mu = vortex.vorticity(st)
        hp = discrete_curl(st.B).values
        for seed in range(5):
            xi = smooth_gauge(st.grid, seed)
            sg = apply_gauge(st, xi)
            assert abs(energetics.free_energy(sg, EPS64) - F) <= 1e-11 * F
            assert abs(energetics.modified_energy(sg, pre65, EPS64) - Ft) \
                <= 1e-11 * Ft
            dmu = np.max(np.abs(vortex.vorticity(sg).mu.values - mu.mu.values))
            assert dmu <= 1e-9 / st.grid.h**2 * 1e-2
            assert np.max(np.abs(discrete_curl(sg.B).values - hp)) <= 1e-9

    def test_round_trip(self, single_vortex65):
        st = single_vortex65
        xi = smooth_gauge(st.grid, 42)
        back = apply_gauge(apply_gauge(st, xi), -xi)
        assert np.max(np.abs(back.v - st.v)) < 1e-12
        assert np.max(np.abs(back.bx - st.bx)) < 1e-12


class TestRecover:
    def test_identity_without_drive(self, grid65, solver65):
        from glvortex.applied import DriveSpec, precompute
        pre0 = precompute(DriveSpec(j_ex=1.0, h_ex=0.0, J_nu=[0.0]),
                          grid65, solver=solver65)
        st = ansatz_state(grid65, [(0.5, 0.5, 1)], EPS64)
        u, A = recover_physical(st, pre0)
        assert np.max(np.abs(u.values - st.v)) < 1e-12
        assert np.max(np.abs(A.x - st.bx)) < 1e-12

    def test_modulus_preserved(self, single_vortex65, pre65):
        u, _ = recover_physical(single_vortex65, pre65)
        assert np.max(np.abs(np.abs(u.values) - np.abs(single_vortex65.v))) \
            < 1e-12

    def test_curl_relation(self, single_vortex65, pre65):
        # curl A = h' + h_ex * curl(perp_grad h0), and the latter approximates
        # the screened field h0 on interior cells to second order (the
        # boundary ring carries the one-sided closure of perp_grad)
        from glvortex.grid import nodes_to_cells
        st = single_vortex65
        u, A = recover_physical(st, pre65)
        curl_a = discrete_curl(A).values
        hp = discrete_curl(st.B).values
        h0c = nodes_to_cells(pre65.h0.values)
        err = np.abs(curl_a - hp - pre65.drive.h_ex * h0c)[2:-2, 2:-2]
        assert np.max(err) < 100 * st.grid.h**2


class TestDissipation:
    def test_current_free_decrease(self, grid65, single_vortex65):
        st = single_vortex65.copy()
        cfg = StepperConfig(epsilon=EPS64)
        zero = _ZeroForcing(grid65)
        stepper = Stepper(grid65, zero, cfg)
        prev_f = energetics.free_energy(st, EPS64)
        for _ in range(50):
            stepper.step_inplace(st)
            f = energetics.free_energy(st, EPS64)
            assert f <= prev_f * (1 + 1e-12)
            prev_f = f

    def test_modulus_bound(self, grid65, pre65, single_vortex65):
        st = single_vortex65.copy()
        cfg = StepperConfig(epsilon=EPS64)
        stepper = Stepper(grid65, pre65, cfg)
        bound = 1 + 10 * grid65.h**2
        for _ in range(100):
            stepper.step_inplace(st)
            assert np.max(np.abs(st.v)) <= bound


class TestIdentity:
    def test_static_residual(self, grid65, pre65):
        g = grid65
        st = State(g, np.ones(g.shape_nodes, complex),
                   np.zeros(g.shape_xedges), np.zeros(g.shape_yedges))
        s2 = st.copy()
        s2.t = 1e-3
        terms = energetics.energy_identity_residual(st, s2, pre65, EPS64)
        assert terms.residual < 1e-12

    def test_dt_halving(self, grid65, pre65, single_vortex65):
        st = single_vortex65
        cfg = StepperConfig(epsilon=EPS64)
        base_dt = cfg.resolve_dt(grid65)
        residuals = {}
        for fac in (1.0, 0.5):
            c = StepperConfig(epsilon=EPS64, dt=base_dt * fac)
            nxt = step(st, pre65, c)
            residuals[fac] = energetics.energy_identity_residual(
                st, nxt, pre65, EPS64).residual
        assert residuals[1.0] / residuals[0.5] >= 1.7

    def test_relative_size(self, grid65, pre65, single_vortex65):
        st = single_vortex65.copy()
        stepper = Stepper(grid65, pre65, StepperConfig(epsilon=EPS64))
        for _ in range(20):
            prev = st.copy()
            stepper.step_inplace(st)
            terms = energetics.energy_identity_residual(prev, st, pre65, EPS64)
            assert terms.residual <= 0.05 * (abs(terms.dissipation)
                                             + abs(terms.interaction) + 1e-6)


class TestGronwall:
    def test_envelope(self, grid65, pre65, single_vortex65):
        st = single_vortex65.copy()
        stepper = Stepper(grid65, pre65, StepperConfig(epsilon=EPS64))
        f0 = energetics.modified_energy(st, pre65, EPS64)
        for _ in range(200):
            stepper.step_inplace(st)
        ft = energetics.modified_energy(st, pre65, EPS64)
        env = math.exp(4 * pre65.sup_Z**2 * st.t) * f0
        assert ft <= env * 1.01


class TestSemiImplicit:
    def test_matches_explicit_short_run(self, grid65, pre65, single_vortex65):
        base = StepperConfig(epsilon=EPS64)
        dt = base.resolve_dt(grid65)
        se = single_vortex65.copy()
        ss = single_vortex65.copy()
        st_e = Stepper(grid65, pre65, StepperConfig(epsilon=EPS64, dt=dt))
        st_s = Stepper(grid65, pre65,
                       StepperConfig(epsilon=EPS64, dt=dt, scheme="semi-implicit"))
        for _ in range(100):
            st_e.step_inplace(se)
            st_s.step_inplace(ss)
        assert np.max(np.abs(se.v - ss.v)) < 1e-3
        fe = energetics.free_energy(se, EPS64)
        fs = energetics.free_energy(ss, EPS64)
        assert abs(fe - fs) / fe < 1e-4

    def test_larger_dt_stable(self, grid65, pre65, single_vortex65):
        # semi-implicit tolerates dt far above the explicit diffusion limit
        dt_exp = StepperConfig(epsilon=EPS64).resolve_dt(grid65)
        cfg = StepperConfig(epsilon=EPS64, dt=20 * dt_exp,
                            scheme="semi-implicit")
        st = single_vortex65.copy()
        stepper = Stepper(grid65, pre65, cfg)
        for _ in range(50):
            stepper.step_inplace(st)
        assert st.is_finite()
        assert np.max(np.abs(st.v)) < 1.2


@pytest.mark.skipif(not USING_COMPILED, reason="compiled kernel not built")
class TestKernelConsistency:
    def test_compiled_matches_fallback(self, grid65, pre65, single_vortex65):
        cfg = StepperConfig(epsilon=EPS64)
        a = single_vortex65.copy()
        b = single_vortex65.copy()
        sc = Stepper(grid65, pre65, cfg, kernel="compiled")
        sf = Stepper(grid65, pre65, cfg, kernel="fallback")
        for _ in range(100):
            stats_c = sc.step_inplace(a)
            stats_f = sf.step_inplace(b)
        assert np.max(np.abs(a.v - b.v)) < 1e-13
        assert np.max(np.abs(a.bx - b.bx)) < 1e-13
        assert np.max(np.abs(a.by - b.by)) < 1e-13
        for x, y in zip(stats_c, stats_f):
            assert x == pytest.approx(y, rel=1e-10, abs=1e-12)
