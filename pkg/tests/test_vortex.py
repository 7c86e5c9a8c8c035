import math

import numpy as np
import pytest

from conftest import EPS64, ansatz_state, smooth_gauge
from glvortex import vortex
from glvortex.grid import discrete_grad, make_grid, NodeField
from glvortex.state import State
from glvortex.tdgl import Stepper, StepperConfig, apply_gauge


class TestVorticity:
    def test_single_ansatz(self, grid65):
        st = ansatz_state(grid65, [(0.4, 0.6, 1)], EPS64)
        vf = vortex.vorticity(st)
        assert vf.total_winding == pytest.approx(2 * math.pi, abs=1e-8)
        # winding concentrated in few plaquettes
        w = vortex.plaquette_winding(st)
        assert np.sum(np.abs(w) >= math.pi) <= 4

    def test_gradient_potential_no_winding(self, grid65):
        # v = 1 with a pure-gradient potential: wrapped phases cancel exactly
        g = grid65
        X, Y = g.node_coords()
        xi = 0.8 * np.sin(np.pi * X) * Y
        gr = discrete_grad(NodeField(g, xi))
        st = State(g, np.ones(g.shape_nodes, complex), gr.x, gr.y)
        vf = vortex.vorticity(st)
        assert np.max(np.abs(vf.mu.values)) < 1e-10
        assert abs(vf.total_winding) < 1e-10

    def test_dipole(self, grid65):
        st = ansatz_state(grid65, [(0.35, 0.5, 1), (0.65, 0.5, -1)], EPS64)
        vf = vortex.vorticity(st)
        assert vf.total_winding == pytest.approx(0.0, abs=1e-8)
        w = vortex.plaquette_winding(st)
        assert np.min(w) < -math.pi / 2
        assert np.max(w) > math.pi / 2

    def test_quantization_random_states(self, grid65):
        rng = np.random.default_rng(7)
        g = grid65
        for _ in range(5):
            v = (rng.standard_normal(g.shape_nodes)
                 + 1j * rng.standard_normal(g.shape_nodes))
            bx = rng.standard_normal(g.shape_xedges)
            by = rng.standard_normal(g.shape_yedges)
            vf = vortex.vorticity(State(g, v, bx, by))
            q = vf.total_winding / (2 * math.pi)
            assert abs(q - round(q)) < 1e-8


class TestDetect:
    def test_single(self, grid65):
        st = ansatz_state(grid65, [(0.4, 0.6, 1)], EPS64)
        dets = vortex.detect(st)
        assert len(dets) == 1
        assert dets[0].degree == 1
        assert math.hypot(dets[0].x - 0.4, dets[0].y - 0.6) <= grid65.h

    def test_vacuum_empty(self, grid65):
        g = grid65
        st = State(g, np.ones(g.shape_nodes, complex),
                   np.zeros(g.shape_xedges), np.zeros(g.shape_yedges))
        assert vortex.detect(st) == []

    def test_same_sign_pair(self, grid65):
        st = ansatz_state(grid65, [(0.35, 0.5, 1), (0.65, 0.5, 1)], EPS64)
        dets = vortex.detect(st)
        assert len(dets) == 2
        assert all(d.degree == 1 for d in dets)
        found = sorted((d.x, d.y) for d in dets)
        assert math.hypot(found[0][0] - 0.35, found[0][1] - 0.5) <= grid65.h
        assert math.hypot(found[1][0] - 0.65, found[1][1] - 0.5) <= grid65.h

    def test_detection_gauge_invariant(self, grid65):
        st = ansatz_state(grid65, [(0.42, 0.57, 1)], EPS64)
        d0 = vortex.detect(st)[0]
        d1 = vortex.detect(apply_gauge(st, smooth_gauge(grid65, 3)))[0]
        assert math.hypot(d0.x - d1.x, d0.y - d1.y) <= 1e-9


class TestVelocity:
    def test_static_zero(self, grid65, pre65, single_vortex65):
        s2 = single_vortex65.copy()
        s2.t += 1e-3
        V = vortex.velocity(single_vortex65, s2)
        assert np.max(np.abs(V.v1.values)) == 0
        assert np.max(np.abs(V.v2.values)) == 0

    def test_translated_ansatz(self):
        g = make_grid(1, 1, 129, 129)
        eps = 1 / 32
        dt, delta = 1e-3, 0.01
        s1 = ansatz_state(g, [(0.5, 0.5, 1)], eps)
        s2 = ansatz_state(g, [(0.5 + delta, 0.5, 1)], eps)
        s2.t = dt
        V = vortex.velocity(s1, s2)
        ix = np.sum(V.v1.values) * g.h**2
        iy = np.sum(V.v2.values) * g.h**2
        # 2 pi (a-dot)-perp with a-dot = (delta/dt, 0)
        assert iy == pytest.approx(2 * math.pi * delta / dt, rel=0.10)
        assert abs(ix) <= 0.10 * abs(iy)

    def test_gauge_invariance(self, grid65, single_vortex65):
        st = single_vortex65
        s2 = st.copy()
        s2.v = s2.v * np.exp(0.02j)  # small physical change
        s2.t += 1e-3
        V0 = vortex.velocity(st, s2)
        xi = smooth_gauge(grid65, 11)
        V1 = vortex.velocity(apply_gauge(st, xi), apply_gauge(s2, xi))
        assert np.max(np.abs(V1.v1.values - V0.v1.values)) < 1e-10
        assert np.max(np.abs(V1.v2.values - V0.v2.values)) < 1e-10

    def test_rejects_bad_order(self, single_vortex65):
        with pytest.raises(ValueError):
            vortex.velocity(single_vortex65, single_vortex65.copy())


class TestContinuity:
    def test_static(self, grid65, single_vortex65):
        s2 = single_vortex65.copy()
        s2.t += 1e-3
        mu = vortex.vorticity(single_vortex65)
        V = vortex.velocity(single_vortex65, s2)
        r = vortex.continuity_residual(mu, vortex.vorticity(s2), V, 1e-3)
        assert r == 0.0

    def test_pure_gauge(self, grid65, single_vortex65):
        st = single_vortex65
        xi = smooth_gauge(grid65, 5)
        s2 = apply_gauge(st, xi)
        s2.t = st.t + 1e-3
        sg1 = apply_gauge(st, xi)  # same gauge both snapshots
        sg1.t = st.t
        V = vortex.velocity(sg1, s2)
        r = vortex.continuity_residual(vortex.vorticity(sg1),
                                       vortex.vorticity(s2), V, 1e-3)
        assert r <= 1e-9

    def test_refinement_shrinkage(self):
        from glvortex.applied import DriveSpec, precompute
        from glvortex.elliptic import EllipticSolver
        from glvortex.tdgl import InitSpec, init_well_prepared

        eps = 1 / 16

        def residual(n, nsteps, relax):
            g = make_grid(1, 1, n, n)
            sol = EllipticSolver(g)
            pre = precompute(DriveSpec(j_ex=2.0, J_nu=[0.0, 1.0]), g, solver=sol)
            cfg = StepperConfig(epsilon=eps)
            st = init_well_prepared(InitSpec(vortices=[(0.4, 0.5, 1)],
                                             relax_steps=relax),
                                    pre, g, cfg, sol)
            stepper = Stepper(g, pre, cfg)
            prev = None
            for k in range(nsteps):
                if k == nsteps - 1:
                    prev = st.copy()
                stepper.step_inplace(st)
            V = vortex.velocity(prev, st)
            return vortex.continuity_residual(vortex.vorticity(prev),
                                              vortex.vorticity(st), V,
                                              st.t - prev.t)

        r1 = residual(65, 200, 200)
        r2 = residual(129, 800, 800)
        assert r1 / r2 >= 1.7


class TestTracking:
    @staticmethod
    def det(x, y, d=1):
        return vortex.Detection(x, y, d, 2 * math.pi * d)

    def test_stationary(self, grid65):
        frames = [(0.01 * k, [self.det(0.5, 0.5)]) for k in range(100)]
        tracks = vortex.track(frames, grid65, max_jump=0.1)
        assert len(tracks) == 1
        assert len(tracks[0].samples) == 100
        assert tracks[0].status == "active"

    def test_degree_conservation(self, grid65):
        # a -1 detection never continues a +1 track
        frames = [(0.0, [self.det(0.5, 0.5, 1)]),
                  (0.1, [self.det(0.5, 0.5, -1)])]
        tracks = vortex.track(frames, grid65, max_jump=0.2)
        assert len(tracks) == 2
        assert sorted(t.degree for t in tracks) == [-1, 1]

    def test_collision_status(self, grid65):
        frames = []
        for k in range(10):
            x = 0.4 + 0.01 * k
            frames.append((0.1 * k, [self.det(x, 0.5, 1),
                                     self.det(1.0 - x, 0.5, -1)]))
        frames.append((1.0, []))  # both annihilate
        tracks = vortex.track(frames, grid65, max_jump=0.1)
        assert len(tracks) == 2
        assert all(t.status == "collided" for t in tracks)

    def test_exit_status(self, grid65):
        frames = [(0.1 * k, [self.det(0.5, 0.4 - 0.04 * k, 1)])
                  for k in range(9)]
        frames.append((1.0, []))
        tracks = vortex.track(frames, grid65, max_jump=0.08)
        assert len(tracks) == 1
        assert tracks[0].status == "exited"

    def test_determinism(self, grid65):
        rng = np.random.default_rng(0)
        frames = []
        for k in range(20):
            dets = [self.det(0.3 + 0.001 * rng.integers(0, 9), 0.5, 1),
                    self.det(0.7 - 0.001 * rng.integers(0, 9), 0.5, 1)]
            frames.append((0.1 * k, dets))
        t1 = vortex.track(frames, grid65, max_jump=0.1)
        t2 = vortex.track(frames, grid65, max_jump=0.1)
        assert [(t.vortex_id, t.samples) for t in t1] \
            == [(t.vortex_id, t.samples) for t in t2]
