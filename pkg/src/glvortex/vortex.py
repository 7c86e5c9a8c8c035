"""Gauge-invariant vorticity and velocity measures, detection, and tracking."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import (
    CellField,
    DomainGrid,
    cells_to_xedges,
    cells_to_yedges,
    discrete_curl,
    discrete_grad,
    EdgeField,
    NodeField,
)
from .state import State, link_phases, supercurrent

log = logging.getLogger(__name__)

WINDING_THRESHOLD = math.pi - 1e-9


@dataclass
class VorticityField:
    mu: CellField
    total_winding: float
    # product-form companion curl(iv, grad_B v) + curl B: not quantized, but
    # discretely compatible with the velocity measure (continuity pairing)
    mu_product: CellField = None


@dataclass
class VelocityField:
    """Cell-collocated velocity pair at the midpoint of two snapshots."""

    v1: CellField
    v2: CellField
    t_mid: float


@dataclass
class Detection:
    x: float
    y: float
    degree: int
    winding: float
    ambiguous: bool = False


@dataclass
class VortexTrack:
    vortex_id: int
    degree: int
    samples: list = field(default_factory=list)  # (t, x, y)
    status: str = "active"  # active | collided | exited


def plaquette_winding(state: State) -> np.ndarray:
    """Wrapped gauge-invariant phase circulation per plaquette."""
    v = state.v
    ux, uy = link_phases(state)
    px = np.angle(np.conj(v[:-1, :]) * ux * v[1:, :])
    py = np.angle(np.conj(v[:, :-1]) * uy * v[:, 1:])
    return px[:, :-1] + py[1:, :] - px[:, 1:] - py[:-1, :]


def vorticity(state: State) -> VorticityField:
    """mu = (plaquette winding)/h^2 + curl B; its total mass is quantized."""
    g = state.grid
    w = plaquette_winding(state)
    curlb = discrete_curl(state.B).values
    mu = w / g.h**2 + curlb
    total = float(np.sum(w) + g.h**2 * np.sum(curlb))
    jx, jy = supercurrent(state)
    mu_prod = discrete_curl(EdgeField(g, jx, jy)).values + curlb
    return VorticityField(CellField(g, mu), total, CellField(g, mu_prod))


def _edge_avg_with(vmid, other, h, ux, uy):
    """Covariant edge averages of `other` paired against vmid's links."""
    ax = 0.5 * (other[:-1, :] + ux * other[1:, :])
    ay = 0.5 * (other[:, :-1] + uy * other[:, 1:])
    return ax, ay


def velocity(prev: State, next_: State, dt: float | None = None) -> VelocityField:
    """Space-time Jacobian velocity from two consecutive snapshots.

    V = grad (iv, dv/dt) - d/dt (iv, grad_B v) - dB/dt, evaluated midpoint in
    time with gauge-invariant edge pairings, then averaged to cell centers.
    """
    if dt is None:
        dt = next_.t - prev.t
    if dt <= 0:
        raise ValueError("snapshots must be time-ordered with positive dt")
    g = prev.grid
    dvdt = (next_.v - prev.v) / dt
    vmid = 0.5 * (prev.v + next_.v)

    q = (np.conj(vmid) * dvdt).imag  # (i v, dt v) at nodes
    term1 = discrete_grad(NodeField(g, q))

    jpx, jpy = supercurrent(prev)
    jnx, jny = supercurrent(next_)
    dpx = (jnx - jpx) / dt
    dpy = (jny - jpy) / dt

    dbx = (next_.bx - prev.bx) / dt
    dby = (next_.by - prev.by) / dt

    vx_e = term1.x - dpx - dbx
    vy_e = term1.y - dpy - dby
    v1 = 0.5 * (vx_e[:, :-1] + vx_e[:, 1:])
    v2 = 0.5 * (vy_e[:-1, :] + vy_e[1:, :])
    return VelocityField(CellField(g, v1), CellField(g, v2),
                         0.5 * (prev.t + next_.t))


def continuity_residual(mu_prev: VorticityField, mu_next: VorticityField,
                        V: VelocityField, dt: float) -> float:
    """L1 norm of d(mu)/dt + curl V (V interpolated back onto edges).

    Pairs the product-form vorticity with the product-form velocity: the two
    live on the same discrete complex, so the residual measures genuine
    collocation/time error instead of the O(1/h) core defect between wrapped
    angles and their sines.
    """
    if dt == 0:
        raise ValueError("dt must be nonzero")
    g = mu_prev.mu.grid
    mp = mu_prev.mu_product if mu_prev.mu_product is not None else mu_prev.mu
    mn = mu_next.mu_product if mu_next.mu_product is not None else mu_next.mu
    vx = cells_to_xedges(V.v1.values, g)
    vy = cells_to_yedges(V.v2.values, g)
    curl_v = discrete_curl(EdgeField(g, vx, vy)).values
    r = (mn.values - mp.values) / dt + curl_v
    return float(np.sum(np.abs(r)) * g.h**2)


def _refine_zero(state: State, ux, uy, ci, cj):
    """Newton search for the bilinear zero of the order parameter in cell
    (ci, cj), with the corners parallel-transported to the base corner so the
    located zero is exactly gauge invariant.

    Returns (x, y) or None if the iteration leaves the cell.
    """
    v, g = state.v, state.grid
    c00 = v[ci, cj]
    c10 = ux[ci, cj] * v[ci + 1, cj]
    c01 = uy[ci, cj] * v[ci, cj + 1]
    c11 = ux[ci, cj] * uy[ci + 1, cj] * v[ci + 1, cj + 1]
    a = c00
    b = c10 - c00
    c = c01 - c00
    d = c11 - c10 - c01 + c00
    xi, eta = 0.5, 0.5
    for _ in range(25):
        f = a + b * xi + c * eta + d * xi * eta
        fx = b + d * eta
        fy = c + d * xi
        det = fx.real * fy.imag - fx.imag * fy.real
        if abs(det) < 1e-30:
            return None
        dxi = (f.real * fy.imag - f.imag * fy.real) / det
        deta = (fx.real * f.imag - fx.imag * f.real) / det
        xi -= dxi
        eta -= deta
        if abs(dxi) + abs(deta) < 1e-12:
            break
    if -0.25 <= xi <= 1.25 and -0.25 <= eta <= 1.25:
        return ((ci + xi) * g.h, (cj + eta) * g.h)
    return None


def detect(state: State) -> list[Detection]:
    """Locate vortices: threshold plaquette winding, cluster, refine position."""
    g = state.grid
    ux, uy = link_phases(state)
    w = plaquette_winding(state)
    mask = np.abs(w) >= WINDING_THRESHOLD
    labels, nlab = ndimage.label(mask)
    out = []
    for lab in range(1, nlab + 1):
        cells = np.argwhere(labels == lab)
        winding = float(np.sum(w[labels == lab]))
        deg = int(round(winding / (2 * math.pi)))
        ambiguous = abs(winding - 2 * math.pi * round(winding / (2 * math.pi))) > 0.2
        if ambiguous:
            log.warning("ambiguous vortex cluster: step=%d label=%d winding=%.6f",
                        state.step, lab, winding)
        # position: modulus-weighted centroid over cluster corner nodes,
        # refined by the bilinear zero crossing
        nodes = set()
        for (ci, cj) in cells:
            nodes.update({(ci, cj), (ci + 1, cj), (ci, cj + 1), (ci + 1, cj + 1)})
        nodes = sorted(nodes)
        wsum = xsum = ysum = 0.0
        for (i, j) in nodes:
            wt = max(1.0 - abs(state.v[i, j]) ** 2, 0.0)
            wsum += wt
            xsum += wt * i * g.h
            ysum += wt * j * g.h
        if wsum > 0:
            pos = (xsum / wsum, ysum / wsum)
        else:
            ci, cj = cells[0]
            pos = ((ci + 0.5) * g.h, (cj + 0.5) * g.h)
        best = None
        for (ci, cj) in sorted(map(tuple, cells)):
            cand = _refine_zero(state, ux, uy, ci, cj)
            if cand is not None:
                if best is None or (math.hypot(cand[0] - pos[0], cand[1] - pos[1])
                                    < math.hypot(best[0] - pos[0], best[1] - pos[1])):
                    best = cand
        if best is not None:
            pos = best
        out.append(Detection(pos[0], pos[1], deg, winding, ambiguous))
    out.sort(key=lambda d: (d.x, d.y))
    return out


def track(frames, grid: DomainGrid, max_jump: float) -> list[VortexTrack]:
    """Greedy nearest-neighbor association of detections into tracks.

    frames: iterable of (t, [Detection, ...]) in time order. Degree is
    conserved along a track; ties within 10 percent relative cost break
    deterministically toward the lower track id (logged).
    """
    tracks: list[VortexTrack] = []
    next_id = 0
    for t, dets in frames:
        active = [tr for tr in tracks if tr.status == "active"]
        pairs = []
        for ai, tr in enumerate(active):
            _, px, py = tr.samples[-1]
            for di, det in enumerate(dets):
                if det.degree != tr.degree:
                    continue
                cost = math.hypot(det.x - px, det.y - py)
                if cost <= max_jump:
                    pairs.append((cost, tr.vortex_id, di, ai))
        pairs.sort()
        for k in range(len(pairs) - 1):
            c0, c1 = pairs[k][0], pairs[k + 1][0]
            if c0 > 0 and (c1 - c0) / max(c0, 1e-300) < 0.10 \
                    and pairs[k][2] == pairs[k + 1][2]:
                log.info("tracking tie at t=%.6g between tracks %d and %d "
                         "(costs %.3g / %.3g); keeping lower id",
                         t, pairs[k][1], pairs[k + 1][1], c0, c1)
        used_d, used_a = set(), set()
        for cost, tid, di, ai in pairs:
            if di in used_d or ai in used_a:
                continue
            used_d.add(di)
            used_a.add(ai)
            det = dets[di]
            active[ai].samples.append((t, det.x, det.y))
        for ai, tr in enumerate(active):
            if ai in used_a:
                continue
            _, px, py = tr.samples[-1]
            bd = grid.boundary_distance(px, py)
            near_other = any(
                math.hypot(px - o.samples[-1][1], py - o.samples[-1][2])
                <= 2 * max_jump
                for o in active if o is not tr)
            tr.status = "exited" if (bd <= 2 * max_jump and not near_other) \
                else "collided"
        for di, det in enumerate(dets):
            if di in used_d:
                continue
            tr = VortexTrack(next_id, det.degree, [(t, det.x, det.y)])
            next_id += 1
            tracks.append(tr)
    return tracks
