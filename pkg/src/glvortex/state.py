"""Evolving unknown of the simulator: complex order parameter + edge potential."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DomainGrid, EdgeField, NodeField


@dataclass
class State:
    grid: DomainGrid
    v: np.ndarray        # complex, node shape
    bx: np.ndarray       # x-edge shape
    by: np.ndarray       # y-edge shape
    t: float = 0.0
    step: int = 0

    def __post_init__(self):
        self.v = np.ascontiguousarray(self.v, dtype=np.complex128)
        self.bx = np.ascontiguousarray(self.bx, dtype=np.float64)
        self.by = np.ascontiguousarray(self.by, dtype=np.float64)
        if self.v.shape != self.grid.shape_nodes:
            raise ValueError("v has wrong shape")
        if self.bx.shape != self.grid.shape_xedges:
            raise ValueError("bx has wrong shape")
        if self.by.shape != self.grid.shape_yedges:
            raise ValueError("by has wrong shape")

    @property
    def B(self) -> EdgeField:
        return EdgeField(self.grid, self.bx, self.by)

    @property
    def v_field(self) -> NodeField:
        return NodeField(self.grid, self.v)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.bx))
                    and np.all(np.isfinite(self.by)))

    def copy(self) -> "State":
        return State(self.grid, self.v.copy(), self.bx.copy(), self.by.copy(),
                     self.t, self.step)


def link_phases(state: State):
    """Edge phase factors exp(-i h B) for covariant differences."""
    h = state.grid.h
    return np.exp(-1j * h * state.bx), np.exp(-1j * h * state.by)


def covariant_diffs(state: State):
    """Forward covariant differences (D_x, D_y) on edges, divided by h."""
    v, h = state.v, state.grid.h
    ux, uy = link_phases(state)
    dx = (ux * v[1:, :] - v[:-1, :]) / h
    dy = (uy * v[:, 1:] - v[:, :-1]) / h
    return dx, dy


def supercurrent(state: State):
    """Gauge-invariant (iv, grad_B v) collocated on edges."""
    v, h = state.v, state.grid.h
    ux, uy = link_phases(state)
    jx = (np.conj(v[:-1, :]) * ux * v[1:, :]).imag / h
    jy = (np.conj(v[:, :-1]) * uy * v[:, 1:]).imag / h
    return jx, jy
