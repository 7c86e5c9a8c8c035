"""Step-kernel selection: compiled extension when present, numpy fallback otherwise.

Set GLVORTEX_FORCE_FALLBACK=1 to force the numpy path (used by the kernel
consistency tests and the benchmark).
"""

from __future__ import annotations

import os

import numpy as np

from . import _step_numpy

try:
    from . import _step_core
except ImportError:  # pragma: no cover - build-dependent
    _step_core = None

USING_COMPILED = (_step_core is not None
                  and not os.environ.get("GLVORTEX_FORCE_FALLBACK"))


def get_step_fn(force: str | None = None):
    """Return the explicit-step callable. force in {None,'compiled','fallback'}."""
    if force == "fallback":
        return _step_numpy.step_explicit
    if force == "compiled":
        if _step_core is None:
            raise RuntimeError("compiled step kernel not built")
        return _step_core.step_explicit
    return _step_core.step_explicit if USING_COMPILED else _step_numpy.step_explicit


class StepWorkspace:
    """Preallocated buffers and quadrature weights for repeated stepping."""

    def __init__(self, grid):
        self.grid = grid
        nn = grid.shape_nodes
        self.wn = grid.node_weights()
        self.wex = grid.xedge_weights()
        self.wey = grid.yedge_weights()
        self.vout = np.zeros(nn, dtype=np.complex128)
        self.bxout = np.zeros(grid.shape_xedges)
        self.byout = np.zeros(grid.shape_yedges)
        self.ux = np.zeros(grid.shape_xedges, dtype=np.complex128)
        self.uy = np.zeros(grid.shape_yedges, dtype=np.complex128)
        self.hp = np.zeros(grid.shape_cells)
        self._phx = np.zeros(grid.shape_xedges)
        self._phy = np.zeros(grid.shape_yedges)

    def fill_links(self, bx, by, h):
        """Write the link phases exp(-i h B) into ux, uy (vectorized)."""
        np.multiply(bx, -h, out=self._phx)
        np.cos(self._phx, out=self.ux.real)
        np.sin(self._phx, out=self.ux.imag)
        np.multiply(by, -h, out=self._phy)
        np.cos(self._phy, out=self.uy.real)
        np.sin(self._phy, out=self.uy.imag)
