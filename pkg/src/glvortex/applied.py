"""Applied current/field configuration, precomputed potentials, regimes.

Boundary data enter as truncated Fourier series in normalized arclength;
the module assembles the static potentials h0 (applied field), f1, f0
(current potentials), the gauge phase f = j_ex f1 - h_ex f0, and the forcing
field Z = j_ex grad f1 - h_ex grad f0 - h_ex perp_grad h0 shared read-only by
the stepper, the ledgers, and the reduced dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .elliptic import EllipticSolver, HelmholtzProblem
from .grid import (
    BoundaryTrace,
    DomainGrid,
    EdgeField,
    NodeField,
    boundary_arclength,
    discrete_grad,
    discrete_perp_grad,
    edges_to_nodes,
)

__all__ = ["DriveSpec", "PrecomputedFields", "RegimeInfo",
           "fourier_eval", "precompute", "classify_regime"]

MAX_FOURIER_ORDER = 16


def fourier_eval(coeffs, s):
    """Evaluate [a0, a1c, a1s, a2c, a2s, ...] at normalized arclength s."""
    s = np.asarray(s, dtype=float)
    out = np.full_like(s, float(coeffs[0]) if len(coeffs) else 0.0)
    for k in range(1, (len(coeffs) + 1) // 2 + 1):
        ic, is_ = 2 * k - 1, 2 * k
        if ic < len(coeffs):
            out = out + coeffs[ic] * np.cos(2 * np.pi * k * s)
        if is_ < len(coeffs):
            out = out + coeffs[is_] * np.sin(2 * np.pi * k * s)
    return out


@dataclass
class DriveSpec:
    """Strengths and boundary Fourier data of the applied current and field."""

    j_ex: float = 0.0
    h_ex: float = 0.0
    J_nu: list = field(default_factory=list)   # J . nu coefficients
    I_nu: list = field(default_factory=list)   # I . nu coefficients
    H: list = None                              # boundary trace of H

    def __post_init__(self):
        if self.j_ex < 0 or self.h_ex < 0:
            raise ValueError("field strengths must be nonnegative")
        for name, c in (("J_nu", self.J_nu), ("I_nu", self.I_nu),
                        ("H", self.H if self.H is not None else [])):
            if len(c) > 2 * MAX_FOURIER_ORDER + 1:
                raise ValueError(f"{name}: Fourier order exceeds {MAX_FOURIER_ORDER}")
            if not np.all(np.isfinite(np.asarray(c, dtype=float))):
                raise ValueError(f"{name}: non-finite coefficient")
        if self.H is None:
            if any(abs(c) > 0 for c in self.I_nu):
                raise ValueError("H must be given when I is nonzero")
            self.H = [1.0]  # no exterior normal current: uniform applied field


@dataclass
class RegimeInfo:
    regime: int
    k_ex: float
    alpha: float
    beta: float
    lam: float          # acceleration scale |log eps| / k_ex
    validity_warning: str | None = None


def classify_regime(j_ex, h_ex, epsilon, override=None) -> RegimeInfo:
    """Classify the drive strengths into one of the four asymptotic regimes.

    The regimes are asymptotic separations with no finite-epsilon threshold,
    so `override` lets a run declare its intended regime; `auto` uses the
    strict orderings of the strengths.
    """
    if j_ex < 0 or h_ex < 0:
        raise ValueError("field strengths must be nonnegative")
    if not (0.0 < epsilon < 0.5):
        raise ValueError("epsilon must lie in (0, 0.5)")
    k_ex = max(j_ex, h_ex)
    if k_ex == 0:
        raise ValueError("at least one field strength must be positive")
    if override in (None, "auto"):
        if j_ex == 1.0 and h_ex == 1.0:
            regime = 1
        elif h_ex < j_ex:
            regime = 2
        elif j_ex < h_ex:
            regime = 3
        else:
            regime = 4
    else:
        regime = int(override)
        if regime not in (1, 2, 3, 4):
            raise ValueError(f"regime override must be 1..4, got {override}")
    ale = abs(math.log(epsilon))
    warning = None
    if k_ex >= ale ** (1.0 / 9.0):
        warning = (f"k_ex={k_ex:g} >= |log eps|^(1/9)={ale ** (1 / 9):.4g}: "
                   "outside the validity range of the reduced laws")
    return RegimeInfo(regime=regime, k_ex=k_ex, alpha=j_ex / k_ex,
                      beta=h_ex / k_ex, lam=ale / k_ex,
                      validity_warning=warning)


@dataclass
class PrecomputedFields:
    """Static potentials and forcing for one (grid, drive) pair."""

    grid: DomainGrid
    drive: DriveSpec
    h0: NodeField
    f0: NodeField
    f1: NodeField
    f: NodeField
    Z: EdgeField
    grad_h0: EdgeField
    perp_f0: EdgeField
    perp_f1: EdgeField
    sup_Z: float
    zn2: np.ndarray          # |Z|^2 collocated at nodes (node shape)
    _splines: dict = field(default_factory=dict, repr=False)

    def spline(self, name):
        """Bicubic spline of one of the scalar potentials (h0, f0, f1, f)."""
        if name not in self._splines:
            g = self.grid
            x = np.arange(g.Nx) * g.h
            y = np.arange(g.Ny) * g.h
            self._splines[name] = RectBivariateSpline(
                x, y, getattr(self, name).values)
        return self._splines[name]

    def grad_at(self, name, x, y):
        s = self.spline(name)
        return np.array([float(s(x, y, dx=1, grid=False)),
                         float(s(x, y, dy=1, grid=False))])

    def f1_at(self, x, y):
        return float(self.spline("f1")(x, y, grid=False))


def _node_z2(Z: EdgeField) -> np.ndarray:
    zxn, zyn = edges_to_nodes(EdgeField(Z.grid, Z.x**2, Z.y**2))
    return zxn + zyn


def precompute(drive: DriveSpec, grid: DomainGrid,
               tolerance: float = 1e-10,
               solver: EllipticSolver | None = None) -> PrecomputedFields:
    if solver is None:
        solver = EllipticSolver(grid)
    s = boundary_arclength(grid)
    zero_rhs = NodeField(grid, np.zeros(grid.shape_nodes))

    h0 = solver.solve(HelmholtzProblem(
        zero_rhs, "dirichlet",
        BoundaryTrace(grid, fourier_eval(drive.H, s)), tolerance))
    f1 = solver.solve(HelmholtzProblem(
        zero_rhs, "neumann",
        BoundaryTrace(grid, fourier_eval(drive.J_nu, s)), tolerance))
    f0 = solver.solve(HelmholtzProblem(
        zero_rhs, "neumann",
        BoundaryTrace(grid, fourier_eval(drive.I_nu, s)), tolerance))

    f = NodeField(grid, drive.j_ex * f1.values - drive.h_ex * f0.values)
    g1 = discrete_grad(f1)
    g0 = discrete_grad(f0)
    p0 = discrete_perp_grad(h0)
    Z = EdgeField(grid,
                  drive.j_ex * g1.x - drive.h_ex * g0.x - drive.h_ex * p0.x,
                  drive.j_ex * g1.y - drive.h_ex * g0.y - drive.h_ex * p0.y)
    sup_Z = float(max(np.max(np.abs(Z.x)), np.max(np.abs(Z.y))))
    return PrecomputedFields(
        grid=grid, drive=drive, h0=h0, f0=f0, f1=f1, f=f, Z=Z,
        grad_h0=discrete_grad(h0), perp_f0=discrete_perp_grad(f0),
        perp_f1=discrete_perp_grad(f1), sup_Z=sup_Z, zn2=_node_z2(Z))
