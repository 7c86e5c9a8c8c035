"""Run configuration: JSON file parsing, defaulting, and invariant checks.

Every violated invariant is reported with its key path; duplicate keys are
always rejected, unknown keys only under strict mode.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .grid import make_grid

__all__ = ["RunConfig", "ConfigRejection", "parse_config"]


class ConfigRejection(ValueError):
    pass


_SCHEMA = {
    "grid": {"Lx", "Ly", "nx", "ny"},
    "gl": {"epsilon"},
    "drive": {"j_ex", "h_ex", "J_nu", "I_nu", "H", "regime_override"},
    "init": {"vortices", "relax_steps", "C0", "sigma_star"},
    "time": {"T", "dt_factor", "accelerated", "stride", "scheme", "dt"},
    "compare": {"epsilon_ladder", "c_W", "T", "dtau", "stride"},
    "seed": None,
    "out_dir": None,
}


def _no_duplicates(pairs):
    seen = set()
    out = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigRejection(f"duplicate key {k!r}")
        seen.add(k)
        out[k] = v
    return out


@dataclass
class RunConfig:
    Lx: float = 1.0
    Ly: float = 1.0
    nx: int = 65
    ny: int = 65
    epsilon: float = 0.05
    j_ex: float = 0.0
    h_ex: float = 0.0
    J_nu: list = field(default_factory=list)
    I_nu: list = field(default_factory=list)
    H: list = None
    regime_override: str = "auto"
    vortices: list = field(default_factory=list)
    relax_steps: int = 200
    C0: float = 5.0
    sigma_star: float = 0.1
    T: float = 0.0
    dt: float = None
    dt_factor: float = 0.2
    accelerated: bool = False
    stride: int = 50
    scheme: str = "explicit-euler"
    epsilon_ladder: list = field(default_factory=list)
    c_W: str = "auto"
    compare_T: float = 0.3
    dtau: float = 1e-4
    compare_stride: int = 10
    seed: int = 0
    out_dir: str = "out"

    def grid(self):
        return make_grid(self.Lx, self.Ly, self.nx, self.ny)

    def drive_spec(self):
        from .applied import DriveSpec
        return DriveSpec(j_ex=self.j_ex, h_ex=self.h_ex, J_nu=list(self.J_nu),
                         I_nu=list(self.I_nu),
                         H=None if self.H is None else list(self.H))

    def stepper_config(self):
        from .tdgl import StepperConfig
        return StepperConfig(epsilon=self.epsilon, dt=self.dt,
                             scheme=self.scheme, dt_factor=self.dt_factor,
                             stride=self.stride)

    def ladder_grid(self, eps: float):
        """Grid with h = min(h_main-scale, eps/4) for one ladder member."""
        nx = int(math.ceil(self.Lx / (eps / 4))) + 1
        ny = int(math.ceil(self.Ly / (eps / 4))) + 1
        # square cells: pick the finer implied spacing for both axes
        h = min(self.Lx / (nx - 1), self.Ly / (ny - 1))
        nx = int(round(self.Lx / h)) + 1
        ny = int(round(self.Ly / h)) + 1
        return make_grid(self.Lx, self.Ly, nx, ny)


def _validate(cfg: RunConfig):
    errs = []
    g = None
    try:
        g = cfg.grid()
    except Exception as e:
        errs.append(f"grid: {e}")
    if cfg.epsilon <= 0 or cfg.epsilon >= 0.5:
        errs.append("gl.epsilon: must lie in (0, 0.5)")
    if g is not None and cfg.epsilon > 0 and g.h > cfg.epsilon / 4 + 1e-12:
        errs.append(f"gl.epsilon/grid.nx: core resolution h <= eps/4 violated "
                    f"(h={g.h:g}, eps/4={cfg.epsilon / 4:g})")
    if not (0 < cfg.dt_factor <= 0.5):
        errs.append("time.dt_factor: must lie in (0, 0.5]")
    if cfg.scheme not in ("explicit-euler", "semi-implicit"):
        errs.append(f"time.scheme: unknown scheme {cfg.scheme!r}")
    if cfg.stride < 1:
        errs.append("time.stride: must be >= 1")
    if cfg.relax_steps < 0:
        errs.append("init.relax_steps: must be >= 0")
    for k, vtx in enumerate(cfg.vortices):
        if len(vtx) != 3 or int(vtx[2]) not in (-1, 1):
            errs.append(f"init.vortices[{k}]: expected [x, y, degree +-1]")
    if len(cfg.vortices) >= 2:
        sep = min(math.hypot(a[0] - b[0], a[1] - b[1])
                  for i, a in enumerate(cfg.vortices)
                  for b in cfg.vortices[:i])
        if cfg.sigma_star >= sep:
            errs.append("init.sigma_star: must be below the minimum initial "
                        "separation")
    lad = list(cfg.epsilon_ladder)
    if lad:
        if any(e2 >= e1 for e1, e2 in zip(lad, lad[1:])):
            errs.append("compare.epsilon_ladder: must be strictly decreasing")
        for e in lad:
            if not (0 < e < 0.5):
                errs.append("compare.epsilon_ladder: entries must lie in (0, 0.5)")
    if cfg.c_W not in ("auto", "on", "off"):
        errs.append("compare.c_W: must be auto|on|off")
    if errs:
        raise ConfigRejection("; ".join(errs))
    return cfg


def config_from_dict(raw: dict, strict: bool = False) -> RunConfig:
    if strict:
        for key, sub in raw.items():
            if key not in _SCHEMA:
                raise ConfigRejection(f"unknown key {key!r}")
            allowed = _SCHEMA[key]
            if allowed is not None:
                if not isinstance(sub, dict):
                    raise ConfigRejection(f"{key}: expected a section")
                for k2 in sub:
                    if k2 not in allowed:
                        raise ConfigRejection(f"unknown key {key}.{k2!r}")
    cfg = RunConfig()
    try:
        sec = raw.get("grid", {})
        cfg.Lx = float(sec.get("Lx", cfg.Lx))
        cfg.Ly = float(sec.get("Ly", cfg.Ly))
        cfg.nx = int(sec.get("nx", cfg.nx))
        cfg.ny = int(sec.get("ny", cfg.ny))
        cfg.epsilon = float(raw.get("gl", {}).get("epsilon", cfg.epsilon))
        sec = raw.get("drive", {})
        cfg.j_ex = float(sec.get("j_ex", cfg.j_ex))
        cfg.h_ex = float(sec.get("h_ex", cfg.h_ex))
        cfg.J_nu = list(sec.get("J_nu", []))
        cfg.I_nu = list(sec.get("I_nu", []))
        cfg.H = sec.get("H", None)
        cfg.regime_override = str(sec.get("regime_override", "auto"))
        sec = raw.get("init", {})
        cfg.vortices = [list(v) for v in sec.get("vortices", [])]
        cfg.relax_steps = int(sec.get("relax_steps", cfg.relax_steps))
        cfg.C0 = float(sec.get("C0", cfg.C0))
        cfg.sigma_star = float(sec.get("sigma_star", cfg.sigma_star))
        sec = raw.get("time", {})
        cfg.T = float(sec.get("T", cfg.T))
        cfg.dt = None if sec.get("dt") is None else float(sec["dt"])
        cfg.dt_factor = float(sec.get("dt_factor", cfg.dt_factor))
        cfg.accelerated = bool(sec.get("accelerated", cfg.accelerated))
        cfg.stride = int(sec.get("stride", cfg.stride))
        cfg.scheme = str(sec.get("scheme", cfg.scheme))
        sec = raw.get("compare", {})
        cfg.epsilon_ladder = [float(e) for e in sec.get("epsilon_ladder", [])]
        cfg.c_W = str(sec.get("c_W", cfg.c_W))
        cfg.compare_T = float(sec.get("T", cfg.compare_T))
        cfg.dtau = float(sec.get("dtau", cfg.dtau))
        cfg.compare_stride = int(sec.get("stride", cfg.compare_stride))
        cfg.seed = int(raw.get("seed", cfg.seed))
        cfg.out_dir = str(raw.get("out_dir", cfg.out_dir))
    except (TypeError, ValueError) as e:
        raise ConfigRejection(f"malformed value: {e}") from None
    return _validate(cfg)


def parse_config(path, strict: bool = False) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as e:
        raise ConfigRejection(f"malformed config: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigRejection("config root must be an object")
    return config_from_dict(raw, strict=strict)
