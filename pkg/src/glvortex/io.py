"""File formats: raw field snapshots with sidecar metadata, CSV outputs,
and content-hash manifests. All writers are deterministic byte-for-byte for
identical inputs.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

from .grid import DomainGrid, make_grid

SITE_SHAPES = {
    "node": lambda g: g.shape_nodes,
    "edge-x": lambda g: g.shape_xedges,
    "edge-y": lambda g: g.shape_yedges,
    "cell": lambda g: g.shape_cells,
}


def fmt(x) -> str:
    """Shortest round-trip decimal for floats; plain str for ints."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_field_snapshot(out_dir, name, site, values, grid: DomainGrid,
                         time=0.0):
    """One raw little-endian float64 file per component, y-major outer /
    x inner, plus a key:value sidecar."""
    if site not in SITE_SHAPES:
        raise ValueError(f"unknown site type {site!r}")
    arr = np.asarray(values, dtype="<f8")
    if arr.shape != SITE_SHAPES[site](grid):
        raise ValueError(f"{name}: shape {arr.shape} does not match site {site}")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name + ".f64"), "wb") as f:
        f.write(np.ascontiguousarray(arr.T).tobytes())
    meta = (f"field: {name}\nsite: {site}\nnx: {grid.Nx}\nny: {grid.Ny}\n"
            f"h: {fmt(grid.h)}\ntime: {fmt(time)}\n")
    with open(os.path.join(out_dir, name + ".meta"), "w", encoding="utf-8") as f:
        f.write(meta)


def read_field_snapshot(out_dir, name):
    """Returns (values, meta_dict); values indexed [i, j] with i along x."""
    meta = {}
    with open(os.path.join(out_dir, name + ".meta"), encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                k, _, v = line.partition(":")
                meta[k.strip()] = v.strip()
    nx, ny = int(meta["nx"]), int(meta["ny"])
    site = meta["site"]
    g = make_grid((nx - 1) * float(meta["h"]), (ny - 1) * float(meta["h"]),
                  nx, ny)
    shape = SITE_SHAPES[site](g)
    raw = np.fromfile(os.path.join(out_dir, name + ".f64"), dtype="<f8")
    values = raw.reshape(shape[1], shape[0]).T.copy()
    return values, meta


def write_csv(path, header, rows):
    """Deterministic CSV: '.%' decimal point, shortest round-trip floats."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(fmt(x) if isinstance(x, (int, float, np.integer,
                                                      np.floating))
                             else str(x) for x in row) + "\n")


def read_csv(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    return header, rows


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir):
    """Hash every artifact under out_dir (except the manifest itself)."""
    entries = []
    for root, _, files in os.walk(out_dir):
        for name in files:
            rel = os.path.relpath(os.path.join(root, name), out_dir)
            if rel == "manifest":
                continue
            entries.append((rel.replace(os.sep, "/"),
                            sha256_file(os.path.join(root, name))))
    entries.sort()
    with open(os.path.join(out_dir, "manifest"), "w", encoding="utf-8") as f:
        for rel, digest in entries:
            f.write(f"{digest}  {rel}\n")


def verify_manifest(out_dir) -> bool:
    path = os.path.join(out_dir, "manifest")
    with open(path, encoding="utf-8") as f:
        for line in f:
            digest, _, rel = line.strip().partition("  ")
            if sha256_file(os.path.join(out_dir, rel)) != digest:
                return False
    return True


def save_green_table(table, out_dir):
    """Persist a Green table: smooth parts and gradients plus a source list."""
    os.makedirs(out_dir, exist_ok=True)
    g = table.grid
    lines = [f"{fmt(x)} {fmt(y)}" for (x, y) in table.sources]
    with open(os.path.join(out_dir, "sources.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    for k in range(len(table.sources)):
        write_field_snapshot(out_dir, f"s_{k:03d}", "node",
                             table.S[k].values, g)
        write_field_snapshot(out_dir, f"s_{k:03d}_gx", "edge-x",
                             table.gradS[k].x, g)
        write_field_snapshot(out_dir, f"s_{k:03d}_gy", "edge-y",
                             table.gradS[k].y, g)
    write_manifest(out_dir)


def load_green_table(out_dir):
    from .elliptic import GreenTable
    from .grid import EdgeField, NodeField

    with open(os.path.join(out_dir, "sources.txt"), encoding="utf-8") as f:
        sources = np.array([[float(t) for t in line.split()]
                            for line in f if line.strip()])
    S, gradS = [], []
    grid = None
    for k in range(len(sources)):
        values, meta = read_field_snapshot(out_dir, f"s_{k:03d}")
        if grid is None:
            nx, ny = int(meta["nx"]), int(meta["ny"])
            h = float(meta["h"])
            grid = make_grid((nx - 1) * h, (ny - 1) * h, nx, ny)
        gx, _ = read_field_snapshot(out_dir, f"s_{k:03d}_gx")
        gy, _ = read_field_snapshot(out_dir, f"s_{k:03d}_gy")
        S.append(NodeField(grid, values))
        gradS.append(EdgeField(grid, gx, gy))
    return GreenTable(grid, sources, S, gradS)
