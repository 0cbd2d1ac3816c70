"""Raster assembly and run outputs: PGM/CSV/JSON files plus PNG figures.

Scalar per-reference fields are pushed onto one global raster at the finest
cell size present in the decomposition; coarser subdomains are replicated
nearest-neighbor.  Rotations act on cell indices only, which is exact for
scalars such as the phase field or the von Mises stress.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .equilibrium import stress_tensors
from .errors import GapError, OverlapError
from .gridmaps import unrot_cell

__all__ = [
    "GlobalRaster",
    "assemble_mosaic",
    "read_field_csv",
    "render_report",
    "sub_phase_fields",
    "sub_vonmises_fields",
    "von_mises",
    "write_outputs",
]


@dataclass
class GlobalRaster:
    """One scalar field sampled on the finest uniform grid of the mosaic.

    ``values[ix, iy]`` covers the square with corner ``origin +
    spacing*(ix, iy)``; ``provenance[ix, iy]`` is (subdomain id, flat
    reference cell index).
    """

    values: np.ndarray
    origin: tuple
    spacing: float
    provenance: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def cell_centers(self):
        nx, ny = self.values.shape
        xs = self.origin[0] + self.spacing * (np.arange(nx) + 0.5)
        ys = self.origin[1] + self.spacing * (np.arange(ny) + 0.5)
        return xs, ys


def _as_int(x, what):
    r = round(x)
    if abs(x - r) > 1e-9 * max(1.0, abs(x)):
        raise ValueError(f"{what} is not commensurate with the finest grid")
    return int(r)


def assemble_mosaic(dec, n: int, fields) -> GlobalRaster:
    """Paste per-subdomain reference fields into one global raster.

    ``fields`` maps subdomain id to its (n, n) reference-frame array.
    Every raster cell must be covered exactly once.
    """
    spacing = min(sub.rect.width for sub in dec.subdomains) / n
    box = dec.bounding_box
    nx = _as_int(box.width / spacing, "bounding box width")
    ny = _as_int(box.height / spacing, "bounding box height")
    values = np.zeros((nx, ny))
    cover = np.zeros((nx, ny), dtype=np.int32)
    provenance = np.zeros((nx, ny, 2), dtype=np.int64)

    for sub in dec.subdomains:
        ref = np.asarray(fields[sub.id], dtype=float)
        if ref.shape != (n, n):
            raise ValueError(f"field for subdomain {sub.id} is not {n}x{n}")
        geo = np.empty((n, n))
        prov = np.empty((n, n), dtype=np.int64)
        for gi in range(n):
            for gj in range(n):
                ri, rj = unrot_cell(sub.rotation, gi, gj, n)
                geo[gi, gj] = ref[ri, rj]
                prov[gi, gj] = ri * n + rj
        rep = _as_int(sub.rect.width / (n * spacing), "subdomain cell size")
        geo = np.repeat(np.repeat(geo, rep, axis=0), rep, axis=1)
        prov = np.repeat(np.repeat(prov, rep, axis=0), rep, axis=1)
        ox = _as_int((sub.rect.x0 - box.x0) / spacing, "subdomain offset")
        oy = _as_int((sub.rect.y0 - box.y0) / spacing, "subdomain offset")
        sl = (slice(ox, ox + n * rep), slice(oy, oy + n * rep))
        values[sl] = geo
        cover[sl] += 1
        provenance[sl + (0,)] = sub.id
        provenance[sl + (1,)] = prov

    if (cover > 1).any():
        raise OverlapError("raster cells covered more than once")
    if (cover == 0).any():
        raise GapError("raster cells left uncovered")
    return GlobalRaster(values=values, origin=(box.x0, box.y0),
                        spacing=spacing, provenance=provenance)


def sub_phase_fields(layout, vfields) -> dict:
    """Subdomain id -> its shared phase field."""
    return {sid: vfields[vci] for sid, vci in layout.vclass_of_sub.items()}


def sub_vonmises_fields(layout, force) -> dict:
    """Subdomain id -> von Mises magnitudes of its reference stress."""
    tensors = stress_tensors(layout, force)
    per_class = [von_mises(t) for t in tensors]
    return {sid: per_class[ci] for sid, ci in layout.class_of_sub.items()}


def von_mises(sig) -> np.ndarray:
    """Plane von Mises magnitude of symmetric 2x2 tensors (...x2x2)."""
    sig = np.asarray(sig, dtype=float)
    s11 = sig[..., 0, 0]
    s22 = sig[..., 1, 1]
    s12 = sig[..., 0, 1]
    return np.sqrt(np.maximum(
        s11 * s11 - s11 * s22 + s22 * s22 + 3.0 * s12 * s12, 0.0))


def _write_pgm(path, gray):
    """8-bit binary PGM; gray is (nx, ny) in [0, 255], y up."""
    img = np.round(gray).astype(np.uint8)
    rows = img.T[::-1, :]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[0]} {img.shape[1]}\n255\n".encode())
        fh.write(rows.tobytes())


def _write_field_csv(path, raster, name):
    xs, ys = raster.cell_centers()
    with open(path, "w") as fh:
        fh.write(f"x,y,{name}\n")
        for ix in range(raster.values.shape[0]):
            for iy in range(raster.values.shape[1]):
                fh.write(f"{xs[ix]:.17g},{ys[iy]:.17g},"
                         f"{raster.values[ix, iy]:.17g}\n")


def read_field_csv(path) -> GlobalRaster:
    """Rebuild a GlobalRaster from an x,y,value export.

    Provenance is not stored in the files and comes back as -1.
    """
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs, ys, vals = data[:, 0], data[:, 1], data[:, 2]
    ux, uy = np.unique(xs), np.unique(ys)
    steps = np.diff(ux) if len(ux) > 1 else np.diff(uy)
    spacing = float(steps.min()) if steps.size else 1.0
    ix = np.rint((xs - ux[0]) / spacing).astype(np.intp)
    iy = np.rint((ys - uy[0]) / spacing).astype(np.intp)
    values = np.full((ix.max() + 1, iy.max() + 1), np.nan)
    values[ix, iy] = vals
    if np.isnan(values).any():
        raise ValueError(f"{path} does not cover a full rectangular grid")
    provenance = np.full(values.shape + (2,), -1, dtype=np.int64)
    return GlobalRaster(values=values,
                        origin=(float(ux[0]) - 0.5 * spacing,
                                float(uy[0]) - 0.5 * spacing),
                        spacing=spacing, provenance=provenance)


def _read_records_csv(path):
    from .driver import IterationRecord

    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return [IterationRecord(iteration=int(row[0]), elastic=row[1],
                            volume=row[2], perimeter=row[3], total=row[4],
                            dv_l2=row[5])
            for row in data]


def _figure(raster, path, title, cmap, vmin=None, vmax=None):
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure

    fig = Figure(figsize=(6.0, 5.0), dpi=130)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(111)
    x0, y0 = raster.origin
    nx, ny = raster.values.shape
    extent = (x0, x0 + nx * raster.spacing, y0, y0 + ny * raster.spacing)
    im = ax.imshow(raster.values.T, origin="lower", extent=extent,
                   cmap=cmap, vmin=vmin, vmax=vmax, interpolation="nearest")
    ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.savefig(path, bbox_inches="tight")


def _convergence_figure(records, path):
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure

    fig = Figure(figsize=(7.0, 4.0), dpi=130)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(121)
    its = [r.iteration for r in records]
    ax.plot(its, [r.total for r in records], "k.-")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax2 = fig.add_subplot(122)
    ax2.semilogy(its, [max(r.dv_l2, 1e-300) for r in records], "b.-")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("phase change (L2)")
    fig.tight_layout()
    fig.savefig(path)


def write_outputs(report, out_dir: str) -> dict:
    """Write all artifacts of a finished run; returns path map."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = report.config
    layout = report.layout
    dec = cfg.decomposition
    n = cfg.n_cells
    delta = cfg.delta

    phase = assemble_mosaic(dec, n, sub_phase_fields(layout, report.vfields))
    vm = assemble_mosaic(dec, n, sub_vonmises_fields(layout, report.force))
    vm_max = float(vm.values.max())
    masked_values = np.where(phase.values > 0.5, vm.values, 0.0)
    masked = GlobalRaster(values=masked_values, origin=vm.origin,
                          spacing=vm.spacing, provenance=vm.provenance)
    masked_max = float(masked.values.max())

    paths = {}

    def target(name):
        paths[name] = os.path.join(out_dir, name)
        return paths[name]

    gray = np.clip((phase.values - delta) / (1.0 - delta), 0.0, 1.0) * 255.0
    _write_pgm(target("phase.pgm"), gray)
    _write_field_csv(target("phase.csv"), phase, "v")

    scale = 255.0 / vm_max if vm_max > 0 else 0.0
    _write_pgm(target("vonmises.pgm"), vm.values * scale)
    _write_pgm(target("vonmises_masked.pgm"), masked.values * scale)
    _write_field_csv(target("vonmises.csv"), vm, "vonmises")

    with open(target("report.csv"), "w") as fh:
        fh.write("iter,E,V,L,J,dv_l2\n")
        for r in report.records:
            fh.write(f"{r.iteration},{r.elastic:.17g},{r.volume:.17g},"
                     f"{r.perimeter:.17g},{r.total:.17g},{r.dv_l2:.17g}\n")

    summary = {
        "config": cfg.echo,
        "n_cells": n,
        "epsilon": report.epsilon,
        "converged": report.converged,
        "iterations": len(report.records),
        "final": report.components,
        "dofs": layout.ndofs,
        "constraint_rows": int(report.system.nrows),
        "system_reduced": bool(report.system.reduced),
        "vonmises_max": vm_max,
        "vonmises_masked_max": masked_max,
    }
    with open(target("report.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")

    if cfg.figures:
        _figure(phase, target("phase.png"), "phase field", "gray",
                vmin=0.0, vmax=1.0)
        _figure(vm, target("vonmises.png"), "von Mises stress", "viridis",
                vmin=0.0, vmax=vm_max if vm_max > 0 else 1.0)
        _convergence_figure(report.records, target("convergence.png"))
    return paths


def render_report(out_dir: str) -> dict:
    """Re-render the PNG figures from a run directory's CSV exports.

    Lets runs executed with ``figures: false`` (or on a machine without a
    usable matplotlib) be rendered after the fact.  Returns the path map of
    the figures written; phase.csv must exist, the others are optional.
    """
    paths = {}

    def target(name):
        paths[name] = os.path.join(out_dir, name)
        return paths[name]

    phase = read_field_csv(os.path.join(out_dir, "phase.csv"))
    _figure(phase, target("phase.png"), "phase field", "gray",
            vmin=0.0, vmax=1.0)
    vm_csv = os.path.join(out_dir, "vonmises.csv")
    if os.path.exists(vm_csv):
        vm = read_field_csv(vm_csv)
        vmax = float(vm.values.max())
        _figure(vm, target("vonmises.png"), "von Mises stress", "viridis",
                vmin=0.0, vmax=vmax if vmax > 0 else 1.0)
    rep_csv = os.path.join(out_dir, "report.csv")
    if os.path.exists(rep_csv):
        _convergence_figure(_read_records_csv(rep_csv),
                            target("convergence.png"))
    return paths
