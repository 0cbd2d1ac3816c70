"""Slow reference implementations used only by tests.

Everything here is built from first principles on geometric coordinates and
dense linear algebra.  In particular `geometric_system` enumerates cells and
edges of the assembled domain directly by their world positions and shares no
code with the production assembly path, so agreement between the two is a
meaningful check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InconsistentSystemError

__all__ = [
    "dense_min_energy",
    "scan_minimize",
    "GeometricSystem",
    "geometric_system",
]


def dense_min_energy(A, b, M):
    """Minimize ½ fᵀ M f subject to A f = b by dense pseudoinverse.

    Parameters
    ----------
    A : (m, n) array_like
    b : (m,) array_like
    M : (n,) or (n, n) array_like
        Diagonal weights (vector) or full SPD matrix.

    Returns
    -------
    (f, energy)

    Raises
    ------
    InconsistentSystemError if no f satisfies A f = b.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    M = np.asarray(M, dtype=float)
    Minv = 1.0 / M if M.ndim == 1 else np.linalg.inv(M)

    f_ls, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.linalg.norm(A @ f_ls - b) > 1e-10 * (1.0 + np.linalg.norm(b)):
        raise InconsistentSystemError("A f = b has no solution")

    if M.ndim == 1:
        AMinvAT = (A * Minv) @ A.T
        lam = np.linalg.pinv(AMinvAT) @ b
        f = Minv * (A.T @ lam)
        energy = 0.5 * float(f @ (M * f))
    else:
        AMinvAT = A @ Minv @ A.T
        lam = np.linalg.pinv(AMinvAT) @ b
        f = Minv @ (A.T @ lam)
        energy = 0.5 * float(f @ M @ f)
    return f, energy


def scan_minimize(fn, lo, hi, n_points):
    """Grid argmin of fn on [lo, hi] refined by a golden-section pass."""
    xs = np.linspace(lo, hi, int(n_points))
    ys = fn(xs)
    ys = np.asarray(ys, dtype=float)
    if ys.shape != xs.shape:
        ys = np.array([float(fn(x)) for x in xs])
    i = int(np.argmin(ys))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, len(xs) - 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = float(fn(c)), float(fn(d))
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = float(fn(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = float(fn(d))
    xg = 0.5 * (a + b)
    return xg if float(fn(xg)) < ys[i] else float(xs[i])


@dataclass
class GeometricSystem:
    """Dense constraint system enumerated from world coordinates."""

    A: np.ndarray
    b: np.ndarray
    M: np.ndarray
    edge_dofs: dict  # (orient, x_mid, y_mid) -> first scalar dof index


_ROUND = 10


def _ekey(orient, x, y):
    return (orient, round(x + 0.0, _ROUND), round(y + 0.0, _ROUND))


def geometric_system(subdomains, box, n, v, loads, delta=0.01):
    """Enumerate A f = b and the weight diagonal M for squares at rotation 0.

    Parameters
    ----------
    subdomains : sequence of SubdomainSpec (square rects)
    box : Rect bounding box
    n : cells per subdomain side
    v : mapping (subdomain id, ix, iy) -> phase value
    loads : LoadCase
    delta : soft-phase floor (only used in sanity checks)

    The dof model places one force vector on every geometrically distinct
    edge, so matching facets share dofs automatically while split facets keep
    separate coarse/fine dofs tied by weak continuity rows.
    """
    subs = list(subdomains)
    for s in subs:
        if abs(s.rect.width - s.rect.height) > 1e-12:
            raise ValueError("oracle supports square subdomains only")

    # Pass 1: enumerate distinct edges.
    edge_h = {}
    edge_span = {}
    for s in subs:
        h = s.rect.width / n
        x0, y0 = s.rect.x0, s.rect.y0
        for i in range(n + 1):
            for j in range(n):
                k = _ekey("v", x0 + i * h, y0 + (j + 0.5) * h)
                edge_h[k] = h
                edge_span[k] = (y0 + j * h, y0 + (j + 1) * h)
        for i in range(n):
            for j in range(n + 1):
                k = _ekey("h", x0 + (i + 0.5) * h, y0 + j * h)
                edge_h[k] = h
                edge_span[k] = (x0 + i * h, x0 + (i + 1) * h)
    edge_dofs = {k: 2 * idx for idx, k in enumerate(sorted(edge_h))}
    ndof = 2 * len(edge_h)

    # Per-cell edge keys in (left, right, bottom, top) order.
    def cell_edges(s, i, j):
        h = s.rect.width / n
        x0, y0 = s.rect.x0, s.rect.y0
        return (
            _ekey("v", x0 + i * h, y0 + (j + 0.5) * h),
            _ekey("v", x0 + (i + 1) * h, y0 + (j + 0.5) * h),
            _ekey("h", x0 + (i + 0.5) * h, y0 + j * h),
            _ekey("h", x0 + (i + 0.5) * h, y0 + (j + 1) * h),
        )

    rows = []
    rhs = []

    def add_row(entries, bval=0.0):
        row = np.zeros(ndof)
        for dof, coeff in entries:
            row[dof] += coeff
        rows.append(row)
        rhs.append(bval)

    # Force and torque balance, cell by cell.
    for s in subs:
        h = s.rect.width / n
        for i in range(n):
            for j in range(n):
                kl, kr, kb, kt = cell_edges(s, i, j)
                dl, dr = edge_dofs[kl], edge_dofs[kr]
                db, dt = edge_dofs[kb], edge_dofs[kt]
                for comp in (0, 1):
                    add_row([(dr + comp, h), (dl + comp, -h),
                             (dt + comp, h), (db + comp, -h)])
                add_row([(dl + 1, 1.0), (dr + 1, 1.0),
                         (db + 0, -1.0), (dt + 0, -1.0)])

    # Weak continuity at split facets: coarse edge against the two half-size
    # edges that cover it, detected purely by coordinates.
    for kc in sorted(edge_h):
        hc = edge_h[kc]
        lo_c, hi_c = edge_span[kc]
        fine = []
        for kf in edge_h:
            if kf is kc or kf[0] != kc[0]:
                continue
            if abs(edge_h[kf] - 0.5 * hc) > 1e-12:
                continue
            fixed_c = kc[1] if kc[0] == "v" else kc[2]
            fixed_f = kf[1] if kf[0] == "v" else kf[2]
            if abs(fixed_f - fixed_c) > 1e-10:
                continue
            lo_f, hi_f = edge_span[kf]
            if lo_f >= lo_c - 1e-10 and hi_f <= hi_c + 1e-10:
                fine.append(kf)
        if fine:
            assert len(fine) == 2, f"edge {kc} covered by {len(fine)} fine edges"
            hf = edge_h[fine[0]]
            for comp in (0, 1):
                add_row([(edge_dofs[kc] + comp, hc)]
                        + [(edge_dofs[kf] + comp, -hf) for kf in fine])

    # Boundary rows: per boundary edge either the scaled traction or zero.
    # The scale is per loaded interval of a whole domain side, chosen so the
    # transmitted resultant equals the nominal interval resultant exactly.
    sides = {
        "left": ("v", box.x0, -1.0), "right": ("v", box.x1, 1.0),
        "bottom": ("h", box.y0, -1.0), "top": ("h", box.y1, 1.0),
    }
    for side, (orient, coord, outsign) in sides.items():
        bl = loads.for_side(side)
        blo, bhi = (box.y0, box.y1) if orient == "v" else (box.x0, box.x1)
        span = bhi - blo
        tol = 1e-12 * span

        edges = []
        for s in subs:
            h = s.rect.width / n
            fixed, lo, hi = s.rect.side_segment(side)
            if abs(fixed - coord) > 1e-10:
                continue
            for m in range(n):
                mid = lo + (m + 0.5) * h
                if orient == "v":
                    k = _ekey("v", fixed, mid)
                    cell = (s.id, 0 if side == "left" else n - 1, m)
                else:
                    k = _ekey("h", mid, fixed)
                    cell = (s.id, m, 0 if side == "bottom" else n - 1)
                edges.append((k, mid, cell, h))

        intervals = [] if bl is None else [
            (blo + a * span, blo + b * span) for a, b in bl.intervals]
        scales = []
        for ia, ib in intervals:
            covered = sum(h for _, mid, _, h in edges if ia - tol <= mid <= ib + tol)
            scales.append((ib - ia) / covered if covered > 0 else 0.0)

        for k, mid, cell, h in edges:
            dof = edge_dofs[k]
            hit = next((t for t, (ia, ib) in enumerate(intervals)
                        if ia - tol <= mid <= ib + tol), None)
            loaded = hit is not None and v[cell] == 1.0
            for comp in (0, 1):
                bval = (outsign * scales[hit] * bl.traction[comp]
                        if loaded else 0.0)
                add_row([(dof + comp, 1.0)], bval)

    # Weight diagonal.
    M = np.zeros(ndof)
    for s in subs:
        h = s.rect.width / n
        for i in range(n):
            for j in range(n):
                w = h * h / v[(s.id, i, j)]
                for k in cell_edges(s, i, j):
                    dof = edge_dofs[k]
                    M[dof] += w
                    M[dof + 1] += w

    return GeometricSystem(A=np.array(rows), b=np.array(rhs), M=M,
                           edge_dofs=edge_dofs)
