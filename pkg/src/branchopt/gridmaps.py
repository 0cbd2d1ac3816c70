"""Index maps between reference grids and their rotated placements.

A placement maps the reference rectangle onto a geometric subdomain by a
rotation of k*90 degrees about the center followed by a translation.  Cell
values live on N x N arrays indexed ``a[ix, iy]`` with ix along +x and iy
along +y.  Edge forces live on staggered slots: vertical edges ``(i, j)``
with i in 0..N, j in 0..N-1 (canonical normal +x) and horizontal edges
``(i, j)`` with i in 0..N-1, j in 0..N (canonical normal +y).

Rotating an edge can flip its canonical normal; every edge map therefore
carries a sign with ``traction_geo = sign * R_k @ traction_ref`` relating the
stored reference components to the traction seen with the geometric canonical
normal.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SIDES",
    "VERT",
    "HORIZ",
    "rot_matrix",
    "rot_vector",
    "rot_components",
    "rot_cell",
    "unrot_cell",
    "rot_edge",
    "unrot_edge",
    "rot_field",
    "unrot_field",
    "rot_side",
    "unrot_side",
    "side_normal",
    "side_axis",
]

SIDES = ("left", "right", "bottom", "top")
VERT = "v"
HORIZ = "h"

# Outward unit normal of each side of an axis-aligned rectangle.
_SIDE_NORMALS = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
}

_ROTS = [
    np.array([[1, 0], [0, 1]], dtype=float),
    np.array([[0, -1], [1, 0]], dtype=float),
    np.array([[-1, 0], [0, -1]], dtype=float),
    np.array([[0, 1], [-1, 0]], dtype=float),
]

# (source component, sign) pairs such that (R_k f)[c] = sign * f[src].
_ROT_COMPONENTS = [
    ((0, 1), (1, 1)),
    ((1, -1), (0, 1)),
    ((0, -1), (1, -1)),
    ((1, 1), (0, -1)),
]


def rot_matrix(k: int) -> np.ndarray:
    """Rotation matrix for k quarter turns counter-clockwise."""
    return _ROTS[k % 4]


def rot_vector(k: int, v):
    """Apply the k-quarter-turn rotation to a 2-vector (or stack of them)."""
    v = np.asarray(v, dtype=float)
    return v @ _ROTS[k % 4].T


def rot_components(k: int):
    """Signed permutation of vector components under k quarter turns."""
    return _ROT_COMPONENTS[k % 4]


def rot_cell(k: int, ix, iy, n: int):
    """Instance-local cell index of reference cell (ix, iy)."""
    k = k % 4
    if k == 0:
        return ix, iy
    if k == 1:
        return n - 1 - iy, ix
    if k == 2:
        return n - 1 - ix, n - 1 - iy
    return iy, n - 1 - ix


def unrot_cell(k: int, jx, jy, n: int):
    """Reference cell index of instance-local cell (jx, jy)."""
    return rot_cell((4 - k) % 4, jx, jy, n)


def rot_edge(k: int, orient: str, i, j, n: int):
    """Instance-local slot of a reference edge.

    Returns ``(orient, i, j, sign)`` where sign relates the canonical normals
    as described in the module docstring.
    """
    k = k % 4
    vert = orient == VERT
    if k == 0:
        return orient, i, j, 1
    if k == 1:
        if vert:
            return HORIZ, n - 1 - j, i, 1
        return VERT, n - j, i, -1
    if k == 2:
        if vert:
            return VERT, n - i, n - 1 - j, -1
        return HORIZ, n - 1 - i, n - j, -1
    if vert:
        return HORIZ, j, n - i, -1
    return VERT, j, n - 1 - i, 1


def unrot_edge(k: int, orient: str, i, j, n: int):
    """Reference slot of an instance-local edge; sign convention as rot_edge."""
    return rot_edge((4 - k) % 4, orient, i, j, n)


def rot_field(k: int, a: np.ndarray) -> np.ndarray:
    """Cell-value array seen by an instance rotated k quarter turns."""
    return np.rot90(a, k % 4)


def unrot_field(k: int, a: np.ndarray) -> np.ndarray:
    """Inverse of rot_field."""
    return np.rot90(a, (4 - k) % 4)


def rot_side(k: int, side: str) -> str:
    """Geometric side onto which a reference side is carried."""
    nx, ny = _SIDE_NORMALS[side]
    gx, gy = rot_vector(k, (nx, ny))
    for name, (sx, sy) in _SIDE_NORMALS.items():
        if abs(gx - sx) < 0.5 and abs(gy - sy) < 0.5:
            return name
    raise AssertionError("unreachable")


def unrot_side(k: int, side: str) -> str:
    """Reference side carried onto a given geometric side."""
    return rot_side((4 - k) % 4, side)


def side_normal(side: str) -> np.ndarray:
    return np.array(_SIDE_NORMALS[side])


def side_axis(side: str) -> int:
    """Axis along which the side extends: 0 for horizontal sides, 1 for vertical."""
    return 1 if side in ("left", "right") else 0
