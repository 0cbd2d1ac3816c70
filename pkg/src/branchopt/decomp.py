"""Validation of rectangular domain decompositions.

The computational domain is an axis-aligned rectangle tiled by axis-aligned
rectangular subdomains.  Every side of a subdomain (a *facet*) must fall into
one of four cases: it matches a neighbor side exactly, it splits into two
equal neighbor sides, it is one half of a larger neighbor side, or it lies on
the domain boundary.  Subdomains pointing at the same reference id must be
congruent under their declared quarter-turn rotations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GapError,
    IncompatibleFacetError,
    IncongruentReferenceError,
    OverlapError,
)
from .gridmaps import SIDES, rot_matrix, side_axis

__all__ = [
    "MATCH",
    "SPLITS",
    "HALF",
    "BOUNDARY",
    "Rect",
    "SubdomainSpec",
    "FacetRecord",
    "ReferenceClass",
    "Decomposition",
    "validate_decomposition",
    "reference_classes",
    "periodic_lineups",
]

# Facet kinds.
MATCH = "match"          # full side shared with one equally sized neighbor
SPLITS = "splits_into"   # side covered by two neighbor sides of half length
HALF = "half_of_split"   # side is one half of a neighbor side
BOUNDARY = "boundary"    # side lies on the domain boundary

_OPPOSITE = {"left": "right", "right": "left", "bottom": "top", "top": "bottom"}


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle (x0, x1) x (y0, y1)."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> np.ndarray:
        return np.array([0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)])

    def side_segment(self, side: str):
        """(fixed coordinate, lo, hi) of one side."""
        if side == "left":
            return self.x0, self.y0, self.y1
        if side == "right":
            return self.x1, self.y0, self.y1
        if side == "bottom":
            return self.y0, self.x0, self.x1
        if side == "top":
            return self.y1, self.x0, self.x1
        raise ValueError(f"unknown side {side!r}")


@dataclass(frozen=True)
class SubdomainSpec:
    """One subdomain: rectangle, reference id and quarter-turn rotation."""

    id: int
    rect: Rect
    reference: int
    rotation: int

    def __post_init__(self):
        if self.rotation not in (0, 1, 2, 3):
            raise ValueError(f"rotation must be in 0..3, got {self.rotation}")


@dataclass(frozen=True)
class FacetRecord:
    """Classification of one subdomain side."""

    owner: int
    side: str
    kind: str
    # (subdomain id, side) pairs on the other side of the facet; empty for
    # boundary facets, one entry for match/half, two (in increasing coordinate
    # order) for splits_into.
    partners: tuple = ()


@dataclass(frozen=True)
class ReferenceClass:
    """All placements of one reference rectangle.

    ``shape`` is the (width, height) of the reference rectangle; ``members``
    holds (subdomain id, rotation, translation) with geometric coordinates
    given by ``x_geo = R_k @ x_ref + translation``.
    """

    reference: int
    shape: tuple
    members: tuple


@dataclass
class Decomposition:
    """A validated decomposition with facet classification."""

    bounding_box: Rect
    subdomains: list
    facets: dict = field(default_factory=dict)  # (sub id, side) -> FacetRecord
    tol: float = 0.0

    def __post_init__(self):
        self.by_id = {s.id: s for s in self.subdomains}

    def facet(self, sub_id: int, side: str) -> FacetRecord:
        return self.facets[(sub_id, side)]

    def boundary_facets(self):
        return [f for f in self.facets.values() if f.kind == BOUNDARY]


def _close(a, b, tol):
    return abs(a - b) <= tol


def validate_decomposition(subdomains, bounding_box) -> Decomposition:
    """Check cover/overlap/facet compatibility and classify every facet.

    Parameters
    ----------
    subdomains : sequence of SubdomainSpec
    bounding_box : Rect

    Returns
    -------
    Decomposition

    Raises
    ------
    OverlapError, GapError, IncompatibleFacetError, IncongruentReferenceError
    """
    subs = list(subdomains)
    if not subs:
        raise GapError("decomposition has no subdomains")
    ids = [s.id for s in subs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate subdomain ids")

    box = bounding_box
    diam = float(np.hypot(box.width, box.height))
    tol = 1e-12 * diam

    for s in subs:
        r = s.rect
        if (r.x0 < box.x0 - tol or r.x1 > box.x1 + tol
                or r.y0 < box.y0 - tol or r.y1 > box.y1 + tol):
            raise GapError(f"subdomain {s.id} extends outside the bounding box")

    # Pairwise open-rectangle intersection.
    for a in range(len(subs)):
        ra = subs[a].rect
        for b in range(a + 1, len(subs)):
            rb = subs[b].rect
            ox = min(ra.x1, rb.x1) - max(ra.x0, rb.x0)
            oy = min(ra.y1, rb.y1) - max(ra.y0, rb.y0)
            if ox > tol and oy > tol:
                raise OverlapError(
                    f"subdomains {subs[a].id} and {subs[b].id} overlap")

    total = sum(s.rect.area for s in subs)
    if not _close(total, box.area, 1e-12 * box.area + tol * diam):
        raise GapError(
            f"subdomain areas sum to {total!r} but the bounding box has area "
            f"{box.area!r}")

    facets = {}
    for s in subs:
        for side in SIDES:
            facets[(s.id, side)] = _classify_facet(s, side, subs, box, tol)

    dec = Decomposition(bounding_box=box, subdomains=subs, facets=facets, tol=tol)
    _check_reciprocity(dec)
    _check_reference_congruence(dec, tol)
    return dec


def _classify_facet(s, side, subs, box, tol):
    fixed, lo, hi = s.rect.side_segment(side)
    length = hi - lo
    opp = _OPPOSITE[side]

    # Neighbors whose opposite side lies on the same line and overlaps.
    found = []
    for t in subs:
        if t.id == s.id:
            continue
        tfixed, tlo, thi = t.rect.side_segment(opp)
        if not _close(tfixed, fixed, tol):
            continue
        if min(hi, thi) - max(lo, tlo) > tol:
            found.append((t, tlo, thi))
    found.sort(key=lambda item: item[1])

    if not found:
        bfixed = {"left": box.x0, "right": box.x1,
                  "bottom": box.y0, "top": box.y1}[side]
        if _close(fixed, bfixed, tol):
            return FacetRecord(owner=s.id, side=side, kind=BOUNDARY)
        raise GapError(
            f"facet ({s.id}, {side}) has no neighbor and does not lie on the "
            f"domain boundary")

    if len(found) == 1:
        t, tlo, thi = found[0]
        if _close(tlo, lo, tol) and _close(thi, hi, tol):
            return FacetRecord(owner=s.id, side=side, kind=MATCH,
                               partners=((t.id, opp),))
        t_len = thi - tlo
        covers = tlo <= lo + tol and thi >= hi - tol
        half = _close(length, 0.5 * t_len, tol)
        at_end = _close(lo, tlo, tol) or _close(hi, thi, tol)
        if covers and half and at_end:
            return FacetRecord(owner=s.id, side=side, kind=HALF,
                               partners=((t.id, opp),))
        raise IncompatibleFacetError(
            f"facet ({s.id}, {side}) partially overlaps subdomain {t.id} "
            f"without matching or halving it")

    if len(found) == 2:
        (t1, lo1, hi1), (t2, lo2, hi2) = found
        ok = (_close(lo1, lo, tol) and _close(hi2, hi, tol)
              and _close(hi1, lo2, tol)
              and _close(hi1 - lo1, 0.5 * length, tol)
              and _close(hi2 - lo2, 0.5 * length, tol))
        if ok:
            return FacetRecord(owner=s.id, side=side, kind=SPLITS,
                               partners=((t1.id, opp), (t2.id, opp)))
        raise IncompatibleFacetError(
            f"facet ({s.id}, {side}) is covered by subdomains {t1.id} and "
            f"{t2.id} but not split into equal halves")

    raise IncompatibleFacetError(
        f"facet ({s.id}, {side}) touches {len(found)} neighbors; at most two "
        f"are supported")


def _check_reciprocity(dec: Decomposition):
    for f in dec.facets.values():
        if f.kind == MATCH:
            (pid, pside), = f.partners
            back = dec.facet(pid, pside)
            if back.kind != MATCH or (f.owner, f.side) not in back.partners:
                raise IncompatibleFacetError(
                    f"facet ({f.owner}, {f.side}) matches ({pid}, {pside}) "
                    f"but not vice versa")
        elif f.kind == SPLITS:
            for pid, pside in f.partners:
                back = dec.facet(pid, pside)
                if back.kind != HALF or (f.owner, f.side) not in back.partners:
                    raise IncompatibleFacetError(
                        f"facet ({f.owner}, {f.side}) splits into "
                        f"({pid}, {pside}) but the half does not point back")
        elif f.kind == HALF:
            (pid, pside), = f.partners
            back = dec.facet(pid, pside)
            if back.kind != SPLITS or (f.owner, f.side) not in back.partners:
                raise IncompatibleFacetError(
                    f"facet ({f.owner}, {f.side}) is half of ({pid}, {pside}) "
                    f"but the split does not point back")


def _reference_shape(spec: SubdomainSpec):
    """(width, height) of the reference rectangle implied by one placement."""
    w, h = spec.rect.width, spec.rect.height
    if spec.rotation % 2 == 1:
        return h, w
    return w, h


def _check_reference_congruence(dec: Decomposition, tol):
    shapes = {}
    for s in dec.subdomains:
        shape = _reference_shape(s)
        prev = shapes.setdefault(s.reference, (shape, s.id))
        if not (_close(prev[0][0], shape[0], tol)
                and _close(prev[0][1], shape[1], tol)):
            raise IncongruentReferenceError(
                f"subdomains {prev[1]} and {s.id} use reference {s.reference} "
                f"but are not congruent under their rotations")


def reference_classes(dec: Decomposition) -> dict:
    """Group placements by reference id.

    The reference rectangle is anchored at the origin: (0, w) x (0, h).  Each
    member is reported as (subdomain id, rotation, translation) with
    ``x_geo = R_k @ x_ref + translation``.
    """
    classes = {}
    for s in sorted(dec.subdomains, key=lambda s: s.id):
        w, h = _reference_shape(s)
        ref_center = np.array([0.5 * w, 0.5 * h])
        translation = s.rect.center - rot_matrix(s.rotation) @ ref_center
        entry = classes.setdefault(s.reference, [])
        entry.append((s.id, s.rotation, tuple(translation)))
    return {
        ref: ReferenceClass(reference=ref,
                            shape=_reference_shape(dec.by_id[members[0][0]]),
                            members=tuple(members))
        for ref, members in classes.items()
    }


def periodic_lineups(dec: Decomposition) -> list:
    """Connected groups of equal copies.

    Two subdomains are linked when they share a full (match) facet and agree
    in reference id, rotation and size; linked groups repeat one stress and
    phase pattern periodically.  Only groups with at least two members are
    returned, each as a sorted list of subdomain ids.
    """
    parent = {s.id: s.id for s in dec.subdomains}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for f in dec.facets.values():
        if f.kind != MATCH:
            continue
        a = dec.by_id[f.owner]
        b = dec.by_id[f.partners[0][0]]
        if a.reference == b.reference and a.rotation == b.rotation:
            union(a.id, b.id)

    groups = {}
    for s in dec.subdomains:
        groups.setdefault(find(s.id), []).append(s.id)
    return sorted(sorted(g) for g in groups.values() if len(g) >= 2)
