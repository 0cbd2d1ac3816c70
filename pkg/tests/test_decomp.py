"""Decomposition validation, facet classification, classes and lineups."""

import numpy as np
import pytest

from branchopt.decomp import (
    BOUNDARY,
    HALF,
    MATCH,
    SPLITS,
    Rect,
    SubdomainSpec,
    periodic_lineups,
    reference_classes,
    validate_decomposition,
)
from branchopt.errors import (
    GapError,
    IncompatibleFacetError,
    IncongruentReferenceError,
    OverlapError,
)
from branchopt.gridmaps import rot_matrix


def unit_grid(nx, ny, reference=0, rotation=0):
    subs = []
    for i in range(nx):
        for j in range(ny):
            subs.append(SubdomainSpec(
                id=j * nx + i, rect=Rect(i, i + 1, j, j + 1),
                reference=reference, rotation=rotation))
    return subs, Rect(0, nx, 0, ny)


def test_grid_3x3_all_match_or_boundary():
    subs, box = unit_grid(3, 3)
    dec = validate_decomposition(subs, box)
    kinds = {}
    for f in dec.facets.values():
        kinds[f.kind] = kinds.get(f.kind, 0) + 1
    # 12 interior shared sides appear twice (once per owner).
    assert kinds[MATCH] == 24
    assert kinds[BOUNDARY] == 12
    assert SPLITS not in kinds and HALF not in kinds


def test_single_subdomain_all_boundary():
    dec = validate_decomposition(
        [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0)], Rect(0, 1, 0, 1))
    assert all(f.kind == BOUNDARY for f in dec.facets.values())


def test_split_classification():
    subs = [
        SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0),
        SubdomainSpec(1, Rect(0, 0.5, 1, 1.5), 1, 0),
        SubdomainSpec(2, Rect(0.5, 1, 1, 1.5), 1, 0),
    ]
    dec = validate_decomposition(subs, Rect(0, 1, 0, 1.5))
    top = dec.facet(0, "top")
    assert top.kind == SPLITS
    assert top.partners == ((1, "bottom"), (2, "bottom"))
    assert dec.facet(1, "bottom").kind == HALF
    assert dec.facet(1, "bottom").partners == ((0, "top"),)
    assert dec.facet(2, "bottom").kind == HALF
    assert dec.facet(1, "right").kind == MATCH
    assert dec.facet(2, "left").partners == ((1, "right"),)
    assert dec.facet(1, "top").kind == BOUNDARY


def test_overlap_rejected():
    subs = [
        SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0),
        SubdomainSpec(1, Rect(0, 1, 0, 1), 0, 0),
    ]
    with pytest.raises(OverlapError):
        validate_decomposition(subs, Rect(0, 1, 0, 1))


def test_gap_rejected():
    subs = [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0)]
    with pytest.raises(GapError):
        validate_decomposition(subs, Rect(0, 2, 0, 1))


def test_unequal_split_rejected():
    subs = [
        SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0),
        SubdomainSpec(1, Rect(0, 0.3, 1, 1.5), 1, 0),
        SubdomainSpec(2, Rect(0.3, 1, 1, 1.5), 2, 0),
    ]
    with pytest.raises(IncompatibleFacetError):
        validate_decomposition(subs, Rect(0, 1, 0, 1.5))


def test_incongruent_reference_rejected():
    subs = [
        SubdomainSpec(0, Rect(0, 1, 0, 2), 0, 0),
        SubdomainSpec(1, Rect(1, 2, 0, 2), 0, 1),
    ]
    with pytest.raises(IncongruentReferenceError):
        validate_decomposition(subs, Rect(0, 2, 0, 2))


def test_congruent_rotated_rectangles_accepted():
    # A 1x2 placement at k=0 and a 2x1 placement at k=1 share one reference.
    subs = [
        SubdomainSpec(0, Rect(0, 1, 0, 2), 0, 0),
        SubdomainSpec(1, Rect(1, 3, 0, 1), 0, 1),
        SubdomainSpec(2, Rect(1, 3, 1, 2), 1, 0),
    ]
    dec = validate_decomposition(subs, Rect(0, 3, 0, 2))
    assert dec.facet(0, "right").kind == SPLITS
    assert dec.facet(1, "left").kind == HALF


def test_reference_class_isometries_map_corners():
    subs = [
        SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0),
        SubdomainSpec(1, Rect(1, 2, 0, 1), 0, 1),
        SubdomainSpec(2, Rect(0, 1, 1, 2), 0, 2),
        SubdomainSpec(3, Rect(1, 2, 1, 2), 0, 3),
    ]
    dec = validate_decomposition(subs, Rect(0, 2, 0, 2))
    classes = reference_classes(dec)
    assert set(classes) == {0}
    cls = classes[0]
    w, h = cls.shape
    ref_corners = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=float)
    for sub_id, k, t in cls.members:
        rect = dec.by_id[sub_id].rect
        geo = ref_corners @ rot_matrix(k).T + np.asarray(t)
        expect = {(rect.x0, rect.y0), (rect.x1, rect.y0),
                  (rect.x1, rect.y1), (rect.x0, rect.y1)}
        got = {tuple(np.round(p, 12)) for p in geo}
        assert got == expect


def test_reference_classes_single_member_identity():
    dec = validate_decomposition(
        [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0)], Rect(0, 1, 0, 1))
    cls = reference_classes(dec)[0]
    assert cls.members == ((0, 0, (0.0, 0.0)),)


def test_periodic_lineups_strip_and_mixed():
    subs, box = unit_grid(4, 1)
    dec = validate_decomposition(subs, box)
    assert periodic_lineups(dec) == [[0, 1, 2, 3]]

    # Two adjacent subdomains with different references: no group.
    subs = [
        SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0),
        SubdomainSpec(1, Rect(1, 2, 0, 1), 1, 0),
    ]
    dec = validate_decomposition(subs, Rect(0, 2, 0, 1))
    assert periodic_lineups(dec) == []

    # Same reference but different rotation: no group either.
    subs = [
        SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0),
        SubdomainSpec(1, Rect(1, 2, 0, 1), 0, 2),
    ]
    dec = validate_decomposition(subs, Rect(0, 2, 0, 1))
    assert periodic_lineups(dec) == []


def test_periodic_lineups_block_3x3():
    subs, box = unit_grid(3, 3)
    dec = validate_decomposition(subs, box)
    assert periodic_lineups(dec) == [sorted(s.id for s in subs)]


def test_area_mismatch_reported_as_gap():
    # Hole in the middle of a 3x3 grid.
    subs, box = unit_grid(3, 3)
    subs = [s for s in subs if s.id != 4]
    with pytest.raises((GapError, IncompatibleFacetError)):
        validate_decomposition(subs, box)
