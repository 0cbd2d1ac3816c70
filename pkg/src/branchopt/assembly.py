"""Edge-force dof layout over placement classes and constraint assembly.

Placements of one reference rectangle share stress dofs when they agree in
rotation and in the boundary data pulled back to the reference frame; they
share the phase field when they agree in the pulled-back phase prescription.
Equal copies therefore carry identical stresses and identical boundary
conditions, while placements exposed to different loads split into separate
classes.

Constraints on the shared dofs:

* force and torque balance per reference cell (one copy per stress class),
* matching facets between same-rotation placements merge dofs outright
  (periodic wraparound included), other matching facets add rotation rows,
* split facets add weak continuity rows (coarse force = sum of fine forces),
* boundary edges are pinned to the scaled load or to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .decomp import BOUNDARY, MATCH, SPLITS, Decomposition
from .errors import (
    GridMismatchError,
    IncompatibleLoadError,
    InconsistentSystemError,
)
from .gridmaps import (
    HORIZ,
    SIDES,
    VERT,
    rot_components,
    rot_matrix,
    side_axis,
    unrot_cell,
    unrot_edge,
)

__all__ = [
    "ROW_LABELS",
    "VClass",
    "StressClass",
    "DofLayout",
    "ConstraintSystem",
    "index_dofs",
    "initial_phase",
    "check_load_compatibility",
    "assemble_force_balance",
    "assemble_torque_balance",
    "assemble_coupling",
    "assemble_boundary",
    "assemble_system",
    "reduce_rank",
]

ROW_LABELS = (
    "force_x",
    "force_y",
    "torque",
    "coupling_match",
    "coupling_branch",
    "coupling_periodic",
    "boundary",
)
_LBL = {name: i for i, name in enumerate(ROW_LABELS)}

# Keep dense QR rank reduction to systems of moderate size.
REDUCE_DENSE_CAP = 6000


@dataclass
class VClass:
    """Placements sharing one phase field: same reference, same prescription."""

    index: int
    reference: int
    members: tuple
    h: float
    fixed_mask: np.ndarray
    fixed_values: np.ndarray


@dataclass
class StressClass:
    """Placements sharing stress dofs: same reference, rotation and loads."""

    index: int
    reference: int
    rotation: int
    vclass: int
    members: tuple
    h: float
    # Reference slot -> pinned value (2-vector) or None for a zero pin.
    bc: dict = field(default_factory=dict)


@dataclass
class DofLayout:
    decomp: Decomposition
    n: int
    vclasses: list
    classes: list
    class_of_sub: dict
    vclass_of_sub: dict
    vert: list    # per class: (n+1, n) int array of edge ids
    horiz: list   # per class: (n, n+1) int array of edge ids
    nedges: int
    edge_h: np.ndarray

    @property
    def ndofs(self) -> int:
        return 2 * self.nedges


@dataclass
class ConstraintSystem:
    A: sp.csr_matrix
    b: np.ndarray
    labels: np.ndarray  # per row, index into ROW_LABELS
    reduced: bool = False

    @property
    def nrows(self) -> int:
        return self.A.shape[0]


def _side_slots(side, n):
    """Instance-grid slots of one side, ordered by increasing coordinate."""
    if side == "left":
        return [(VERT, 0, m) for m in range(n)]
    if side == "right":
        return [(VERT, n, m) for m in range(n)]
    if side == "bottom":
        return [(HORIZ, m, 0) for m in range(n)]
    return [(HORIZ, m, n) for m in range(n)]


def _side_cells(side, n):
    """Boundary-layer cells adjacent to one side, same order as the slots."""
    if side == "left":
        return [(0, m) for m in range(n)]
    if side == "right":
        return [(n - 1, m) for m in range(n)]
    if side == "bottom":
        return [(m, 0) for m in range(n)]
    return [(m, n - 1) for m in range(n)]


def check_load_compatibility(dec, loads):
    """Verify zero net force and torque of the nominal load.

    Loaded intervals are fractions of each boundary facet, so the nominal
    load is the per-facet pattern repeated along every boundary subdomain of
    a side.  Raises IncompatibleLoadError at relative tolerance 1e-12.
    """
    box = dec.bounding_box
    force = np.zeros(2)
    torque = 0.0
    scale = 0.0
    for s in dec.subdomains:
        for side in SIDES:
            if dec.facet(s.id, side).kind != BOUNDARY:
                continue
            bl = loads.for_side(side)
            if bl is None:
                continue
            fixed, lo, hi = s.rect.side_segment(side)
            length = hi - lo
            t = np.asarray(bl.traction)
            axis = side_axis(side)
            for a, b in bl.intervals:
                seg = (b - a) * length
                force += seg * t
                mid = lo + 0.5 * (a + b) * length
                point = np.empty(2)
                point[axis] = mid
                point[1 - axis] = fixed
                torque += seg * (point[0] * t[1] - point[1] * t[0])
                scale += seg * float(np.linalg.norm(t))
    if scale == 0.0:
        return
    if np.linalg.norm(force) > 1e-12 * scale or abs(torque) > 1e-12 * scale * max(
            box.width, box.height):
        raise IncompatibleLoadError(
            f"net force {force} / net torque {torque} of the load is nonzero")


def _interval_scales(dec, n, loads):
    """Per boundary facet: absolute loaded intervals and conserving scales.

    The scale multiplies the traction so the transmitted resultant of each
    facet interval matches the nominal one however the edge midpoints fall.
    """
    out = {}
    for s in dec.subdomains:
        for side in SIDES:
            if dec.facet(s.id, side).kind != BOUNDARY:
                continue
            bl = loads.for_side(side)
            if bl is None:
                out[(s.id, side)] = []
                continue
            _, slo, shi = s.rect.side_segment(side)
            span = shi - slo
            tol = 1e-12 * span
            h = span / n
            mids = [slo + (m + 0.5) * h for m in range(n)]
            entries = []
            for a, b in bl.intervals:
                ia, ib = slo + a * span, slo + b * span
                covered = sum(1 for m in mids if ia - tol <= m <= ib + tol)
                if covered == 0:
                    raise IncompatibleLoadError(
                        f"loaded interval [{a}, {b}] on side {side} of "
                        f"subdomain {s.id} covers no cell edge midpoint at "
                        f"this resolution")
                entries.append(((ia, ib), (ib - ia) / (covered * h)))
            out[(s.id, side)] = entries
    return out


def _boundary_signature(dec, sub, n, loads, scales):
    """Pulled-back boundary rows and phase prescription of one placement.

    Returns (bc, fixed) where bc maps reference slots to a pinned 2-vector or
    None (zero pin) and fixed maps reference cells to prescribed phase values
    (1.0 for loaded cells, None meaning the soft floor otherwise).
    """
    k = sub.rotation
    h = sub.rect.width / n
    bc = {}
    fixed = {}
    for side in SIDES:
        if dec.facet(sub.id, side).kind != BOUNDARY:
            continue
        bl = loads.for_side(side)
        _, slo, shi = sub.rect.side_segment(side)
        out_sign = 1.0 if side in ("right", "top") else -1.0
        rot_inv = rot_matrix(k).T
        slots = _side_slots(side, n)
        cells = _side_cells(side, n)
        tol = 1e-12 * (shi - slo)
        for m, ((orient, i, j), cell) in enumerate(zip(slots, cells)):
            mid = slo + (m + 0.5) * h
            scale = None
            if bl is not None:
                for (ia, ib), sc in scales[(sub.id, side)]:
                    if ia - tol <= mid <= ib + tol:
                        scale = sc
                        break
            ref_orient, ri, rj, sign = unrot_edge(k, orient, i, j, n)
            rcell = unrot_cell(k, *cell, n)
            if scale is not None:
                t = np.asarray(bl.traction, dtype=float)
                bc[(ref_orient, ri, rj)] = sign * out_sign * scale * (rot_inv @ t)
                fixed[rcell] = 1.0
            else:
                bc[(ref_orient, ri, rj)] = None
                fixed.setdefault(rcell, None)
    return bc, fixed


def _canon_bc(bc):
    parts = []
    for slot in sorted(bc):
        val = bc[slot]
        if val is None:
            parts.append((slot, 0, 0.0, 0.0))
        else:
            parts.append((slot, 1, round(float(val[0]), 12),
                          round(float(val[1]), 12)))
    return tuple(parts)


def _canon_fixed(fixed):
    return tuple(sorted((cell, 1 if val == 1.0 else 0)
                        for cell, val in fixed.items()))


def index_dofs(dec: Decomposition, n: int, loads=None) -> DofLayout:
    """Build the shared-dof layout.

    Without ``loads`` placements group by (reference, rotation) alone; with
    ``loads`` classes additionally split by the pulled-back boundary data so
    members of one class are equal copies including their boundary
    conditions.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    for s in dec.subdomains:
        if abs(s.rect.width - s.rect.height) > dec.tol:
            raise GridMismatchError(
                f"subdomain {s.id} is not square; uniform N x N grids would "
                f"produce non-square cells")
    has_split = any(f.kind == SPLITS for f in dec.facets.values())
    if has_split and n % 2 != 0:
        raise GridMismatchError(
            "split facets require an even N so each coarse edge meets "
            "exactly 2 fine edges")

    scales = _interval_scales(dec, n, loads) if loads is not None else None

    # Group placements into stress classes and phase classes.
    sig_of_sub = {}
    for s in sorted(dec.subdomains, key=lambda s: s.id):
        if loads is None:
            bc, fixed = {}, {}
        else:
            bc, fixed = _boundary_signature(dec, s, n, loads, scales)
        sig_of_sub[s.id] = (bc, fixed)

    class_key = {}
    vclass_key = {}
    for s in sorted(dec.subdomains, key=lambda s: s.id):
        bc, fixed = sig_of_sub[s.id]
        ck = (s.reference, s.rotation, _canon_bc(bc))
        vk = (s.reference, _canon_fixed(fixed))
        class_key.setdefault(ck, []).append(s.id)
        vclass_key.setdefault(vk, []).append(s.id)

    vclasses = []
    vclass_of_sub = {}
    for vk in sorted(vclass_key):
        members = tuple(vclass_key[vk])
        ref_sub = dec.by_id[members[0]]
        h = ref_sub.rect.width / n
        mask = np.zeros((n, n), dtype=bool)
        values = np.zeros((n, n))
        _, fixed = sig_of_sub[members[0]]
        for (ci, cj), val in fixed.items():
            mask[ci, cj] = True
            values[ci, cj] = 1.0 if val == 1.0 else np.nan  # nan = soft floor
        vc = VClass(index=len(vclasses), reference=ref_sub.reference,
                    members=members, h=h, fixed_mask=mask, fixed_values=values)
        vclasses.append(vc)
        for sid in members:
            vclass_of_sub[sid] = vc.index

    classes = []
    class_of_sub = {}
    for ck in sorted(class_key):
        members = tuple(class_key[ck])
        ref_sub = dec.by_id[members[0]]
        bc, _ = sig_of_sub[members[0]]
        cls = StressClass(index=len(classes), reference=ref_sub.reference,
                          rotation=ref_sub.rotation,
                          vclass=vclass_of_sub[members[0]],
                          members=members, h=ref_sub.rect.width / n, bc=bc)
        classes.append(cls)
        for sid in members:
            class_of_sub[sid] = cls.index

    # Union-find over edge slots of all classes.
    n_vert = (n + 1) * n
    n_horiz = n * (n + 1)
    per_class = n_vert + n_horiz
    total = per_class * len(classes)
    parent = np.arange(total)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    def slot_id(cls_idx, orient, i, j):
        base = per_class * cls_idx
        if orient == VERT:
            return base + i * n + j
        return base + n_vert + i * (n + 1) + j

    # Merge matching facets between same-rotation placements.
    for f in dec.facets.values():
        if f.kind != MATCH:
            continue
        a = dec.by_id[f.owner]
        b = dec.by_id[f.partners[0][0]]
        if a.id > b.id or a.rotation != b.rotation:
            continue
        ca, cb = class_of_sub[a.id], class_of_sub[b.id]
        for (oa, ia, ja), (ob, ib, jb) in zip(
                _side_slots(f.side, n), _side_slots(f.partners[0][1], n)):
            # Same rotation and same geometric orientation give equal
            # pullback signs, so the identification carries no sign.
            ra = unrot_edge(a.rotation, oa, ia, ja, n)
            rb = unrot_edge(b.rotation, ob, ib, jb, n)
            union(slot_id(ca, *ra[:3]), slot_id(cb, *rb[:3]))

    # Compress to edge ids, deterministic in slot order.
    rep_to_edge = {}
    edge_h = []
    vert = []
    horiz = []
    for c, cls in enumerate(classes):
        V = np.empty((n + 1, n), dtype=np.int64)
        H = np.empty((n, n + 1), dtype=np.int64)
        for i in range(n + 1):
            for j in range(n):
                r = find(slot_id(c, VERT, i, j))
                if r not in rep_to_edge:
                    rep_to_edge[r] = len(edge_h)
                    edge_h.append(cls.h)
                V[i, j] = rep_to_edge[r]
        for i in range(n):
            for j in range(n + 1):
                r = find(slot_id(c, HORIZ, i, j))
                if r not in rep_to_edge:
                    rep_to_edge[r] = len(edge_h)
                    edge_h.append(cls.h)
                H[i, j] = rep_to_edge[r]
        vert.append(V)
        horiz.append(H)

    return DofLayout(decomp=dec, n=n, vclasses=vclasses, classes=classes,
                     class_of_sub=class_of_sub, vclass_of_sub=vclass_of_sub,
                     vert=vert, horiz=horiz, nedges=len(edge_h),
                     edge_h=np.array(edge_h))


def initial_phase(layout: DofLayout, delta: float):
    """Per-vclass phase arrays: prescribed boundary values, 1.0 elsewhere."""
    fields = []
    for vc in layout.vclasses:
        v = np.ones((layout.n, layout.n))
        vals = np.where(np.isnan(vc.fixed_values), delta, vc.fixed_values)
        v[vc.fixed_mask] = vals[vc.fixed_mask]
        fields.append(v)
    return fields


class _RowBuilder:
    def __init__(self, ndofs):
        self.ndofs = ndofs
        self.rows = []
        self.cols = []
        self.vals = []
        self.b = []
        self.labels = []
        self._seen = set()

    def add(self, entries, label, bval=0.0, dedupe=False):
        if dedupe:
            key = (tuple(sorted((int(c), round(float(v), 14))
                                for c, v in entries)), round(float(bval), 14))
            if key in self._seen:
                return
            self._seen.add(key)
        r = len(self.b)
        for cidx, val in entries:
            self.rows.append(r)
            self.cols.append(int(cidx))
            self.vals.append(float(val))
        self.b.append(float(bval))
        self.labels.append(_LBL[label])

    def system(self):
        A = sp.csr_matrix(
            (self.vals, (self.rows, self.cols)),
            shape=(len(self.b), self.ndofs))
        A.sum_duplicates()
        return ConstraintSystem(A=A, b=np.asarray(self.b),
                                labels=np.asarray(self.labels, dtype=np.int8))


def assemble_force_balance(layout: DofLayout) -> ConstraintSystem:
    """Two rows per reference cell: componentwise Σ s_i h_i f_i = 0."""
    rb = _RowBuilder(layout.ndofs)
    n = layout.n
    for c, cls in enumerate(layout.classes):
        V, H = layout.vert[c], layout.horiz[c]
        h = cls.h
        for i in range(n):
            for j in range(n):
                around = [(V[i + 1, j], h), (V[i, j], -h),
                          (H[i, j + 1], h), (H[i, j], -h)]
                for comp in (0, 1):
                    rb.add([(2 * e + comp, w) for e, w in around], "force_x"
                           if comp == 0 else "force_y")
    return rb.system()


def assemble_torque_balance(layout: DofLayout) -> ConstraintSystem:
    """One row per cell: shear samples of σ21 balance those of σ12."""
    rb = _RowBuilder(layout.ndofs)
    n = layout.n
    for c in range(len(layout.classes)):
        V, H = layout.vert[c], layout.horiz[c]
        for i in range(n):
            for j in range(n):
                rb.add([(2 * V[i, j] + 1, 1.0), (2 * V[i + 1, j] + 1, 1.0),
                        (2 * H[i, j] + 0, -1.0), (2 * H[i, j + 1] + 0, -1.0)],
                       "torque")
    return rb.system()


def _geo_entries(layout, cls_idx, ref_slot, sign, comp):
    """Sparse entries of component `comp` of sign * R_k f_ref at a slot."""
    cls = layout.classes[cls_idx]
    orient, i, j = ref_slot
    edge = (layout.vert[cls_idx][i, j] if orient == VERT
            else layout.horiz[cls_idx][i, j])
    src, s = rot_components(cls.rotation)[comp]
    return [(2 * edge + src, sign * s)]


def assemble_coupling(layout: DofLayout) -> ConstraintSystem:
    """Rotation rows at matching facets, weak continuity at split facets."""
    rb = _RowBuilder(layout.ndofs)
    dec = layout.decomp
    n = layout.n

    for f in dec.facets.values():
        if f.kind == MATCH:
            a = dec.by_id[f.owner]
            b = dec.by_id[f.partners[0][0]]
            if a.rotation == b.rotation or a.id > b.id:
                continue
            ca, cb = layout.class_of_sub[a.id], layout.class_of_sub[b.id]
            for (oa, ia, ja), (ob, ib, jb) in zip(
                    _side_slots(f.side, n),
                    _side_slots(f.partners[0][1], n)):
                ra = unrot_edge(a.rotation, oa, ia, ja, n)
                rbk = unrot_edge(b.rotation, ob, ib, jb, n)
                for comp in (0, 1):
                    ent = (_geo_entries(layout, ca, ra[:3], ra[3], comp)
                           + [(c, -v) for c, v in _geo_entries(
                               layout, cb, rbk[:3], rbk[3], comp)])
                    rb.add(ent, "coupling_match", dedupe=True)
        elif f.kind == SPLITS:
            coarse = dec.by_id[f.owner]
            cc = layout.class_of_sub[coarse.id]
            h_c = coarse.rect.width / n
            fines = [dec.by_id[pid] for pid, _ in f.partners]
            fine_sides = [ps for _, ps in f.partners]
            h_f = fines[0].rect.width / n
            coarse_slots = _side_slots(f.side, n)
            fine_slots = [_side_slots(ps, n) for ps in fine_sides]
            for m, cslot in enumerate(coarse_slots):
                # Coarse edge m covers fine edges 2m', 2m'+1 of one partner.
                which = 0 if m < n // 2 else 1
                base = 2 * (m - which * (n // 2))
                fsub = fines[which]
                cf = layout.class_of_sub[fsub.id]
                rc = unrot_edge(coarse.rotation, *cslot, n)
                pair = [unrot_edge(fsub.rotation, *fine_slots[which][base + t], n)
                        for t in (0, 1)]
                for comp in (0, 1):
                    ent = [(c, h_c * v) for c, v in _geo_entries(
                        layout, cc, rc[:3], rc[3], comp)]
                    for rf in pair:
                        ent += [(c, -h_f * v) for c, v in _geo_entries(
                            layout, cf, rf[:3], rf[3], comp)]
                    rb.add(ent, "coupling_branch", dedupe=True)
    return rb.system()


def assemble_boundary(layout: DofLayout) -> ConstraintSystem:
    """Pinned boundary rows straight from the class signatures."""
    rb = _RowBuilder(layout.ndofs)
    for c, cls in enumerate(layout.classes):
        for slot in sorted(cls.bc):
            val = cls.bc[slot]
            orient, i, j = slot
            edge = (layout.vert[c][i, j] if orient == VERT
                    else layout.horiz[c][i, j])
            for comp in (0, 1):
                bval = 0.0 if val is None else float(val[comp])
                rb.add([(2 * edge + comp, 1.0)], "boundary", bval)
    return rb.system()


def assemble_system(layout: DofLayout, loads=None) -> ConstraintSystem:
    """Concatenate all row families (checking load compatibility first)."""
    if loads is not None:
        check_load_compatibility(layout.decomp, loads)
    parts = [
        assemble_force_balance(layout),
        assemble_torque_balance(layout),
        assemble_coupling(layout),
        assemble_boundary(layout),
    ]
    A = sp.vstack([p.A for p in parts], format="csr")
    b = np.concatenate([p.b for p in parts])
    labels = np.concatenate([p.labels for p in parts])
    return ConstraintSystem(A=A, b=b, labels=labels)


def _dedupe_exact_rows(sys: ConstraintSystem) -> ConstraintSystem:
    A = sys.A.tocsr()
    A.sort_indices()
    seen = {}
    keep = []
    for r in range(A.shape[0]):
        sl = slice(A.indptr[r], A.indptr[r + 1])
        key = (A.indices[sl].tobytes(), A.data[sl].tobytes(), sys.b[r])
        prev = seen.get(key)
        if prev is None:
            seen[key] = r
            keep.append(r)
    if len(keep) == A.shape[0]:
        return sys
    keep = np.asarray(keep)
    return ConstraintSystem(A=A[keep], b=sys.b[keep], labels=sys.labels[keep])


def reduce_rank(sys: ConstraintSystem, rank_tol: float = 1e-10,
                consistency_tol: float = 1e-10) -> ConstraintSystem:
    """Remove dependent rows until A has full row rank.

    Kernel vectors of Aᵀ are found by pivoted dense QR; per kernel vector the
    highest-index row with a significant coefficient is dropped, and the
    procedure repeats.  A kernel vector z with |zᵀb| > consistency_tol·‖b‖
    raises InconsistentSystemError.  Systems above the dense size cap are
    only deduplicated and flagged unreduced (the solver then uses an
    iterative method that tolerates redundancy).
    """
    sys = _dedupe_exact_rows(sys)
    if max(sys.A.shape) > REDUCE_DENSE_CAP:
        return ConstraintSystem(A=sys.A, b=sys.b, labels=sys.labels,
                                reduced=False)

    A = sys.A
    b = sys.b
    labels = sys.labels
    bnorm = np.linalg.norm(b)
    while True:
        dense = A.toarray()
        q, r, _ = scipy.linalg.qr(dense, pivoting=True)
        diag = np.abs(np.diag(r)) if r.size else np.array([])
        if diag.size == 0:
            rank = 0
        else:
            rank = int(np.sum(diag > rank_tol * max(diag[0], 1e-300)))
        if rank == A.shape[0]:
            return ConstraintSystem(A=A.tocsr(), b=b, labels=labels,
                                    reduced=True)
        kernel = q[:, rank:]
        drop = []
        for t in range(kernel.shape[1]):
            z = kernel[:, t]
            if abs(z @ b) > consistency_tol * max(bnorm, 1e-300):
                raise InconsistentSystemError(
                    "a dependent constraint row has a contradictory "
                    "right-hand side; the load cannot be realized")
            big = np.abs(z) > 1e-8 * np.abs(z).max()
            drop.append(int(np.nonzero(big)[0].max()))
        keep = np.setdiff1d(np.arange(A.shape[0]), np.unique(drop))
        A = A.tocsr()[keep]
        b = b[keep]
        labels = labels[keep]
