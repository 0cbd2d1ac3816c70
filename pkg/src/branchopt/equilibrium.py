"""Compliance-weighted equilibrium solves on the shared-dof layout.

The state problem is min ½ fᵀ M f subject to A f = b with diagonal M built
from the phase field.  It is solved through the dual system
Z λ = b, Z = A M⁻¹ Aᵀ, f = M⁻¹ Aᵀ λ: directly when the rows were reduced to
full rank, iteratively (MINRES with a shifted factorized preconditioner)
when the system was too large to reduce and may retain redundant rows.

An edge's weight sums h²/v over its incident cells, counted once per
placement sharing the class, so ½ fᵀ M f is the elastic energy of the whole
structure and equals the per-cell sum of s(C)/v(C).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph

from .assembly import ConstraintSystem, DofLayout
from .errors import (
    FactorizationFailure,
    NoConvergenceError,
    PhaseOutOfRangeError,
)
from .gridmaps import rot_matrix, unrot_cell

__all__ = [
    "ComplianceWeights",
    "ForceField",
    "SolverCache",
    "build_weights",
    "solve_state",
    "elastic_energy",
    "stress_tensors",
    "cell_stress",
    "stress_magnitudes",
    "vclass_stress_magnitudes",
]


@dataclass
class ComplianceWeights:
    """Diagonal of M, one entry per scalar dof, plus the per-edge halves."""

    diag: np.ndarray
    edge: np.ndarray


@dataclass
class ForceField:
    f: np.ndarray
    lam: np.ndarray


@dataclass
class SolverCache:
    """Reusable pieces of the iterative dual solve across repeated calls.

    The sparsity pattern of A M⁻¹ Aᵀ is fixed while the phase field evolves,
    so the fill-reducing ordering is computed once, and the most recent
    factorization keeps serving as preconditioner while the weights stay
    close to the ones it was built from.  With ρ the entrywise ratio of old
    to new weights, the preconditioned spectrum lies in [min ρ, max ρ];
    reuse is attempted only when that spread stays below ``stale_spread``,
    and ``stale_budget`` caps the MINRES iterations granted to it.
    """

    perm: np.ndarray | None = None
    iperm: np.ndarray | None = None
    factor: object | None = None
    mdiag: np.ndarray | None = None
    lam: np.ndarray | None = None
    stale_budget: int = 100
    stale_spread: float = 16.0


def build_weights(vfields, layout: DofLayout, delta=None) -> ComplianceWeights:
    """Diagonal compliance weights h²/v summed over edge-cell incidences.

    ``vfields`` holds one (n, n) phase array per vclass.  Values must lie in
    [delta, 1] (in (0, 1] when delta is not given).
    """
    n = layout.n
    floor = 0.0 if delta is None else delta
    medge = np.zeros(layout.nedges)
    for c, cls in enumerate(layout.classes):
        v = np.asarray(vfields[cls.vclass])
        if v.shape != (n, n):
            raise ValueError(f"phase field for class {c} has shape {v.shape}")
        if np.any(v < floor) or np.any(v > 1.0) or (delta is None
                                                    and np.any(v <= 0.0)):
            raise PhaseOutOfRangeError(
                f"phase values outside [{floor}, 1] in class {c}")
        w = (len(cls.members) * cls.h ** 2) / v
        V, H = layout.vert[c], layout.horiz[c]
        for grid in (V[:n, :], V[1:, :], H[:, :n], H[:, 1:]):
            np.add.at(medge, grid.ravel(), w.ravel())
    return ComplianceWeights(diag=np.repeat(medge, 2), edge=medge)


def _dual_matrix(A: sp.csr_matrix, M: ComplianceWeights) -> sp.csc_matrix:
    D = sp.diags(1.0 / M.diag)
    return (A @ D @ A.T).tocsc()


def _primal_from_dual(A, M, lam):
    return (A.T @ lam) / M.diag


_ND_LEAF = 400


def _nd_permutation(Z) -> np.ndarray:
    """Fill-reducing row order by recursive bisection along BFS level sets.

    SuperLU's built-in column orderings either blow up the fill on this
    symmetric pattern (COLAMD) or exhaust memory computing the order
    itself, so the factorization runs in symmetric mode on a matrix
    pre-permuted with this dissection order.
    """
    G = Z.tocsr().copy()
    G.data = np.ones_like(G.data)
    out = []

    def visit(nodes, sub):
        nn = len(nodes)
        if nn <= _ND_LEAF:
            out.extend(nodes.tolist())
            return
        d = csgraph.dijkstra(sub, directed=False, indices=0, unweighted=True)
        finite = np.isfinite(d)
        if not finite.all():
            rest = ~finite
            visit(nodes[finite], sub[finite][:, finite])
            visit(nodes[rest], sub[rest][:, rest])
            return
        # Second pass from the far end gives a pseudo-diameter level split.
        d = csgraph.dijkstra(sub, directed=False, indices=int(np.argmax(d)),
                             unweighted=True)
        level = d.astype(np.intp)
        if level.max() < 2:
            out.extend(nodes.tolist())
            return
        mid = int(level.max()) // 2
        lo = np.nonzero(level < mid)[0]
        hi = np.nonzero(level > mid)[0]
        if max(len(lo), len(hi)) > 0.95 * nn:
            out.extend(nodes[np.argsort(level, kind="stable")].tolist())
            return
        for idx in (lo, hi):
            visit(nodes[idx], sub[idx][:, idx])
        out.extend(nodes[level == mid].tolist())

    visit(np.arange(Z.shape[0]), G)
    return np.asarray(out, dtype=np.intp)


def _shifted_factor(Z, perm):
    shift = 1e-8 * Z.diagonal().max()
    Zs = (Z + shift * sp.identity(Z.shape[0])).tocsc()
    Zp = Zs[perm][:, perm].tocsc()
    return spla.splu(Zp, permc_spec="NATURAL",
                     options=dict(SymmetricMode=True, DiagPivotThresh=1e-3))


def solve_state(sys: ConstraintSystem, M: ComplianceWeights,
                residual_tol: float = 1e-9,
                cache: SolverCache | None = None) -> ForceField:
    """Solve the constrained minimum-compliance state problem.

    Reduced systems go through a sparse direct factorization of
    Z = A M⁻¹ Aᵀ; unreduced ones through preconditioned MINRES, which
    tolerates the redundant (consistent) rows.  Passing a ``cache`` lets a
    sequence of solves on the same layout share the fill-reducing ordering
    and reuse the previous factorization as preconditioner.  Raises
    FactorizationFailure when the direct factorization breaks down,
    signalling the caller to redo the rank reduction, and
    NoConvergenceError when the iterative solve cannot reach the
    feasibility residual.
    """
    A = sys.A
    b = sys.b
    if b.size == 0:
        return ForceField(f=np.zeros(A.shape[1]), lam=np.zeros(0))
    Z = _dual_matrix(A, M)

    if sys.reduced:
        try:
            lu = spla.splu(Z)
            lam = lu.solve(b)
        except RuntimeError as exc:
            raise FactorizationFailure(
                f"direct factorization of the dual matrix failed: {exc}")
        if not np.all(np.isfinite(lam)):
            raise FactorizationFailure(
                "direct dual solve produced non-finite multipliers")
        f = _primal_from_dual(A, M, lam)
        resid = np.abs(A @ f - b).max()
        if resid > residual_tol * (1.0 + np.abs(b).max()):
            raise FactorizationFailure(
                f"feasibility residual {resid:.3e} after direct solve; "
                f"the reduced system is likely still rank deficient")
        return ForceField(f=f, lam=lam)

    # Iterative path: Z is symmetric positive semidefinite and b lies in
    # its range whenever the constraints are consistent.  MINRES tracks
    # convergence in the preconditioned norm, so only preconditioners
    # sharing Z's eigenbasis are trustworthy; a shifted factorization of
    # the dual itself qualifies, and a slightly stale one still does
    # approximately, which the true-residual check below keeps honest.
    if cache is None:
        cache = SolverCache()
    n = Z.shape[0]
    if cache.perm is None or cache.perm.size != n:
        cache.perm = _nd_permutation(Z)
        cache.iperm = np.empty(n, dtype=np.intp)
        cache.iperm[cache.perm] = np.arange(n)
        cache.factor = None
        cache.lam = None
    tol = residual_tol * (1.0 + np.abs(b).max())

    def attempt(maxiter, x0):
        factor, perm, iperm = cache.factor, cache.perm, cache.iperm
        P = spla.LinearOperator(
            Z.shape, matvec=lambda x: factor.solve(x[perm])[iperm])
        lam, _ = spla.minres(Z, b, M=P, x0=x0, rtol=1e-13, maxiter=maxiter)
        f = _primal_from_dual(A, M, lam)
        return lam, f, np.abs(A @ f - b).max()

    if cache.factor is not None:
        ratio = cache.mdiag / M.diag
        if ratio.max() <= cache.stale_spread * ratio.min():
            lam, f, resid = attempt(cache.stale_budget, cache.lam)
            if resid <= tol:
                cache.lam = lam
                return ForceField(f=f, lam=lam)
        cache.factor = None
    try:
        cache.factor = _shifted_factor(Z, cache.perm)
        cache.mdiag = M.diag.copy()
    except (RuntimeError, MemoryError) as exc:
        raise FactorizationFailure(
            f"preconditioner factorization failed: {exc}")
    lam, f, resid = attempt(2000, None)
    if resid > tol:
        raise NoConvergenceError(
            f"iterative dual solve stalled at residual {resid:.3e}")
    cache.lam = lam
    return ForceField(f=f, lam=lam)


def elastic_energy(field: ForceField, M: ComplianceWeights) -> float:
    """½ fᵀ M f, the stored energy of the whole structure."""
    f = field.f
    return 0.5 * float(f @ (M.diag * f))


def _cell_slot_values(layout, c, f):
    """Per-cell edge vectors: arrays L, R, B, T of shape (n, n, 2)."""
    n = layout.n
    V, H = layout.vert[c], layout.horiz[c]
    fv = f.reshape(-1, 2)
    return fv[V[:n, :]], fv[V[1:, :]], fv[H[:, :n]], fv[H[:, 1:]]


def stress_tensors(layout: DofLayout, field: ForceField):
    """Per class: (n, n, 2, 2) symmetric tensors in the reference frame.

    Normal components average the two opposing edge values; the shear
    component averages the four tangential samples.
    """
    out = []
    for c in range(len(layout.classes)):
        L, R, B, T = _cell_slot_values(layout, c, field.f)
        s11 = 0.5 * (L[..., 0] + R[..., 0])
        s22 = 0.5 * (B[..., 1] + T[..., 1])
        s12 = 0.25 * (L[..., 1] + R[..., 1] + B[..., 0] + T[..., 0])
        sig = np.empty(s11.shape + (2, 2))
        sig[..., 0, 0] = s11
        sig[..., 1, 1] = s22
        sig[..., 0, 1] = s12
        sig[..., 1, 0] = s12
        out.append(sig)
    return out


def cell_stress(layout: DofLayout, field: ForceField, sub_id: int,
                ix: int, iy: int) -> np.ndarray:
    """Stress tensor of one geometric cell, rotated into world axes."""
    c = layout.class_of_sub[sub_id]
    k = layout.classes[c].rotation
    rx, ry = unrot_cell(k, ix, iy, layout.n)
    sig = stress_tensors(layout, field)[c][rx, ry]
    R = rot_matrix(k)
    return R @ sig @ R.T


def stress_magnitudes(layout: DofLayout, field: ForceField):
    """Per class: s(C) = (h²/2) Σ over the cell's 8 edge components f²."""
    out = []
    for c, cls in enumerate(layout.classes):
        L, R, B, T = _cell_slot_values(layout, c, field.f)
        total = (L ** 2 + R ** 2 + B ** 2 + T ** 2).sum(axis=-1)
        out.append(0.5 * cls.h ** 2 * total)
    return out


def vclass_stress_magnitudes(layout: DofLayout, field: ForceField):
    """Per vclass: member-weighted mean of s(C) over its stress classes.

    The sweep objective of a shared phase cell sees the average stress load
    of all placements carrying that cell.
    """
    per_class = stress_magnitudes(layout, field)
    sums = [np.zeros((layout.n, layout.n)) for _ in layout.vclasses]
    counts = [0 for _ in layout.vclasses]
    for c, cls in enumerate(layout.classes):
        sums[cls.vclass] += len(cls.members) * per_class[c]
        counts[cls.vclass] += len(cls.members)
    return [s / max(k, 1) for s, k in zip(sums, counts)]
