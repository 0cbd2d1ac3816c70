"""Per-cell phase optimization: two-well init, scalar Newton, sweeps.

The per-cell objective on one reference grid is

    J_C(v) = s/v + beta v + (eta/eps) (32/pi^2) (v - delta)(1 - v)
             + (eta eps / 4) sum_i (v - v_i)^2 / h^2

with one neighbor value per side.  Sides whose neighbors live on another
reference field (or wrap around a periodic lineup) enter through per-side
weights and target values supplied by the caller; a domain-boundary side is
a mirror and carries zero weight.

Cell updates find the global minimizer over [delta, 1]: stationary points
solve the cubic c3 v^3 + c2 v^2 - s = 0 obtained by multiplying dJ/dv by
v^2, the best of roots/endpoints/start is then polished by a safeguarded
Newton iteration on w = -log v.  Sweeps visit cells lexicographically by
default; the checkerboard schedule updates one fixed color at a time with
vectorized cell solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decomp import BOUNDARY, SPLITS
from .errors import DomainError, NoConvergenceError
from .gridmaps import rot_cell, rot_side, side_axis, unrot_cell

__all__ = [
    "TWO_WELL_COEF",
    "PhaseParams",
    "CellState",
    "cell_objective",
    "two_well_init",
    "two_well_init_field",
    "newton_cell",
    "gauss_seidel_sweep",
    "NeighborPlan",
    "build_neighbor_plan",
    "facet_side_data",
    "sweep_fields",
]

TWO_WELL_COEF = 32.0 / math.pi ** 2

_WTOL = 1e-10
_MAX_NEWTON = 50


@dataclass(frozen=True)
class PhaseParams:
    """Weights of the per-cell objective on one reference grid."""

    beta: float
    eta: float
    epsilon: float
    delta: float
    h: float

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.beta < 0 or self.eta < 0 or self.epsilon <= 0 or self.h <= 0:
            raise ValueError("beta, eta >= 0 and epsilon, h > 0 required")

    @property
    def well_coef(self) -> float:
        return self.eta / self.epsilon * TWO_WELL_COEF

    @property
    def grad_coef(self) -> float:
        return self.eta * self.epsilon / (4.0 * self.h ** 2)


@dataclass
class CellState:
    """Phase grid with its fixed mask and current stress magnitudes."""

    v: np.ndarray
    fixed: np.ndarray
    s: np.ndarray


def cell_objective(vc, s, neighbors, params: PhaseParams):
    """J_C at one cell given its four neighbor values."""
    if vc <= 0.0:
        raise DomainError(f"phase value {vc} is not positive")
    gc = params.grad_coef
    grad = sum((vc - vn) ** 2 for vn in neighbors)
    return (s / vc + params.beta * vc
            + params.well_coef * (vc - params.delta) * (1.0 - vc)
            + gc * grad)


def _cubic_roots_scalar(c3, c2, s):
    """Real roots of c3 v^3 + c2 v^2 - s = 0."""
    if abs(c3) < 1e-300:
        if c2 > 0.0 and s >= 0.0:
            return [math.sqrt(s / c2)]
        if c2 < 0.0 and s <= 0.0:
            return [math.sqrt(s / c2)]
        return []
    b = c2 / c3
    d = -s / c3
    p = -b * b / 3.0
    q = 2.0 * b ** 3 / 27.0 + d
    shift = -b / 3.0
    disc = 0.25 * q * q + p ** 3 / 27.0
    if disc > 0.0:
        r = math.sqrt(disc)
        y = math.copysign(abs(-0.5 * q + r) ** (1 / 3), -0.5 * q + r) + \
            math.copysign(abs(-0.5 * q - r) ** (1 / 3), -0.5 * q - r)
        return [y + shift]
    if p == 0.0:
        return [math.copysign(abs(q) ** (1 / 3), -q) + shift]
    m = 2.0 * math.sqrt(-p / 3.0)
    arg = 3.0 * q / (p * m)
    arg = min(1.0, max(-1.0, arg))
    phi = math.acos(arg) / 3.0
    return [m * math.cos(phi - 2.0 * math.pi * k / 3.0) + shift
            for k in range(3)]


def _minimize_scalar(v_init, s, sw, st, const, params: PhaseParams):
    """Global minimizer of s/v + B v + G W0(v) + sw v^2 - 2 st v + const."""
    B, G, delta = params.beta, params.well_coef, params.delta

    def val(v):
        return (s / v + B * v + G * (v - delta) * (1.0 - v)
                + sw * v * v - 2.0 * st * v + const)

    def dv(v):
        return (-s / (v * v) + B + G * (1.0 + delta) - 2.0 * G * v
                + 2.0 * sw * v - 2.0 * st)

    def d2v(v):
        return 2.0 * s / v ** 3 - 2.0 * G + 2.0 * sw

    c3 = 2.0 * (sw - G)
    c2 = B + G * (1.0 + delta) - 2.0 * st
    cands = [v_init, delta, 1.0]
    cands += [min(1.0, max(delta, r)) for r in _cubic_roots_scalar(c3, c2, s)
              if math.isfinite(r)]
    best = min(cands, key=val)
    best_j = val(best)

    # Safeguarded Newton on w = -log v over [0, log(1/delta)].
    whi = math.log(1.0 / delta)
    w = min(whi, max(0.0, -math.log(best)))
    lo, hi = 0.0, whi
    for _ in range(_MAX_NEWTON):
        v = math.exp(-w)
        j = val(v)
        if j < best_j:
            best_j, best = j, v
        g = -v * dv(v)
        if abs(g) <= _WTOL * (1.0 + abs(j)):
            break
        if not math.isfinite(g):
            raise NoConvergenceError("non-finite derivative in cell solve")
        if g > 0.0:
            hi = w
        else:
            lo = w
        h2 = v * dv(v) + v * v * d2v(v)
        wn = w - g / h2 if h2 > 0.0 else math.nan
        if not math.isfinite(wn) or wn < lo or wn > hi:
            wn = 0.5 * (lo + hi)
        if wn == w:
            break
        w = wn
    v = math.exp(-w)
    if val(v) < best_j:
        best = v
    return min(1.0, max(params.delta, best))


def two_well_init(s, params: PhaseParams):
    """Best of the (at most two) local minima of the neighbor-free J_C."""
    if s < 0:
        raise DomainError("stress magnitude must be nonnegative")
    return _minimize_scalar(1.0, s, 0.0, 0.0, 0.0, params)


def two_well_init_field(s, params: PhaseParams) -> np.ndarray:
    """Vectorized two_well_init over an array of stress magnitudes."""
    s = np.asarray(s, dtype=float)
    zeros = np.zeros_like(s)
    return _minimize_cells(np.ones_like(s), s, zeros, zeros, zeros, params)


def newton_cell(v_init, s, neighbors, params: PhaseParams):
    """Minimize J_C over [delta, 1] from v_init at fixed neighbor values."""
    if not (params.delta <= v_init <= 1.0):
        raise DomainError(f"start value {v_init} outside [delta, 1]")
    gc = params.grad_coef
    sw = gc * len(neighbors)
    st = gc * sum(neighbors)
    const = gc * sum(vn * vn for vn in neighbors)
    return _minimize_scalar(float(v_init), float(s), sw, st, const, params)


def _cubic_roots(c3, c2, s):
    """Vectorized real roots of c3 v^3 + c2 v^2 - s = 0, NaN-padded (..., 3)."""
    c3 = np.asarray(c3, dtype=float)
    c2, s = np.broadcast_to(c2, c3.shape), np.broadcast_to(s, c3.shape)
    out = np.full(c3.shape + (3,), np.nan)

    lin = np.abs(c3) < 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = np.where(c2 != 0.0, s / c2, np.nan)
        out[..., 0] = np.where(lin & (quad >= 0.0), np.sqrt(np.abs(quad)),
                               out[..., 0])

        b = np.where(lin, 1.0, c2 / np.where(lin, 1.0, c3))
        d = np.where(lin, 0.0, -s / np.where(lin, 1.0, c3))
        p = -b * b / 3.0
        q = 2.0 * b ** 3 / 27.0 + d
        shift = -b / 3.0
        disc = 0.25 * q * q + p ** 3 / 27.0

        one = ~lin & (disc > 0.0)
        r = np.sqrt(np.where(one, disc, 1.0))
        t1 = np.cbrt(-0.5 * q + r)
        t2 = np.cbrt(-0.5 * q - r)
        out[..., 0] = np.where(one, t1 + t2 + shift, out[..., 0])

        three = ~lin & (disc <= 0.0)
        psafe = np.where(p < 0.0, p, -1.0)
        m = 2.0 * np.sqrt(-psafe / 3.0)
        arg = np.clip(3.0 * q / (psafe * m), -1.0, 1.0)
        phi = np.arccos(arg) / 3.0
        for k in range(3):
            yk = m * np.cos(phi - 2.0 * np.pi * k / 3.0) + shift
            out[..., k] = np.where(three & (p < 0.0), yk, out[..., k])
        cusp = three & (p >= 0.0)
        out[..., 0] = np.where(cusp, np.cbrt(-q) + shift, out[..., 0])
    return out


def _minimize_cells(v_init, s, sw, st, const, params: PhaseParams):
    """Vectorized counterpart of _minimize_scalar."""
    B, G, delta = params.beta, params.well_coef, params.delta
    v_init = np.asarray(v_init, dtype=float)
    s = np.asarray(s, dtype=float)

    def val(v):
        return (s / v + B * v + G * (v - delta) * (1.0 - v)
                + sw * v * v - 2.0 * st * v + const)

    def dv(v):
        return (-s / (v * v) + B + G * (1.0 + delta) - 2.0 * G * v
                + 2.0 * sw * v - 2.0 * st)

    def d2v(v):
        return 2.0 * s / v ** 3 - 2.0 * G + 2.0 * sw

    c3 = np.broadcast_to(2.0 * (sw - G), v_init.shape)
    c2 = B + G * (1.0 + delta) - 2.0 * st
    roots = np.clip(np.nan_to_num(_cubic_roots(c3, c2, s), nan=1.0),
                    delta, 1.0)
    cands = np.stack([v_init,
                      np.full_like(v_init, delta),
                      np.ones_like(v_init),
                      roots[..., 0], roots[..., 1], roots[..., 2]])
    js = val(cands)
    pick = np.argmin(js, axis=0)
    best = np.take_along_axis(cands, pick[None], 0)[0]
    best_j = np.take_along_axis(js, pick[None], 0)[0]

    whi = math.log(1.0 / delta)
    w = np.clip(-np.log(best), 0.0, whi)
    lo = np.zeros_like(w)
    hi = np.full_like(w, whi)
    done = np.zeros(w.shape, dtype=bool)
    for _ in range(_MAX_NEWTON):
        v = np.exp(-w)
        j = val(v)
        upd = j < best_j
        best = np.where(upd, v, best)
        best_j = np.where(upd, j, best_j)
        g = -v * dv(v)
        done |= np.abs(g) <= _WTOL * (1.0 + np.abs(j))
        if done.all():
            break
        pos = ~done & (g > 0.0)
        neg = ~done & (g <= 0.0)
        hi = np.where(pos, w, hi)
        lo = np.where(neg, w, lo)
        h2 = v * dv(v) + v * v * d2v(v)
        with np.errstate(divide="ignore", invalid="ignore"):
            wn = w - g / h2
        bad = ~np.isfinite(wn) | (wn < lo) | (wn > hi) | (h2 <= 0.0)
        wn = np.where(bad, 0.5 * (lo + hi), wn)
        done |= wn == w
        w = np.where(done, w, wn)
    v = np.exp(-w)
    j = val(v)
    best = np.where(j < best_j, v, best)
    return np.clip(best, delta, 1.0)


def _border_sides(n, gc, v, side_weights, side_targets):
    """Per-direction (weight, target) arrays for one grid.

    Directions are (left, right, bottom, top) of each cell; in-grid
    neighbors carry weight gc, grid-border sides use the supplied per-side
    weight and target row (mirror when absent).
    """
    W = np.empty((4, n, n))
    T = np.empty((4, n, n))
    specs = (("left", 0), ("right", 0), ("bottom", 1), ("top", 1))
    for d, (side, axis) in enumerate(specs):
        W[d] = gc
        if side == "left":
            T[d, 1:, :] = v[:-1, :]
            edge = (0, slice(None))
        elif side == "right":
            T[d, :-1, :] = v[1:, :]
            edge = (n - 1, slice(None))
        elif side == "bottom":
            T[d, :, 1:] = v[:, :-1]
            edge = (slice(None), 0)
        else:
            T[d, :, :-1] = v[:, 1:]
            edge = (slice(None), n - 1)
        wside = side_weights.get(side, 0.0) if side_weights else 0.0
        tside = side_targets.get(side) if side_targets else None
        W[d][edge] = gc * wside
        T[d][edge] = v[edge] if tside is None else tside
    return W, T


def gauss_seidel_sweep(state: CellState, params: PhaseParams,
                       side_weights=None, side_targets=None,
                       schedule: str = "lex"):
    """One sweep of per-cell minimizations; returns (state, max |change|).

    ``side_weights``/``side_targets`` supply cross-facet neighbor data per
    reference side as weight fractions and value rows; absent sides mirror.
    Fixed cells are never touched.
    """
    v = state.v
    n = v.shape[0]
    gc = params.grad_coef
    free = ~state.fixed
    max_change = 0.0

    if schedule == "lex":
        W, T = _border_sides(n, gc, v, side_weights, side_targets)
        for i in range(n):
            for j in range(n):
                if not free[i, j]:
                    continue
                sw = st = const = 0.0
                for d in range(4):
                    wk = W[d, i, j]
                    if wk == 0.0:
                        continue
                    if d == 0 and i > 0:
                        tk = v[i - 1, j]
                    elif d == 1 and i < n - 1:
                        tk = v[i + 1, j]
                    elif d == 2 and j > 0:
                        tk = v[i, j - 1]
                    elif d == 3 and j < n - 1:
                        tk = v[i, j + 1]
                    else:
                        tk = T[d, i, j]
                    sw += wk
                    st += wk * tk
                    const += wk * tk * tk
                new = _minimize_scalar(v[i, j], state.s[i, j], sw, st,
                                       const, params)
                max_change = max(max_change, abs(new - v[i, j]))
                v[i, j] = new
        return state, max_change

    if schedule != "redblack":
        raise ValueError(f"unknown sweep schedule {schedule!r}")

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    for color in (0, 1):
        mask = free & ((ix + iy) % 2 == color)
        if not mask.any():
            continue
        W, T = _border_sides(n, gc, v, side_weights, side_targets)
        sw = W.sum(axis=0)
        st = (W * T).sum(axis=0)
        const = (W * T * T).sum(axis=0)
        new = _minimize_cells(v[mask], state.s[mask], sw[mask], st[mask],
                              const[mask], params)
        change = np.abs(new - v[mask])
        if change.size:
            max_change = max(max_change, float(change.max()))
        v[mask] = new
    return state, max_change


@dataclass
class NeighborPlan:
    """Cross-facet gather recipes, one entry per (vclass, reference side).

    Each entry holds the geometric edge count per member (a coarse side
    over a split carries two edges per cell) and flat gather arrays
    (source vclass, source cell, border slot, weight); mirror sides
    contribute nothing.
    """

    sides: dict


def _ref_side_cell(side, t, n):
    if side == "left":
        return 0, t
    if side == "right":
        return n - 1, t
    if side == "bottom":
        return t, 0
    return t, n - 1


def _partner_cells(dec, facet, pos, h, n):
    """(partner id, local cell, weight) entries across one facet at pos.

    One entry per geometric edge: a splits facet contributes both fine
    edges under the coarse cell at full weight, so edge sums count every
    interface edge exactly once from each side.
    """
    out = []
    if facet.kind == SPLITS:
        probes = [(pos - 0.25 * h, 1.0), (pos + 0.25 * h, 1.0)]
    else:
        probes = [(pos, 1.0)]
    for p, wt in probes:
        for pid, pside in facet.partners:
            q = dec.by_id[pid]
            hq = q.rect.width / n
            _, qlo, qhi = q.rect.side_segment(pside)
            if not (qlo - 1e-12 <= p <= qhi + 1e-12):
                continue
            idx = min(n - 1, max(0, int((p - qlo) / hq)))
            qcell = _ref_side_cell(pside, idx, n)
            out.append((pid, qcell, wt))
            break
    return out


def build_neighbor_plan(layout) -> NeighborPlan:
    """Precompute cross-facet neighbor gathers for every reference side."""
    dec = layout.decomp
    n = layout.n
    sides = {}
    for vci, vc in enumerate(layout.vclasses):
        nm = len(vc.members)
        for sref in ("left", "right", "bottom", "top"):
            coupled = 0
            srcs = []  # (qvc, ci, cj, t, wt)
            for sid in vc.members:
                sub = dec.by_id[sid]
                k = sub.rotation
                h = sub.rect.width / n
                sgeo = rot_side(k, sref)
                facet = dec.facet(sid, sgeo)
                if facet.kind == BOUNDARY:
                    continue
                coupled += 2 if facet.kind == SPLITS else 1
                axis = side_axis(sgeo)
                _, slo, _ = sub.rect.side_segment(sgeo)
                for t in range(n):
                    ci, cj = _ref_side_cell(sref, t, n)
                    gi, gj = rot_cell(k, ci, cj, n)
                    m = gj if axis == 1 else gi
                    pos = slo + (m + 0.5) * h
                    for pid, qcell, wt in _partner_cells(
                            dec, facet, pos, h, n):
                        qsub = dec.by_id[pid]
                        rc = unrot_cell(qsub.rotation, *qcell, n)
                        srcs.append((layout.vclass_of_sub[pid],
                                     rc[0], rc[1], t, wt))
            if srcs:
                arr = np.array(srcs)
                sides[(vci, sref)] = (coupled / nm, coupled,
                                      arr[:, 0].astype(int),
                                      arr[:, 1].astype(int),
                                      arr[:, 2].astype(int),
                                      arr[:, 3].astype(int), arr[:, 4])
            else:
                sides[(vci, sref)] = (0.0, 0, None, None, None, None, None)
    return NeighborPlan(sides=sides)


def facet_side_data(plan: NeighborPlan, layout, vfields, vci):
    """Materialize (side_weights, side_targets) for one vclass."""
    n = layout.n
    weights = {}
    targets = {}
    for side in ("left", "right", "bottom", "top"):
        frac, ncoup, qvc, ci, cj, t, wt = plan.sides[(vci, side)]
        weights[side] = frac
        if ncoup == 0:
            targets[side] = None
            continue
        acc = np.zeros(n)
        vals = np.array([vfields[q][a, b] for q, a, b in zip(qvc, ci, cj)])
        np.add.at(acc, t, wt * vals)
        targets[side] = acc / ncoup
    return weights, targets


def sweep_fields(layout, vfields, s_fields, params_list, schedule="lex",
                 max_sweeps=50, sweep_tol=1e-8):
    """Sweep all reference phase fields until quiet; returns (count, change).

    One composite sweep visits every vclass in index order with cross-facet
    targets snapshotted at its start.  Repeats until the largest cell change
    drops below ``sweep_tol`` or ``max_sweeps`` is reached.
    """
    plan = build_neighbor_plan(layout)
    states = [CellState(v=vfields[i], fixed=layout.vclasses[i].fixed_mask,
                        s=s_fields[i]) for i in range(len(layout.vclasses))]
    sweeps = 0
    change = math.inf
    while sweeps < max_sweeps and change > sweep_tol:
        change = 0.0
        for vci, st in enumerate(states):
            sw_w, sw_t = facet_side_data(plan, layout, vfields, vci)
            _, ch = gauss_seidel_sweep(st, params_list[vci], sw_w, sw_t,
                                       schedule)
            change = max(change, ch)
        sweeps += 1
    return sweeps, change
