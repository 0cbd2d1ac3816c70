"""Alternating descent: state solves and phase sweeps until the field quiets.

The reported objective is

    J = E + beta V + eta L,
    E = sum_C mult s(C)/v(C),          V = sum_C mult h^2 v(C),
    L = sum_C mult (h^2/eps)(32/pi^2)(v - delta)(1 - v)
        + (eps/2) sum_{interior edges} (v_a - v_b)^2

with the edge sum running over geometric cell edges at the finest local
resolution.  Sweeps run on per-reference parameters (beta h^2,
sqrt(2) eta h^2, sqrt(2) eps) chosen so that each per-cell minimization is
an exact coordinate descent step of J at fixed forces, and the state solve
minimizes J exactly at fixed v.

Each outer iteration re-initializes free cells from the two-well rule by
default; ``warm_start`` keeps the previous field instead.  Re-seeding is
not itself a descent step, so the recorded J is checked and any rise past
1e-10 raises a NonMonotoneWarning.  The stopping test is the weighted L2
distance between consecutive post-sweep fields.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_system, index_dofs, initial_phase, reduce_rank
from .config import RunConfig
from .equilibrium import (
    SolverCache,
    build_weights,
    solve_state,
    vclass_stress_magnitudes,
)
from .errors import FactorizationFailure, NonMonotoneWarning
from .phasefield import (
    TWO_WELL_COEF,
    PhaseParams,
    build_neighbor_plan,
    sweep_fields,
    two_well_init_field,
)

__all__ = [
    "IterationRecord",
    "DescentReport",
    "sweep_parameters",
    "total_objective",
    "alternate_descent",
]

_MONOTONE_TOL = 1e-10


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    elastic: float
    volume: float
    perimeter: float
    total: float
    dv_l2: float


@dataclass
class DescentReport:
    """Everything a finished (or aborted) run leaves behind."""

    records: list
    converged: bool
    layout: object
    vfields: list
    force: object
    s_fields: list
    system: object
    epsilon: float
    config: RunConfig
    components: dict = field(default_factory=dict)


def default_epsilon(layout) -> float:
    """Twice the finest cell size across all reference grids."""
    return 2.0 * min(vc.h for vc in layout.vclasses)


def sweep_parameters(cfg: RunConfig, layout, epsilon: float):
    """Per-reference sweep parameters equivalent to descent on J.

    The cell measure h^2 scales the local terms and the edge terms lose
    their 1/h^2, which lands on (beta h^2, sqrt(2) eta h^2, sqrt(2) eps).
    """
    out = []
    for vc in layout.vclasses:
        h = vc.h
        out.append(PhaseParams(beta=cfg.beta * h * h,
                               eta=math.sqrt(2.0) * cfg.eta * h * h,
                               epsilon=math.sqrt(2.0) * epsilon,
                               delta=cfg.delta,
                               h=h))
    return out


def total_objective(layout, plan, vfields, s_fields, beta, eta, epsilon,
                    delta):
    """(J, components) of the composite objective at the current fields."""
    elastic = volume = well = grad = 0.0
    for vci, vc in enumerate(layout.vclasses):
        v = vfields[vci]
        mult = len(vc.members)
        h2 = vc.h * vc.h
        elastic += mult * float((s_fields[vci] / v).sum())
        volume += mult * h2 * float(v.sum())
        well += mult * (h2 / epsilon) * TWO_WELL_COEF * float(
            ((v - delta) * (1.0 - v)).sum())
        # In-grid edges, twice each (once per incident cell).
        grad += 2.0 * mult * (float(((v[1:, :] - v[:-1, :]) ** 2).sum())
                              + float(((v[:, 1:] - v[:, :-1]) ** 2).sum()))
        # Facet edges, once per (member, edge) from each side.
        for side in ("left", "right", "bottom", "top"):
            _, ncoup, qvc, ci, cj, t, wt = plan.sides[(vci, side)]
            if ncoup == 0:
                continue
            own = _border_values(v, side)[t]
            other = np.array(
                [vfields[q][a, b] for q, a, b in zip(qvc, ci, cj)])
            grad += float((wt * (own - other) ** 2).sum())
    perimeter = well + 0.25 * epsilon * grad
    total = elastic + beta * volume + eta * perimeter
    return total, {"elastic": elastic, "volume": volume,
                   "perimeter": perimeter, "total": total}


def _border_values(v, side):
    if side == "left":
        return v[0, :]
    if side == "right":
        return v[-1, :]
    if side == "bottom":
        return v[:, 0]
    return v[:, -1]


def _dv_l2(layout, new, old) -> float:
    acc = 0.0
    for vci, vc in enumerate(layout.vclasses):
        w = len(vc.members) * vc.h * vc.h
        acc += w * float(((new[vci] - old[vci]) ** 2).sum())
    return math.sqrt(acc)


def alternate_descent(cfg: RunConfig) -> DescentReport:
    """Run the full optimization loop on one configuration."""
    layout = index_dofs(cfg.decomposition, cfg.n_cells, cfg.loads)
    raw = assemble_system(layout, cfg.loads)
    system = reduce_rank(raw)
    plan = build_neighbor_plan(layout)
    epsilon = cfg.epsilon if cfg.epsilon is not None else default_epsilon(layout)
    params = sweep_parameters(cfg, layout, epsilon)

    vfields = initial_phase(layout, cfg.delta)
    v_prev = [v.copy() for v in vfields]
    records = []
    converged = False
    force = None
    s_fields = None
    components = {}
    prev_total = math.inf
    rank_tol = 1e-10
    solver_cache = SolverCache()

    for it in range(1, cfg.max_iters + 1):
        weights = build_weights(vfields, layout, cfg.delta)
        try:
            force = solve_state(system, weights, cache=solver_cache)
        except FactorizationFailure:
            rank_tol *= 100.0
            system = reduce_rank(raw, rank_tol=rank_tol)
            solver_cache = SolverCache()
            force = solve_state(system, weights, cache=solver_cache)
        s_fields = vclass_stress_magnitudes(layout, force)

        if it == 1 or not cfg.warm_start:
            for vci, vc in enumerate(layout.vclasses):
                free = ~vc.fixed_mask
                init = two_well_init_field(s_fields[vci], params[vci])
                vfields[vci][free] = init[free]

        sweep_fields(layout, vfields, s_fields, params,
                     schedule=cfg.schedule, max_sweeps=cfg.max_sweeps,
                     sweep_tol=cfg.sweep_tol)

        total, components = total_objective(
            layout, plan, vfields, s_fields, cfg.beta, cfg.eta, epsilon,
            cfg.delta)
        dv = _dv_l2(layout, vfields, v_prev)
        records.append(IterationRecord(
            iteration=it, elastic=components["elastic"],
            volume=components["volume"], perimeter=components["perimeter"],
            total=total, dv_l2=dv))
        if total > prev_total + _MONOTONE_TOL:
            warnings.warn(
                f"objective rose from {prev_total:.12g} to {total:.12g} "
                f"on iteration {it}", NonMonotoneWarning, stacklevel=2)
        prev_total = total

        if dv <= cfg.stop_tol:
            converged = True
            break
        v_prev = [v.copy() for v in vfields]

    return DescentReport(records=records, converged=converged, layout=layout,
                         vfields=vfields, force=force, s_fields=s_fields,
                         system=system, epsilon=epsilon, config=cfg,
                         components=components)
