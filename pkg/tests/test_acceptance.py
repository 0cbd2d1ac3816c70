"""End-to-end acceptance checks.

Each test covers one shipped guarantee at its stated tolerance and prints a
single PASS/FAIL line (run with ``pytest -s`` to see them).  The two
branching runs at the end are the slow ones; everything else is desk-scale.
"""

import dataclasses
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.ndimage

from branchopt.assembly import (
    ROW_LABELS,
    assemble_system,
    index_dofs,
    initial_phase,
    reduce_rank,
)
from branchopt.config import (
    BoundaryLoad,
    LoadCase,
    RunConfig,
    load_run_config,
)
from branchopt.decomp import Rect, SubdomainSpec, validate_decomposition
from branchopt.driver import alternate_descent
from branchopt.equilibrium import (
    build_weights,
    elastic_energy,
    solve_state,
    stress_tensors,
)
from branchopt.fieldsio import assemble_mosaic, sub_phase_fields
from branchopt.oracle import dense_min_energy, geometric_system, scan_minimize
from branchopt.phasefield import PhaseParams, cell_objective, newton_cell
from test_equilibrium import geo_v

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
DELTA = 0.01


def _report(name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# --- random instance pool shared by the oracle-equivalence checks ---------

INTERVAL_POOL = (
    ((0.0, 1.0),),
    ((0.0, 0.5),),
    ((0.5, 1.0),),
    ((0.2, 0.8),),
    ((0.1, 0.3), (0.6, 0.95)),
)


def _random_decomposition(rng, template):
    rot = lambda: int(rng.integers(0, 4))
    if template == "single":
        subs = [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, rot())]
        box = Rect(0, 1, 0, 1)
    elif template == "pair":
        ref_b = int(rng.integers(0, 2))
        subs = [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, rot()),
                SubdomainSpec(1, Rect(1, 2, 0, 1), ref_b, rot())]
        box = Rect(0, 2, 0, 1)
    else:  # split: one square feeding two half-size squares
        ref_c = int(rng.integers(1, 3))
        subs = [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, rot()),
                SubdomainSpec(1, Rect(1, 1.5, 0, 0.5), 1, rot()),
                SubdomainSpec(2, Rect(1, 1.5, 0.5, 1), ref_c, rot())]
        box = Rect(0, 1.5, 0, 1)
    return validate_decomposition(subs, box)


def _random_loads(rng):
    # Mirrored normal tractions with shared intervals balance force and
    # torque exactly for any interval pattern.
    iv_y = INTERVAL_POOL[rng.integers(0, len(INTERVAL_POOL))]
    mag_y = float(rng.uniform(0.2, 2.0))
    loads = [BoundaryLoad("top", (0.0, -mag_y), iv_y),
             BoundaryLoad("bottom", (0.0, mag_y), iv_y)]
    if rng.random() < 0.5:
        iv_x = INTERVAL_POOL[rng.integers(0, len(INTERVAL_POOL))]
        mag_x = float(rng.uniform(0.2, 2.0))
        loads += [BoundaryLoad("left", (mag_x, 0.0), iv_x),
                  BoundaryLoad("right", (-mag_x, 0.0), iv_x)]
    return LoadCase(tuple(loads))


@pytest.fixture(scope="module")
def instance_pool():
    rng = np.random.default_rng(20260815)
    templates = ["single", "pair", "split"] + [
        ("single", "pair", "split")[rng.integers(0, 3)] for _ in range(47)]
    out = []
    t0 = time.time()
    for template in templates:
        dec = _random_decomposition(rng, template)
        loads = _random_loads(rng)
        n = int(rng.choice((2, 4)))
        layout = index_dofs(dec, n, loads)
        vf = initial_phase(layout, DELTA)
        for vc, v in zip(layout.vclasses, vf):
            free = ~vc.fixed_mask
            v[free] = rng.uniform(DELTA, 1.0, size=free.sum())
        raw = assemble_system(layout, loads)
        reduced = reduce_rank(raw)
        M = build_weights(vf, layout, DELTA)
        field = solve_state(reduced, M)
        gs = geometric_system(dec.subdomains, dec.bounding_box, n,
                              geo_v(layout, vf), loads)
        _, oracle_energy = dense_min_energy(gs.A, gs.b, gs.M)
        out.append({
            "dec": dec, "loads": loads, "n": n, "layout": layout,
            "vf": vf, "raw": raw, "reduced": reduced, "M": M,
            "field": field, "oracle_energy": oracle_energy,
        })
    return out, time.time() - t0


# --- the acceptance criteria ----------------------------------------------

def test_uniform_compression_exact():
    t0 = time.time()
    loads = LoadCase((BoundaryLoad("top", (0.0, -1.0), ((0.0, 1.0),)),
                      BoundaryLoad("bottom", (0.0, 1.0), ((0.0, 1.0),))))
    dec = validate_decomposition(
        [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0)], Rect(0, 1, 0, 1))
    layout = index_dofs(dec, 8, loads)
    sys = reduce_rank(assemble_system(layout, loads))
    M = build_weights([np.ones((8, 8))], layout)
    field = solve_state(sys, M)
    sig = stress_tensors(layout, field)[0]
    dev = max(np.abs(sig[..., 0, 0]).max(),
              np.abs(sig[..., 1, 1] + 1.0).max(),
              np.abs(sig[..., 0, 1]).max())
    energy_err = abs(elastic_energy(field, M) - 1.0)
    elapsed = time.time() - t0
    ok = dev <= 1e-10 and energy_err <= 1e-10 and elapsed < 1.0
    _report("uniform compression", ok,
            f"stress dev {dev:.2e}, energy err {energy_err:.2e}, "
            f"{elapsed:.2f}s")


def test_sparse_energy_matches_dense_oracle(instance_pool):
    pool, elapsed = instance_pool
    worst = 0.0
    for inst in pool:
        ours = elastic_energy(inst["field"], inst["M"])
        ref = inst["oracle_energy"]
        worst = max(worst, abs(ours - ref) / max(1.0, abs(ref)))
    ok = len(pool) == 50 and worst <= 1e-8 and elapsed < 30.0
    _report("oracle equivalence", ok,
            f"50 instances, worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_rank_reduction_preserves_energy(instance_pool):
    pool, _ = instance_pool
    worst = 0.0
    full_rank = True
    for inst in pool:
        Ad = inst["raw"].A.toarray()
        _, unreduced = dense_min_energy(Ad, inst["raw"].b,
                                        np.diag(inst["M"].diag))
        ours = elastic_energy(inst["field"], inst["M"])
        worst = max(worst, abs(ours - unreduced) / max(1.0, abs(unreduced)))
        R = inst["reduced"].A.toarray()
        full_rank &= np.linalg.matrix_rank(R) == R.shape[0]
    ok = worst <= 1e-10 and full_rank
    _report("rank reduction", ok,
            f"worst energy err {worst:.2e}, full row rank: {full_rank}")


def test_equilibrium_invariants(instance_pool):
    pool, _ = instance_pool
    worst_bal = 0.0
    worst_branch = 0.0
    for inst in pool:
        raw = inst["raw"]
        r = np.abs(raw.A @ inst["field"].f - raw.b)
        scale = 1.0 + np.abs(raw.b).max()
        balance = np.isin(raw.labels, [ROW_LABELS.index("force_x"),
                                       ROW_LABELS.index("force_y"),
                                       ROW_LABELS.index("torque")])
        worst_bal = max(worst_bal, r[balance].max() / scale)
        branch = raw.labels == ROW_LABELS.index("coupling_branch")
        if branch.any():
            worst_branch = max(worst_branch, r[branch].max())
    ok = worst_bal <= 1e-9 and worst_branch <= 1e-12
    _report("equilibrium invariants", ok,
            f"force/torque resid {worst_bal:.2e}, "
            f"branch conservation {worst_branch:.2e}")


def test_newton_matches_scan():
    rng = np.random.default_rng(4242)
    t0 = time.time()
    worst = 0.0
    for _ in range(1000):
        p = PhaseParams(beta=float(rng.uniform(0.0, 3.0)),
                        eta=float(rng.uniform(0.0, 1.0)),
                        epsilon=float(rng.uniform(0.05, 1.0)),
                        delta=DELTA,
                        h=float(rng.uniform(0.05, 1.0)))
        s = float(rng.uniform(0.0, 2.0)) * (rng.random() < 0.9)
        nb = list(rng.uniform(DELTA, 1.0, size=rng.integers(0, 5)))
        v0 = float(rng.uniform(DELTA, 1.0))
        vn = newton_cell(v0, s, nb, p)
        vs = scan_minimize(lambda v: cell_objective(v, s, nb, p),
                           DELTA, 1.0, 2001)
        worst = max(worst, abs(vn - vs))
    elapsed = time.time() - t0
    ok = worst <= 1e-6 and elapsed < 60.0
    _report("cell newton vs scan", ok,
            f"1000 draws, worst gap {worst:.2e}, {elapsed:.1f}s")


def test_monotone_descent_and_convergence():
    cfg = load_run_config(str(CONFIG_DIR / "compression_small.json"))
    fixed = dataclasses.replace(cfg, max_iters=30, stop_tol=1e-30)
    rep = alternate_descent(fixed)
    J = [r.total for r in rep.records]
    monotone = (len(J) == 30
                and all(b <= a + 1e-10 for a, b in zip(J, J[1:])))
    conv = alternate_descent(dataclasses.replace(cfg, max_iters=200))
    converged = conv.converged and len(conv.records) <= 200
    ok = monotone and converged
    _report("monotone descent", ok,
            f"30 steps non-increasing: {monotone}; stop tol reached at "
            f"iteration {len(conv.records)} (dv {conv.records[-1].dv_l2:.1e})")


# --- rotation equivariance -------------------------------------------------

_ROT_SIDE = {"bottom": "right", "right": "top", "top": "left",
             "left": "bottom"}


def _rotate_decomposition(dec):
    box = dec.bounding_box
    subs = [
        SubdomainSpec(s.id,
                      Rect(box.y1 - s.rect.y1, box.y1 - s.rect.y0,
                           s.rect.x0 - box.x0, s.rect.x1 - box.x0),
                      s.reference, (s.rotation + 1) % 4)
        for s in dec.subdomains]
    return validate_decomposition(
        subs, Rect(0.0, box.height, 0.0, box.width))


def _rotate_loads(loads):
    out = []
    for bl in loads.loads:
        gx, gy = bl.traction
        if bl.side in ("right", "left"):
            ivs = tuple(sorted((1.0 - b, 1.0 - a) for a, b in bl.intervals))
        else:
            ivs = bl.intervals
        out.append(BoundaryLoad(_ROT_SIDE[bl.side], (-gy, gx), ivs))
    return LoadCase(tuple(out))


def test_rotation_equivariance():
    subs = [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0),
            SubdomainSpec(1, Rect(1, 1.5, 0, 0.5), 1, 0),
            SubdomainSpec(2, Rect(1, 1.5, 0.5, 1), 2, 0)]
    dec = validate_decomposition(subs, Rect(0, 1.5, 0, 1))
    loads = LoadCase((
        BoundaryLoad("left", (1.0, 0.0), ((0.1, 0.4), (0.6, 0.9))),
        BoundaryLoad("right", (-1.0, 0.0), ((0.1, 0.4), (0.6, 0.9))),
    ))
    base = RunConfig(decomposition=dec, loads=loads, n_cells=8,
                     max_iters=12, stop_tol=1e-12)
    rot = RunConfig(decomposition=_rotate_decomposition(dec),
                    loads=_rotate_loads(loads), n_cells=8,
                    max_iters=12, stop_tol=1e-12)
    rep0 = alternate_descent(base)
    rep1 = alternate_descent(rot)
    j0, j1 = rep0.records[-1].total, rep1.records[-1].total
    j_err = abs(j1 - j0) / max(1.0, abs(j0))
    r0 = assemble_mosaic(base.decomposition, 8,
                         sub_phase_fields(rep0.layout, rep0.vfields))
    r1 = assemble_mosaic(rot.decomposition, 8,
                         sub_phase_fields(rep1.layout, rep1.vfields))
    # 90 deg CCW: cell (ix, iy) lands at (ny - 1 - iy, ix).
    v_err = np.abs(r1.values - r0.values.T[::-1, :]).max()
    ok = j_err <= 1e-8 and v_err <= 1e-8
    _report("rotation equivariance", ok,
            f"J rel err {j_err:.2e}, phase mosaic err {v_err:.2e}")


# --- branching layout runs -------------------------------------------------

def _loaded_interval_strips(cfg, raster):
    """Raster index strips of the loaded cells, one per facet interval."""
    n = cfg.n_cells
    box = cfg.decomposition.bounding_box
    idx = lambda w: int(round((w - box.x0) / raster.spacing))
    strips = []
    for f in cfg.decomposition.boundary_facets():
        bl = cfg.loads.for_side(f.side)
        if bl is None:
            continue
        sub = cfg.decomposition.by_id[f.owner]
        _, slo, shi = sub.rect.side_segment(f.side)
        span = shi - slo
        h = span / n
        mids = slo + (np.arange(n) + 0.5) * h
        for a, b in bl.intervals:
            ia, ib = slo + a * span, slo + b * span
            cells = np.nonzero((mids >= ia - 1e-12 * span)
                               & (mids <= ib + 1e-12 * span))[0]
            lohi = [(idx(slo + c * h), idx(slo + (c + 1) * h))
                    for c in cells]
            strips.append((f.owner, f.side, (a, b), lohi))
    return strips


def _connectivity_check(config_name):
    cfg = load_run_config(str(CONFIG_DIR / config_name))
    t0 = time.time()
    rep = alternate_descent(cfg)
    elapsed = time.time() - t0
    raster = assemble_mosaic(cfg.decomposition, cfg.n_cells,
                             sub_phase_fields(rep.layout, rep.vfields))
    hard = raster.values > 0.5
    four = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    labels, _ = scipy.ndimage.label(hard, structure=four)

    box = cfg.decomposition.bounding_box
    idx = lambda w: int(round((w - box.x0) / raster.spacing))
    # Central 3x3 periodic block sits at [1.75, 4.75]^2.
    core = labels[idx(1.75):idx(4.75), idx(1.75):idx(4.75)]
    core_labels = set(np.unique(core[core > 0]))

    unconnected = 0
    strips = _loaded_interval_strips(cfg, raster)
    for owner, side, interval, lohi in strips:
        found = set()
        for lo, hi in lohi:
            if side == "left":
                found.update(np.unique(labels[0, lo:hi]))
            elif side == "right":
                found.update(np.unique(labels[-1, lo:hi]))
            elif side == "bottom":
                found.update(np.unique(labels[lo:hi, 0]))
            else:
                found.update(np.unique(labels[lo:hi, -1]))
        found.discard(0)
        if not (found & core_labels):
            unconnected += 1
    return len(strips), unconnected, bool(core_labels), elapsed


@pytest.mark.parametrize("config_name", ["branching_compression.json",
                                         "branching_shear.json"])
def test_branching_layout_connects_loads_to_core(config_name):
    total, unconnected, core_hard, elapsed = _connectivity_check(config_name)
    ok = (core_hard and total > 0 and unconnected == 0
          and elapsed < 600.0)
    _report(f"branching connectivity ({config_name.split('_')[1][:-5]})", ok,
            f"{total} loaded intervals, {unconnected} unconnected, "
            f"{elapsed:.0f}s")
