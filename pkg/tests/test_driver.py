import warnings

import numpy as np
import pytest

from branchopt.assembly import index_dofs
from branchopt.config import (
    BoundaryLoad,
    LoadCase,
    RunConfig,
    compression_load,
)
from branchopt.decomp import SubdomainSpec, Rect, validate_decomposition
from branchopt.driver import (
    alternate_descent,
    default_epsilon,
    sweep_parameters,
    total_objective,
)
from branchopt.equilibrium import elastic_energy, build_weights
from branchopt.errors import NonMonotoneWarning
from branchopt.phasefield import build_neighbor_plan


def unit_square():
    return validate_decomposition(
        [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0)], Rect(0, 1, 0, 1))


def squeeze_load(intervals=((0.0, 1.0),)):
    return LoadCase((
        BoundaryLoad("top", (0.0, -1.0), intervals),
        BoundaryLoad("bottom", (0.0, 1.0), intervals),
    ))


def full_compression(magnitude=1.0):
    return compression_load(magnitude, intervals=((0.0, 1.0),))


def config(dec, loads, **kw):
    return RunConfig(decomposition=dec, loads=loads, **kw)


class TestTotalObjective:
    def test_solid_field_zero_stress(self):
        layout = index_dofs(unit_square(), 4, squeeze_load())
        plan = build_neighbor_plan(layout)
        v = [np.ones((4, 4))]
        s = [np.zeros((4, 4))]
        J, comps = total_objective(layout, plan, v, s, beta=2.5, eta=0.7,
                                   epsilon=0.5, delta=0.01)
        assert J == pytest.approx(2.5)
        assert comps["perimeter"] == 0.0
        assert comps["elastic"] == 0.0

    def test_void_field_zero_stress(self):
        layout = index_dofs(unit_square(), 4)
        plan = build_neighbor_plan(layout)
        delta = 0.02
        v = [np.full((4, 4), delta)]
        s = [np.zeros((4, 4))]
        J, comps = total_objective(layout, plan, v, s, beta=3.0, eta=0.7,
                                   epsilon=0.5, delta=delta)
        assert J == pytest.approx(3.0 * delta)
        assert comps["perimeter"] == 0.0

    def test_multiplicity_weighting(self):
        subs = [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0),
                SubdomainSpec(1, Rect(1, 2, 0, 1), 0, 0)]
        dec = validate_decomposition(subs, Rect(0, 2, 0, 1))
        layout = index_dofs(dec, 4)
        plan = build_neighbor_plan(layout)
        v = [np.ones((4, 4))]
        s = [np.zeros((4, 4))]
        J, _ = total_objective(layout, plan, v, s, beta=1.0, eta=0.0,
                               epsilon=0.5, delta=0.01)
        assert J == pytest.approx(2.0)

    def test_single_interface_jump(self):
        # One column at delta against a solid rest: the perimeter term
        # must count the well rows plus each crossing edge once.
        n, delta, eps = 4, 0.01, 0.5
        layout = index_dofs(unit_square(), n)
        plan = build_neighbor_plan(layout)
        v = np.ones((n, n))
        v[0, :] = delta
        s = [np.zeros((n, n))]
        J, comps = total_objective(layout, plan, [v], s, beta=0.0, eta=1.0,
                                   epsilon=eps, delta=delta)
        expect = (eps / 2.0) * n * (1.0 - delta) ** 2
        assert comps["perimeter"] == pytest.approx(expect, rel=1e-12)
        assert J == pytest.approx(expect, rel=1e-12)


class TestAlternateDescent:
    def test_zero_load_collapses_to_floor(self):
        cfg = config(unit_square(), LoadCase(()), n_cells=4, max_iters=10)
        rep = alternate_descent(cfg)
        assert rep.converged
        assert len(rep.records) <= 2
        assert np.allclose(rep.vfields[0], cfg.delta)

    def test_all_fixed_energy_column_exact(self):
        # Full compression at N=2 prescribes every cell solid, so the
        # recorded elastic energy is the state solve energy itself.
        cfg = config(unit_square(), full_compression(), n_cells=2,
                     max_iters=1)
        rep = alternate_descent(cfg)
        layout = rep.layout
        weights = build_weights(rep.vfields, layout, cfg.delta)
        assert rep.records[0].elastic == pytest.approx(
            elastic_energy(rep.force, weights), abs=1e-14)
        assert rep.records[0].elastic == pytest.approx(2.0, abs=1e-10)

    def test_load_scaling_quadruples_energy(self):
        base = config(unit_square(), full_compression(1.0), n_cells=2,
                      max_iters=1)
        double = config(unit_square(), full_compression(2.0), n_cells=2,
                        max_iters=1)
        e1 = alternate_descent(base).records[0].elastic
        e2 = alternate_descent(double).records[0].elastic
        assert e2 == pytest.approx(4.0 * e1, rel=1e-12)

    def test_compression_monotone_and_converged(self):
        cfg = config(unit_square(), compression_load(), n_cells=8,
                     max_iters=100)
        with warnings.catch_warnings():
            warnings.simplefilter("error", NonMonotoneWarning)
            rep = alternate_descent(cfg)
        assert rep.converged
        js = [r.total for r in rep.records]
        assert all(b <= a + 1e-10 for a, b in zip(js, js[1:]))
        for v in rep.vfields:
            assert np.all(v >= cfg.delta - 1e-15)
            assert np.all(v <= 1.0 + 1e-15)

    def test_runs_are_deterministic(self):
        cfg = config(unit_square(), compression_load(), n_cells=8,
                     max_iters=20)
        rep1 = alternate_descent(cfg)
        rep2 = alternate_descent(cfg)
        assert len(rep1.records) == len(rep2.records)
        for a, b in zip(rep1.records, rep2.records):
            assert a == b
        for va, vb in zip(rep1.vfields, rep2.vfields):
            assert np.array_equal(va, vb)

    def test_warm_start_also_descends(self):
        cfg = config(unit_square(), compression_load(), n_cells=8,
                     max_iters=40, warm_start=True)
        rep = alternate_descent(cfg)
        js = [r.total for r in rep.records]
        assert all(b <= a + 1e-10 for a, b in zip(js, js[1:]))

    def test_redblack_schedule_runs(self):
        cfg = config(unit_square(), compression_load(), n_cells=8,
                     max_iters=40, schedule="redblack")
        rep = alternate_descent(cfg)
        assert rep.converged
        js = [r.total for r in rep.records]
        assert all(b <= a + 1e-10 for a, b in zip(js, js[1:]))

    def test_max_iters_reported_unconverged(self):
        cfg = config(unit_square(), compression_load(), n_cells=8,
                     max_iters=2, stop_tol=1e-12)
        rep = alternate_descent(cfg)
        assert not rep.converged
        assert len(rep.records) == 2


class TestParameters:
    def test_default_epsilon_uses_finest_grid(self):
        subs = [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0),
                SubdomainSpec(1, Rect(1, 1.5, 0, 0.5), 1, 0),
                SubdomainSpec(2, Rect(1, 1.5, 0.5, 1), 2, 0)]
        dec = validate_decomposition(subs, Rect(0, 1.5, 0, 1))
        layout = index_dofs(dec, 4)
        assert default_epsilon(layout) == pytest.approx(0.25)

    def test_sweep_parameters_scale_with_h(self):
        subs = [SubdomainSpec(0, Rect(0, 1, 0, 1), 0, 0),
                SubdomainSpec(1, Rect(1, 1.5, 0, 0.5), 1, 0),
                SubdomainSpec(2, Rect(1, 1.5, 0.5, 1), 2, 0)]
        dec = validate_decomposition(subs, Rect(0, 1.5, 0, 1))
        layout = index_dofs(dec, 4)
        cfg = config(dec, LoadCase(()), n_cells=4, beta=2.0, eta=0.5,
                     epsilon=0.3)
        params = sweep_parameters(cfg, layout, 0.3)
        for vc, p in zip(layout.vclasses, params):
            assert p.beta == pytest.approx(2.0 * vc.h ** 2)
            # Edge weight eta*eps/2 is resolution independent.
            assert p.grad_coef == pytest.approx(0.5 * 0.3 / 2.0)
            assert p.well_coef * p.epsilon / p.eta == pytest.approx(
                32.0 / np.pi ** 2)
