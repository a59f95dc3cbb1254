"""Tests for the alternating module-spec synthesis."""

import math

import numpy as np
import pytest

from src.domain.errors import DimensionMismatch, GridMismatch, NotConverged, SolverFailure
from src.domain.models import FrequencyGrid, FrfMatrix, InterconnectionStructure, SynthesisOptions
from src.domain.specs import CostWeights, DScaling, SynthesisTrace, TerminationReason
from src.model_library import TwoDofBuilder
from src.services.frf_assembly import AssembledSystem
from src.services.spec_service import (
    disc_radii, module_spec_from_weights, system_spec_from_absolute_gamma,
    system_spec_from_relative_gamma
)
from src.services import synthesis_workers
from src.services.lmi_solver import DStep, schur_max_eig, step_dscaling, step_weights
from src.services.synthesis_service import SynthesisService, alpha_sweep, synthesize
from src.services.synthesis_workers import synthesize_frequency


@pytest.fixture(scope="module")
def pass_through():
    """One module wired straight to the outside: G_A equals the module FRF."""
    grid = FrequencyGrid.from_hz([0.5, 1.0, 2.0, 4.0])
    frf = FrfMatrix(grid, np.array([0.5 + 0.2j, 0.3 - 0.1j, -0.2 + 0.4j, 0.1 + 0.1j]))
    structure = InterconnectionStructure([[0.0]], [[1.0]], [[1.0]], ((1, 1),), (1, 1))
    return AssembledSystem((frf,), structure)


@pytest.fixture(scope="module")
def three_point_system():
    return TwoDofBuilder().assemble(FrequencyGrid.from_hz([0.8, 1.0, 1.3]))


class TestAlternation:

    def test_single_module_gets_the_whole_disc(self, pass_through):
        spec = system_spec_from_absolute_gamma(pass_through.g_a, 0.1)
        result = synthesize(pass_through.nominal, pass_through.structure, spec, pass_through.module_frfs)
        radii = disc_radii(result.module_specs[0])
        assert np.all(radii <= 0.1)
        assert np.all(radii >= 0.0999)

    def test_infinite_tolerance_runs_one_iteration(self, three_point_system):
        spec = system_spec_from_relative_gamma(three_point_system.g_a, 0.05)
        with SynthesisService(options=SynthesisOptions(eps=math.inf), jobs=1) as service:
            result = service.synthesize(three_point_system, spec)
        assert all(t.iterations == 1 for t in result.trace.ordered())
        assert result.converged

    def test_max_iters_warns(self, three_point_system):
        spec = system_spec_from_relative_gamma(three_point_system.g_a, 0.05)
        with pytest.warns(NotConverged):
            result = synthesize(three_point_system.nominal, three_point_system.structure, spec,
                                three_point_system.module_frfs, options=SynthesisOptions(max_iters=1))
        assert result.trace.not_converged_omegas == list(three_point_system.grid.points)

    def test_best_iterate_is_kept(self, two_dof_result):
        for record in two_dof_result.trace.ordered():
            assert record.ok
            assert record.best_beta <= record.betas[0]
            assert record.d is not None
            assert record.lmi_margin > 0

    def test_result_shape(self, two_dof_result, two_dof_system):
        assert two_dof_result.feasible
        assert [s.name for s in two_dof_result.module_specs] == ["module_1", "module_2"]
        for spec, frf in zip(two_dof_result.module_specs, two_dof_system.module_frfs):
            assert spec.baseline == frf
            assert spec.w_j.values.shape == (len(two_dof_system.grid), 1)


class TestCostWeights:

    def test_frozen_module_frees_the_other(self, three_point_system):
        spec = system_spec_from_relative_gamma(three_point_system.g_a, 0.05)
        with SynthesisService(jobs=1) as service:
            uniform = service.synthesize(three_point_system, spec)
            frozen = service.synthesize(three_point_system, spec, CostWeights((1.0, math.inf)))
        i = three_point_system.grid.index_of(2 * np.pi)
        free_radius = disc_radii(frozen.module_specs[0])[i]
        shared_radius = disc_radii(uniform.module_specs[0])[i]
        assert free_radius > 1.01 * shared_radius
        assert np.allclose(frozen.module_specs[1].w_j.values, SynthesisOptions().zero_freedom_weight)

    def test_frozen_module_keeps_given_weights(self, three_point_system):
        spec = system_spec_from_relative_gamma(three_point_system.g_a, 0.05)
        with SynthesisService(jobs=1) as service:
            uniform = service.synthesize(three_point_system, spec)
            shared = uniform.module_specs[1]
            given = module_spec_from_weights(shared.name, shared.baseline,
                                             0.9 * shared.w_j.values, 0.9 * shared.v_j.values)
            result = service.synthesize(
                three_point_system, spec, CostWeights((1.0, math.inf), frozen_specs={1: given})
            )
        assert np.array_equal(result.module_specs[1].w_j.values, given.w_j.values)
        assert np.array_equal(result.module_specs[1].v_j.values, given.v_j.values)

    def test_cost_count_checked(self, three_point_system):
        spec = system_spec_from_relative_gamma(three_point_system.g_a, 0.05)
        with pytest.raises(DimensionMismatch):
            SynthesisService(jobs=1).synthesize(three_point_system, spec, CostWeights.uniform(3))

    def test_spec_grid_checked(self, three_point_system, two_dof_spec):
        with pytest.raises(GridMismatch):
            SynthesisService(jobs=1).synthesize(three_point_system, two_dof_spec)


class TestAlphaSweep:

    def test_two_modules(self):
        sweep = alpha_sweep(2, 5)
        assert len(sweep) == 5
        assert sweep[0].alphas == pytest.approx((1.0, 0.01))
        assert sweep[-1].alphas == pytest.approx((1.0, 100.0))

    def test_three_modules_skip_duplicates(self):
        sweep = alpha_sweep(3, 3)
        assert len(sweep) == 7
        assert sum(1 for c in sweep if c.alphas == (1.0, 1.0, 1.0)) == 1

    def test_single_module(self):
        assert [c.alphas for c in alpha_sweep(1, 9)] == [(1.0,)]


@pytest.mark.slow
def test_pool_matches_serial_run():
    system = TwoDofBuilder().assemble(FrequencyGrid.logspace_hz(0.5, 5.0, 6))
    spec = system_spec_from_relative_gamma(system.g_a, 0.05)
    with SynthesisService(jobs=1) as service:
        serial = service.synthesize(system, spec)
    with SynthesisService(jobs=2) as service:
        pooled = service.synthesize(system, spec)
    for a, b in zip(serial.module_specs, pooled.module_specs):
        assert np.allclose(a.w_j.values, b.w_j.values, rtol=1e-6)
        assert np.allclose(a.v_j.values, b.v_j.values, rtol=1e-6)


def assert_monotone_betas(trace, tol=1e-9):
    for record in trace.ordered():
        betas = np.asarray(record.betas)
        assert np.all(np.diff(betas) <= tol * betas[:-1]), f"beta rose at omega={record.omega}"


def frequency_tasks(system, spec, options=None):
    service = SynthesisService(options=options, jobs=1)
    return service._build_tasks(system.nominal, system.structure, spec,
                                CostWeights.uniform(system.structure.n_modules))


class TestMonotoneAlternation:

    def test_betas_never_rise(self, three_point_system, two_dof_result):
        spec = system_spec_from_relative_gamma(three_point_system.g_a, 0.05)
        result = SynthesisService(jobs=1).synthesize(three_point_system, spec)
        assert_monotone_betas(result.trace)
        assert_monotone_betas(two_dof_result.trace)

    def test_scaling_step_does_not_raise_beta(self, three_point_system):
        spec = system_spec_from_relative_gamma(three_point_system.g_a, 0.05)
        structure = three_point_system.structure
        cost = CostWeights.uniform(structure.n_modules)
        for task in frequency_tasks(three_point_system, spec):
            identity = DScaling.identity(structure.n_modules)
            first = step_weights(task.n_sample, task.v_a, task.w_a, identity, structure, cost, omega=task.omega)
            dstep = step_dscaling(task.n_sample, first.weights, structure, omega=task.omega)
            if dstep.delta > schur_max_eig(task.n_sample, first.weights, identity, structure):
                continue
            second = step_weights(task.n_sample, task.v_a, task.w_a, dstep.d, structure, cost, omega=task.omega)
            assert second.beta <= first.beta * (1 + 1e-6)

    def test_worse_scaling_is_rejected(self, three_point_system, monkeypatch):
        def worse_scaling(n_sample, weights, structure, options=None, excluded=(), omega=float("nan")):
            current = schur_max_eig(n_sample, weights, DScaling.identity(2), structure, excluded)
            return DStep(DScaling((1e6, 1e-6)), current + 1.0, "optimal")

        monkeypatch.setattr(synthesis_workers, "step_dscaling", worse_scaling)
        spec = system_spec_from_relative_gamma(three_point_system.g_a, 0.05)
        result = SynthesisService(jobs=1).synthesize(three_point_system, spec)
        assert result.converged
        for record in result.trace.ordered():
            assert record.iterations == 1
            assert record.d == DScaling.identity(2)
            assert "D kept" in record.message

    def test_frequency_order_does_not_matter(self, three_point_system):
        spec = system_spec_from_relative_gamma(three_point_system.g_a, 0.05)
        tasks = frequency_tasks(three_point_system, spec)
        forward = SynthesisTrace(three_point_system.grid)
        backward = SynthesisTrace(three_point_system.grid)
        for task in tasks:
            forward.add(synthesize_frequency(task))
        for task in reversed(tasks):
            backward.add(synthesize_frequency(task))
        for a, b in zip(forward.ordered(), backward.ordered()):
            assert (a.index, a.omega) == (b.index, b.omega)
            assert np.allclose(np.concatenate(a.module_w), np.concatenate(b.module_w), rtol=1e-8)
            assert np.allclose(np.concatenate(a.module_v), np.concatenate(b.module_v), rtol=1e-8)


class TestStepFailure:

    def test_failed_weight_step_is_not_converged(self, monkeypatch):
        system = TwoDofBuilder().assemble(FrequencyGrid.from_hz([1.0]))
        calls = []

        def failing_second_call(*args, **kwargs):
            calls.append(1)
            if len(calls) == 2:
                raise SolverFailure("solver returned no point", omegas=[kwargs.get("omega", 0.0)])
            return step_weights(*args, **kwargs)

        def keep_identity(n_sample, weights, structure, options=None, excluded=(), omega=float("nan")):
            return DStep(DScaling.identity(2), float("-inf"), "optimal")

        monkeypatch.setattr(synthesis_workers, "step_weights", failing_second_call)
        monkeypatch.setattr(synthesis_workers, "step_dscaling", keep_identity)
        spec = system_spec_from_relative_gamma(system.g_a, 0.05)
        with pytest.warns(NotConverged):
            result = SynthesisService(jobs=1).synthesize(system, spec)
        record = result.trace.ordered()[0]
        assert len(calls) == 2
        assert record.reason is TerminationReason.STEP_FAILED
        assert record.iterations == 1
        assert not result.converged
        assert result.feasible
        assert record.lmi_margin > 0
        assert result.trace.not_converged_omegas == [record.omega]

    def test_failed_scaling_step_is_not_converged(self, three_point_system, monkeypatch):
        def no_point(*args, **kwargs):
            raise SolverFailure("scaling step returned no point")

        monkeypatch.setattr(synthesis_workers, "step_dscaling", no_point)
        spec = system_spec_from_relative_gamma(three_point_system.g_a, 0.05)
        with pytest.warns(NotConverged):
            result = SynthesisService(jobs=1).synthesize(three_point_system, spec)
        assert not result.converged
        assert all(t.reason is TerminationReason.STEP_FAILED for t in result.trace.ordered())


@pytest.mark.slow
def test_alternation_on_a_fine_grid():
    system = TwoDofBuilder().assemble(FrequencyGrid.logspace_hz(0.5, 5.0, 100))
    spec = system_spec_from_relative_gamma(system.g_a, 0.05)
    with SynthesisService(jobs=1) as service:
        result = service.synthesize(system, spec)
    assert result.feasible
    assert_monotone_betas(result.trace)
    assert max(t.iterations for t in result.trace.ordered()) <= SynthesisOptions().max_iters
