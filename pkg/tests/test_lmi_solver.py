"""Tests for the per-frequency LMI machinery."""

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from src.domain.errors import DimensionMismatch, NotHermitian
from src.domain.models import InterconnectionStructure, SynthesisOptions
from src.domain.specs import CostWeights, DScaling, StackedWeights
from src.model_library import TwoDofBuilder
from src.services.lmi_solver import (
    decoupled_modules, hermitian_embed, lmi_matrix, schur_max_eig, step_dscaling, step_weights,
    theorem1_feasible
)
from tests.conftest import random_hermitian


@pytest.fixture
def two_module_structure():
    _, structure = TwoDofBuilder().build()
    return structure


@pytest.fixture
def one_module_structure():
    return InterconnectionStructure([[0.0]], [[1.0]], [[1.0]], ((1, 1),), (1, 1))


def unit_weights(n_modules):
    ones = tuple(np.ones(1) for _ in range(n_modules))
    return StackedWeights(ones, ones, np.ones(1), np.ones(1))


class TestHermitianEmbed:

    def test_identity(self):
        assert np.array_equal(hermitian_embed(np.eye(2)), np.eye(4))

    def test_eigenvalues_are_doubled(self):
        h = np.array([[2.0, 1j], [-1j, 2.0]])
        assert np.allclose(np.linalg.eigvalsh(hermitian_embed(h)), [1.0, 1.0, 3.0, 3.0])

    def test_rejects_non_hermitian(self):
        with pytest.raises(NotHermitian):
            hermitian_embed(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(NotHermitian):
            hermitian_embed(np.ones((2, 3)))

    def test_definiteness_preserved(self, rng):
        for _ in range(20):
            h = random_hermitian(rng, 4)
            embedded = np.linalg.eigvalsh(hermitian_embed(h))
            original = np.linalg.eigvalsh(h)
            assert np.allclose(np.sort(embedded)[::2], original)
            assert np.allclose(np.sort(embedded)[1::2], original)


class TestTheorem1:

    def test_zero_interconnection_is_feasible(self, two_module_structure):
        check = theorem1_feasible(np.zeros((3, 3)), unit_weights(2), DScaling.identity(2), two_module_structure)
        assert check.feasible
        assert check.min_eig == pytest.approx(1.0)

    def test_agrees_with_schur_complement(self, rng, two_module_structure):
        checked = 0
        for _ in range(40):
            n = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
            n[2, 2] = 0.0
            weights = StackedWeights(
                tuple(rng.uniform(0.2, 2.0, 1) for _ in range(2)),
                tuple(rng.uniform(0.2, 2.0, 1) for _ in range(2)),
                rng.uniform(0.2, 2.0, 1), rng.uniform(0.2, 2.0, 1),
            )
            d = DScaling(tuple(rng.uniform(0.5, 2.0, 2)), 1.0)
            schur = schur_max_eig(n, weights, d, two_module_structure)
            if abs(schur) < 1e-8:
                continue
            assert theorem1_feasible(n, weights, d, two_module_structure).feasible == (schur < 0)
            checked += 1
        assert checked > 30

    def test_lmi_matrix_drops_excluded_modules(self, two_module_structure):
        n = np.arange(9, dtype=complex).reshape(3, 3)
        n[2, 2] = 0.0
        full = lmi_matrix(n, unit_weights(2), DScaling.identity(2), two_module_structure)
        reduced = lmi_matrix(n, unit_weights(2), DScaling.identity(2), two_module_structure, excluded=[1])
        assert full.shape == (6, 6)
        assert reduced.shape == (4, 4)

    def test_shape_checked(self, two_module_structure):
        with pytest.raises(DimensionMismatch):
            theorem1_feasible(np.zeros((2, 2)), unit_weights(2), DScaling.identity(2), two_module_structure)


class TestWeightStep:

    def test_zero_interconnection_gives_weight_cap(self, two_module_structure):
        options = SynthesisOptions()
        step = step_weights(np.zeros((3, 3)), np.ones(1), np.ones(1), DScaling.identity(2),
                            two_module_structure, CostWeights.uniform(2), options)
        for w, v in zip(step.weights.module_w, step.weights.module_v):
            assert w[0] == pytest.approx(options.weight_cap)
            assert v[0] == pytest.approx(options.weight_cap)

    def test_decoupled_detection(self, two_module_structure):
        n = np.zeros((3, 3), dtype=complex)
        n[0, 2] = n[2, 0] = 1.0
        assert decoupled_modules(n, two_module_structure, [0, 1]) == [1]

    def test_frozen_module_without_weights_gets_no_freedom(self, two_dof_system, two_dof_spec):
        options = SynthesisOptions()
        step = step_weights(two_dof_system.nominal.samples[5], two_dof_spec.v_a.values[5],
                            two_dof_spec.w_a.values[5], DScaling.identity(2), two_dof_system.structure,
                            CostWeights((1.0, np.inf)), options)
        assert step.weights.module_w[1][0] == pytest.approx(options.zero_freedom_weight)
        assert step.weights.module_w[0][0] > options.zero_freedom_weight

    def test_returned_weights_satisfy_lmi(self, two_dof_system, two_dof_spec):
        i = 10
        n = two_dof_system.nominal.samples[i]
        step = step_weights(n, two_dof_spec.v_a.values[i], two_dof_spec.w_a.values[i],
                            DScaling.identity(2), two_dof_system.structure, CostWeights.uniform(2))
        check = theorem1_feasible(n, step.weights, DScaling.identity(2), two_dof_system.structure)
        assert check.min_eig > -1e-6 * np.linalg.norm(n, 2)
        assert step.beta > 0


class TestScalingStep:

    def test_single_module_matches_scalar_search(self, one_module_structure):
        n = np.array([[0.3, 0.8], [0.5, 0.0]], dtype=complex)
        weights = unit_weights(1)

        def delta_of(log_d):
            d = np.exp(log_d)
            scaled = n @ np.diag([d, 1.0]) @ n.conj().T - np.diag([d, 1.0])
            return float(np.linalg.eigvalsh(scaled)[-1])

        reference = minimize_scalar(delta_of, bounds=(np.log(1e-6), np.log(1e6)), method="bounded",
                                    options={"xatol": 1e-10})
        step = step_dscaling(n, weights, one_module_structure)
        assert step.delta == pytest.approx(reference.fun, abs=1e-6)
        assert step.d.d_modules[0] == pytest.approx(np.exp(reference.x), rel=1e-3)
        assert step.d.d_a == 1.0

    def test_excluded_module_keeps_unit_scaling(self, two_dof_system):
        n = two_dof_system.nominal.samples[3]
        step = step_dscaling(n, unit_weights(2), two_dof_system.structure, excluded=[1])
        assert step.d.d_modules[1] == 1.0


def random_instance(rng):
    """Random partition with 1-3 modules, channel dims up to 3, N with a zero external block."""
    k = int(rng.integers(1, 4))
    dims = tuple((int(rng.integers(1, 4)), int(rng.integers(1, 4))) for _ in range(k))
    m_a, p_a = (int(v) for v in rng.integers(1, 4, 2))
    structure = InterconnectionStructure([], [], [], dims, (m_a, p_a))
    sum_p, sum_m = structure.total_outputs, structure.total_inputs
    shape = (sum_m + p_a, sum_p + m_a)
    n = rng.uniform(0.1, 1.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    n[sum_m:, sum_p:] = 0.0
    weights = StackedWeights(
        tuple(rng.uniform(0.2, 2.0, p) for p, _ in dims),
        tuple(rng.uniform(0.2, 2.0, m) for _, m in dims),
        rng.uniform(0.2, 2.0, m_a), rng.uniform(0.2, 2.0, p_a),
    )
    return n, weights, structure


class TestRandomInstances:

    def test_lmi_verdict_matches_schur_sign(self, rng):
        checked = 0
        for _ in range(100):
            n, weights, structure = random_instance(rng)
            d = DScaling(tuple(rng.uniform(0.5, 2.0, structure.n_modules)), 1.0)
            schur = schur_max_eig(n, weights, d, structure)
            if abs(schur) < 1e-9:
                continue
            assert theorem1_feasible(n, weights, d, structure).feasible == (schur < 0)
            checked += 1
        assert checked >= 95

    def test_scaling_step_delta_sign_decides_feasibility(self, rng):
        for _ in range(100):
            n, weights, structure = random_instance(rng)
            step = step_dscaling(n, weights, structure)
            scale = 16.0 * (1.0 + np.linalg.norm(n, 2) ** 2)
            rounding = 1e-12 * scale * max(1.0, *step.d.d_modules)
            assert step.delta == pytest.approx(schur_max_eig(n, weights, step.d, structure), abs=rounding)
            identity = schur_max_eig(n, weights, DScaling.identity(structure.n_modules), structure)
            assert step.delta <= identity + 1e-6 * scale
            moderate = all(1e-2 <= v <= 1e2 for v in step.d.d_modules)
            if moderate and abs(step.delta) > 1e-4:
                assert theorem1_feasible(n, weights, step.d, structure).feasible == (step.delta < 0)

    def test_schur_with_excluded_matches_scaling_step(self, rng):
        checked = 0
        while checked < 20:
            n, weights, structure = random_instance(rng)
            if structure.n_modules < 2:
                continue
            step = step_dscaling(n, weights, structure, excluded=[0])
            assert step.d.d_modules[0] == 1.0
            rounding = 1e-11 * (1.0 + np.linalg.norm(n, 2) ** 2) * max(1.0, *step.d.d_modules)
            assert schur_max_eig(n, weights, step.d, structure, excluded=[0]) == pytest.approx(
                step.delta, abs=rounding)
            checked += 1
