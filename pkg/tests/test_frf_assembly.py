"""Tests for FRF evaluation, block stacking and interconnection closure."""

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from src.domain.errors import (
    DimensionMismatch, GridMismatch, IllPosedInterconnection, IndexOutOfRange, InvalidParameter,
    SingularDynamicStiffness
)
from src.domain.models import FrequencyGrid, FrfMatrix, InterconnectionStructure, SecondOrderModel
from src.model_library import PlatePillarBuilder, TwoDofBuilder
from src.services.frf_assembly import (
    AssembledSystem, assemble_system_frf, block_diag, eval_second_order_frf, nominal_system,
    perturbed_system, stiff_coupling
)


def _monolithic_g11(builder, omegas):
    """Direct solve of the coupled two-DOF system, force and reading at DOF 1."""
    mass = np.diag([builder.m_1, builder.m_2])
    damping = np.diag([builder.d_1, builder.d_2])
    stiffness = np.array([[builder.k_1 + builder.k, -builder.k], [-builder.k, builder.k_2 + builder.k]])
    out = []
    for w in omegas:
        z = -w ** 2 * mass + 1j * w * damping + stiffness
        out.append(np.linalg.solve(z, [1.0, 0.0])[0])
    return np.array(out)


class TestSecondOrderFrf:

    def test_single_dof(self):
        grid = FrequencyGrid(np.array([0.0, 5.0, 20.0]))
        frf = eval_second_order_frf(SecondOrderModel.scalar(1.0, 0.3, 100.0, name="m"), grid)
        expected = 1.0 / (-grid.points ** 2 + 0.3j * grid.points + 100.0)
        assert np.allclose(frf.samples[:, 0, 0], expected, rtol=1e-12)
        assert frf.output_labels == ("m.y1",)

    def test_singular_dynamic_stiffness(self):
        grid = FrequencyGrid(np.array([1.0, 10.0]))
        with pytest.raises(SingularDynamicStiffness) as info:
            eval_second_order_frf(SecondOrderModel.scalar(1.0, 0.0, 100.0), grid)
        assert info.value.omega == 10.0


class TestBlockDiag:

    def test_layout(self):
        grid = FrequencyGrid(np.array([1.0, 2.0]))
        a = FrfMatrix(grid, np.full((2, 1, 1), 2.0))
        b = FrfMatrix(grid, np.full((2, 2, 1), 3.0j))
        stacked = block_diag([a, b])
        assert stacked.shape == (3, 2)
        assert np.all(stacked.samples[:, 0, 0] == 2.0)
        assert np.all(stacked.samples[:, 1:, 1] == 3.0j)
        assert np.all(stacked.samples[:, 1:, 0] == 0.0)
        assert np.all(stacked.samples[:, 0, 1] == 0.0)

    def test_grid_mismatch(self):
        a = FrfMatrix(FrequencyGrid(np.array([1.0])), np.ones((1, 1, 1)))
        b = FrfMatrix(FrequencyGrid(np.array([2.0])), np.ones((1, 1, 1)))
        with pytest.raises(GridMismatch):
            block_diag([a, b])

    def test_empty(self):
        with pytest.raises(DimensionMismatch):
            block_diag([])


class TestStiffCoupling:

    def test_single_spring(self):
        assert stiff_coupling(5.0, [(0, 1)], 2).tolist() == [[-5.0, 5.0], [5.0, -5.0]]

    def test_zero_stiffness(self):
        assert not np.any(stiff_coupling(0.0, [(0, 1)], 3))

    @pytest.mark.parametrize("k_value, pairs, error", [
        (-1.0, [(0, 1)], InvalidParameter),
        (1.0, [(0, 0)], InvalidParameter),
        (1.0, [(0, 2)], IndexOutOfRange),
    ])
    def test_invalid(self, k_value, pairs, error):
        with pytest.raises(error):
            stiff_coupling(k_value, pairs, 2)


class TestTwoDofAssembly:

    def test_static_gain(self):
        system = TwoDofBuilder().assemble(FrequencyGrid(np.array([0.0])))
        assert system.g_a.samples[0, 0, 0].real == pytest.approx(190.0 / 28000.0, rel=1e-9)
        assert system.g_a.samples[0, 0, 0].imag == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("mode", [0, 1])
    def test_resonances_match_eigenvalues(self, mode):
        builder = TwoDofBuilder(d_1=1e-4, d_2=1e-4)
        eigvals = scipy.linalg.eigh(
            np.array([[190.0, -90.0], [-90.0, 190.0]]), np.diag([1.0, 2.0]), eigvals_only=True
        )
        omega_n = float(np.sqrt(eigvals[mode]))
        assert omega_n == pytest.approx([7.943, 14.897][mode], rel=1e-3)
        grid = FrequencyGrid(np.linspace(0.99 * omega_n, 1.01 * omega_n, 2001))
        system = builder.assemble(grid)
        peak = grid.points[int(np.argmax(system.g_a.norms()))]
        assert peak == pytest.approx(omega_n, rel=1e-3)

    def test_antiresonance(self):
        builder = TwoDofBuilder(d_1=1e-4, d_2=1e-4)
        omega_z = np.sqrt(95.0)
        grid = FrequencyGrid(np.linspace(0.99 * omega_z, 1.01 * omega_z, 2001))
        dip = grid.points[int(np.argmin(builder.assemble(grid).g_a.norms()))]
        assert dip == pytest.approx(omega_z, rel=1e-3)

    def test_uncoupled_system_is_module_one(self, small_grid):
        system = TwoDofBuilder(k=0.0).assemble(small_grid)
        assert np.allclose(system.g_a.samples, system.module_frfs[0].samples, rtol=1e-12)

    def test_heavy_neighbour_acts_as_ground(self, small_grid):
        system = TwoDofBuilder(m_2=1e9).assemble(small_grid)
        w = small_grid.points
        expected = 1.0 / (-w ** 2 + 0.3j * w + 190.0)
        assert np.allclose(system.g_a.samples[:, 0, 0], expected, rtol=1e-4)

    @settings(max_examples=25, deadline=None)
    @given(
        m_1=st.floats(0.2, 5.0), m_2=st.floats(0.2, 5.0),
        k_1=st.floats(10.0, 500.0), k=st.floats(0.0, 500.0),
    )
    def test_matches_monolithic_solve(self, m_1, m_2, k_1, k):
        builder = TwoDofBuilder(m_1=m_1, m_2=m_2, k_1=k_1, k=k)
        grid = FrequencyGrid.logspace_hz(0.1, 10.0, 15)
        system = builder.assemble(grid)
        assert np.allclose(system.g_a.samples[:, 0, 0], _monolithic_g11(builder, grid.points),
                           rtol=1e-8, atol=1e-14)


class TestNominalSystem:

    def test_lower_right_block_is_zero(self, two_dof_system):
        n = two_dof_system.nominal
        assert n.shape == (3, 3)
        assert np.all(n.samples[:, 2:, 2:] == 0.0)

    def test_zero_error_gives_zero_system_error(self, two_dof_system):
        n = two_dof_system.nominal
        zero = FrfMatrix(two_dof_system.grid, np.zeros((len(two_dof_system.grid), 2, 2)))
        assert np.allclose(perturbed_system(n, zero, two_dof_system.structure).samples, 0.0)

    def test_perturbed_system_matches_reassembly(self, small_grid):
        original = TwoDofBuilder().assemble(small_grid)
        redesigned = TwoDofBuilder(m_1=1.1, m_2=1.8).assemble(small_grid)
        e_b = original.g_b.with_samples(redesigned.g_b.samples - original.g_b.samples)
        e_a = perturbed_system(original.nominal, e_b, original.structure)
        direct = redesigned.g_a.samples - original.g_a.samples
        assert np.allclose(e_a.samples, direct, rtol=1e-8, atol=1e-14)

    def test_redesigned_system_frf(self, small_grid):
        original = TwoDofBuilder().assemble(small_grid)
        redesigned = TwoDofBuilder(m_1=0.8).assemble(small_grid)
        g_hat = original.redesigned_system_frf(redesigned.module_frfs)
        assert np.allclose(g_hat.samples, redesigned.g_a.samples)


class TestWellPosedness:

    @pytest.fixture
    def unit_loop(self):
        return InterconnectionStructure([[1.0]], [[1.0]], [[1.0]], ((1, 1),), (1, 1))

    def test_ill_posed(self, unit_loop):
        grid = FrequencyGrid(np.array([0.0, 2.0]))
        g_b = eval_second_order_frf(SecondOrderModel.scalar(1.0, 0.0, 1.0), grid)
        with pytest.raises(IllPosedInterconnection) as info:
            assemble_system_frf(g_b, unit_loop)
        assert info.value.omega == 0.0
        with pytest.raises(IllPosedInterconnection):
            nominal_system(g_b, unit_loop)

    def test_partition_mismatch(self, unit_loop):
        grid = FrequencyGrid(np.array([1.0]))
        g_b = FrfMatrix(grid, np.ones((1, 2, 1)))
        with pytest.raises(DimensionMismatch):
            assemble_system_frf(g_b, unit_loop)

    def test_module_count_checked(self, unit_loop):
        grid = FrequencyGrid(np.array([1.0]))
        frf = FrfMatrix(grid, np.ones((1, 1, 1)))
        with pytest.raises(DimensionMismatch):
            AssembledSystem((frf, frf), unit_loop)


def _random_closure_case(seed):
    """Random module stack G_B (dims up to 3) and a small random interconnection."""
    rng = np.random.default_rng(seed)
    dims = tuple((int(rng.integers(1, 4)), int(rng.integers(1, 4))) for _ in range(int(rng.integers(1, 4))))
    m_a, p_a = (int(v) for v in rng.integers(1, 4, 2))
    sum_p = sum(p for p, _ in dims)
    sum_m = sum(m for _, m in dims)
    structure = InterconnectionStructure(
        0.05 * rng.standard_normal((sum_m, sum_p)), rng.standard_normal((sum_m, m_a)),
        rng.standard_normal((p_a, sum_p)), dims, (m_a, p_a),
    )
    grid = FrequencyGrid(np.array([1.0, 2.0, 3.0]))
    modules = [
        FrfMatrix(grid, rng.standard_normal((3, p, m)) + 1j * rng.standard_normal((3, p, m)))
        for p, m in dims
    ]
    return structure, modules, rng


class TestRandomInterconnections:

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_closure_matches_dense_solve(self, seed):
        structure, modules, _ = _random_closure_case(seed)
        g_b = block_diag(modules)
        g_a = assemble_system_frf(g_b, structure)
        sum_p, sum_m = structure.total_outputs, structure.total_inputs
        for i, g in enumerate(g_b.samples):
            # [y_B; u_B] from y_B = G_B u_B and u_B = K_BB y_B + K_BA u_A, one column per u_A
            lhs = np.block([[np.eye(sum_p), -g], [-structure.k_bb, np.eye(sum_m)]])
            rhs = np.vstack([np.zeros((sum_p, structure.m_a)), structure.k_ba])
            y_b = np.linalg.solve(lhs, rhs)[:sum_p]
            assert np.allclose(g_a.samples[i], structure.k_ab @ y_b, rtol=1e-9, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_nominal_system_predicts_reassembly(self, seed):
        structure, modules, rng = _random_closure_case(seed)
        g_b = block_diag(modules)
        noise = rng.standard_normal(g_b.samples.shape) + 1j * rng.standard_normal(g_b.samples.shape)
        e_b = g_b.with_samples(0.1 * noise * block_mask(structure))
        direct = assemble_system_frf(g_b.with_samples(g_b.samples + e_b.samples), structure).samples
        direct = direct - assemble_system_frf(g_b, structure).samples
        predicted = perturbed_system(nominal_system(g_b, structure), e_b, structure).samples
        assert np.allclose(predicted, direct, rtol=1e-8, atol=1e-11)


def block_mask(structure):
    """Ones on the module diagonal blocks of G_B."""
    mask = np.zeros((structure.total_outputs, structure.total_inputs))
    for rows, cols in zip(structure.output_slices(), structure.input_slices()):
        mask[rows, cols] = 1.0
    return mask


def test_reciprocity_of_swapped_drive_and_reading_points():
    grid = FrequencyGrid.logspace_hz(0.5, 50.0, 50)
    forward = PlatePillarBuilder(r=0.25).assemble(grid).g_a.samples
    backward = PlatePillarBuilder(r=0.75).assemble(grid).g_a.samples
    scale = np.max(np.abs(forward), axis=(1, 2), keepdims=True)
    assert np.all(np.abs(forward - backward) <= 1e-10 * scale)
