"""Tests for spec construction, membership checks and disc radii."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.domain.errors import GridMismatch, InvalidParameter, NotSiso, ShapeMismatch, ZeroBaselineNorm
from src.domain.models import FrequencyGrid, FrfMatrix
from src.services.spec_service import (
    check_module_spec, check_system_spec, disc_radii, error_frf, interpolate_gamma,
    module_margins, module_spec_from_weights, spec_disc_radius, system_spec_from_absolute_gamma,
    system_spec_from_relative_gamma, system_spec_from_weights
)


@pytest.fixture
def grid():
    return FrequencyGrid(np.array([1.0, 2.0, 3.0]))


def constant_frf(grid, value, shape=(1, 1)):
    samples = np.zeros((len(grid),) + shape, dtype=complex)
    samples[...] = value
    return FrfMatrix(grid, samples)


class TestSystemSpec:

    def test_relative_gamma_weights(self, grid):
        g = constant_frf(grid, 0.01)
        spec = system_spec_from_relative_gamma(g, 0.05)
        assert np.allclose(spec.v_a.values, 0.0005 ** -0.5)
        assert np.allclose(spec.w_a.values, 0.0005 ** -0.5)

    def test_relative_gamma_accepts_and_rejects(self, grid):
        g = constant_frf(grid, 0.01)
        spec = system_spec_from_relative_gamma(g, 0.05)
        inside = check_system_spec(spec, constant_frf(grid, 0.01 * 1.049))
        outside = check_system_spec(spec, constant_frf(grid, 0.01 * 1.051))
        assert inside.overall
        assert inside.max_margin == pytest.approx(0.98, rel=1e-9)
        assert not outside.overall
        assert outside.max_margin == pytest.approx(1.02, rel=1e-9)

    def test_relative_scale_for_quarter_gain(self, grid):
        spec = system_spec_from_relative_gamma(constant_frf(grid, 0.25), 0.25)
        assert spec.v_a.values[0, 0] == pytest.approx(4.0)

    def test_boundary_fails_strictly(self, grid):
        g = constant_frf(grid, 0.25)
        spec = system_spec_from_weights(g, [4.0], [4.0])
        verdict = check_system_spec(spec, constant_frf(grid, 0.3125))
        assert np.all(verdict.margins == 1.0)
        assert not verdict.overall
        assert verdict.failing_omegas == [1.0, 2.0, 3.0]

    def test_mimo_margin_is_largest_singular_value(self, grid):
        g = constant_frf(grid, 0.0, shape=(2, 2))
        spec = system_spec_from_weights(g, [1.0, 1.0], [1.0, 1.0])
        g_hat = g.with_samples(np.broadcast_to(np.diag([0.5, 0.9]), (3, 2, 2)))
        verdict = check_system_spec(spec, g_hat)
        assert verdict.max_margin == pytest.approx(0.9)
        assert verdict.overall

    def test_channel_weights_scale_rows(self, grid):
        g = constant_frf(grid, 0.0, shape=(3, 3))
        spec = system_spec_from_weights(g, [3.0, 1.0, 1.0], [1.0, 1.0, 1.0])
        g_hat = g.with_samples(np.broadcast_to(0.1 * np.eye(3), (3, 3, 3)))
        assert check_system_spec(spec, g_hat).max_margin == pytest.approx(0.3)

    def test_per_frequency_weights(self, grid):
        g = constant_frf(grid, 1.0)
        spec = system_spec_from_weights(g, [[1.0], [2.0], [3.0]], [1.0])
        verdict = check_system_spec(spec, constant_frf(grid, 1.1))
        assert np.allclose(verdict.margins, [0.1, 0.2, 0.3])

    @settings(max_examples=50, deadline=None)
    @given(gamma=st.floats(1e-6, 1e3), error=st.floats(0.0, 1e3))
    def test_absolute_gamma_margin(self, gamma, error):
        grid = FrequencyGrid(np.array([1.0]))
        g = constant_frf(grid, 0.5)
        spec = system_spec_from_absolute_gamma(g, gamma)
        g_hat = constant_frf(grid, 0.5 + error)
        actual = abs(g_hat.samples[0, 0, 0] - 0.5)
        verdict = check_system_spec(spec, g_hat)
        assert verdict.margins[0] == pytest.approx(actual / gamma, rel=1e-9, abs=1e-12)

    def test_zero_baseline(self, grid):
        g = FrfMatrix(grid, np.array([1.0, 0.0, 1.0]))
        with pytest.raises(ZeroBaselineNorm) as info:
            system_spec_from_relative_gamma(g, 0.1)
        assert info.value.omega == 2.0

    @pytest.mark.parametrize("gamma", [0.0, -1.0, np.inf])
    def test_invalid_gamma(self, grid, gamma):
        with pytest.raises(InvalidParameter):
            system_spec_from_absolute_gamma(constant_frf(grid, 1.0), gamma)

    def test_misaligned_candidate(self, grid):
        spec = system_spec_from_absolute_gamma(constant_frf(grid, 1.0), 0.1)
        with pytest.raises(GridMismatch):
            check_system_spec(spec, constant_frf(FrequencyGrid(np.array([1.0, 2.0])), 1.0))
        with pytest.raises(ShapeMismatch):
            check_system_spec(spec, constant_frf(grid, 1.0, shape=(2, 1)))


class TestModuleSpec:

    def test_boundary_passes(self, grid):
        spec = module_spec_from_weights("m", constant_frf(grid, 0.0), [2.0], [2.0])
        assert check_module_spec(spec, constant_frf(grid, 4.0)).overall
        failing = check_module_spec(spec, constant_frf(grid, 4.0001))
        assert not failing.overall
        assert failing.max_margin == pytest.approx(1.000025)

    def test_module_margins_of_raw_errors(self, grid):
        spec = module_spec_from_weights("m", constant_frf(grid, 0.0, (1, 2)), [2.0], [1.0, 4.0])
        error = np.broadcast_to(np.array([[2.0, 0.0]]), (3, 1, 2))
        assert np.allclose(module_margins(spec, error), 1.0)

    def test_to_dict_carries_baseline(self, grid):
        spec = module_spec_from_weights("m", constant_frf(grid, 0.5), [2.0], [3.0])
        data = spec.to_dict()
        assert data["type"] == "module"
        assert data["name"] == "m"
        assert data["weights"]["w"] == [[2.0]] * 3
        assert data["baseline"]["real"][0] == [[0.5]]


class TestDiscRadius:

    def test_system_disc_is_relative_bound(self, grid):
        g = FrfMatrix(grid, np.array([0.1, 0.2j, -0.4]))
        spec = system_spec_from_relative_gamma(g, 0.05)
        assert np.allclose(disc_radii(spec), [0.005, 0.01, 0.02])
        assert spec_disc_radius(spec, 2.0) == pytest.approx(0.01)

    def test_module_disc(self, grid):
        spec = module_spec_from_weights("m", constant_frf(grid, 1.0), [2.0], [0.5])
        assert np.allclose(disc_radii(spec), 1.0)

    def test_requires_siso(self, grid):
        spec = system_spec_from_absolute_gamma(constant_frf(grid, 1.0, (2, 1)), 0.1)
        with pytest.raises(NotSiso):
            disc_radii(spec)

    def test_off_grid_frequency(self, grid):
        spec = system_spec_from_absolute_gamma(constant_frf(grid, 1.0), 0.1)
        with pytest.raises(GridMismatch):
            spec_disc_radius(spec, 1.5)

    def test_verdicts_match_the_disc_on_random_perturbations(self, rng):
        grid = FrequencyGrid(np.linspace(1.0, 1000.0, 1000))
        baseline = FrfMatrix(grid, rng.standard_normal(1000) + 1j * rng.standard_normal(1000))
        left, right = rng.uniform(0.1, 10.0, (2, 1000, 1))
        system = system_spec_from_weights(baseline, left, right)
        module = module_spec_from_weights("m", baseline, left, right)
        phase = np.exp(2j * np.pi * rng.uniform(size=1000))
        for spec, check in ((system, check_system_spec), (module, check_module_spec)):
            radius = disc_radii(spec)
            size = radius * rng.uniform(0.0, 2.0, 1000)
            candidate = baseline.with_samples(baseline.samples[:, 0, 0] + size * phase)
            clear = np.abs(size / radius - 1.0) > 1e-12
            inside = np.abs(candidate.samples[:, 0, 0] - baseline.samples[:, 0, 0]) < radius
            assert np.array_equal(check(spec, candidate).passed[clear], inside[clear])
            assert clear.sum() > 990

    def test_boundary_of_the_disc(self, grid):
        g = constant_frf(grid, 1.0)
        system = system_spec_from_absolute_gamma(g, 0.25)
        module = module_spec_from_weights("m", g, [0.5], [0.5])
        on_disc = g.with_samples(g.samples + 0.25)
        assert not check_system_spec(system, on_disc).overall
        assert check_module_spec(module, on_disc).overall


class TestInterpolateGamma:

    def test_log_linear(self):
        grid = FrequencyGrid.from_hz([1.0, 10.0, 100.0, 1000.0])
        gamma = interpolate_gamma(grid, [1.0, 100.0], [0.1, 0.3])
        assert np.allclose(gamma, [0.1, 0.2, 0.3, 0.3])

    def test_single_breakpoint(self, grid):
        assert np.all(interpolate_gamma(grid, [5.0], [0.2]) == 0.2)

    def test_invalid_breakpoints(self, grid):
        with pytest.raises(InvalidParameter):
            interpolate_gamma(grid, [], [])
        with pytest.raises(InvalidParameter):
            interpolate_gamma(grid, [10.0, 1.0], [0.1, 0.2])


def test_error_frf(grid):
    g = constant_frf(grid, 1.0 + 1.0j)
    e = error_frf(constant_frf(grid, 2.0), g)
    assert np.allclose(e.samples, 1.0 - 1.0j)
