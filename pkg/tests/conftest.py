"""Shared fixtures: the two-DOF model, small grids and session-cached synthesis results."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.domain.models import FrequencyGrid, SynthesisOptions  # noqa: E402
from src.model_library import TwoDofBuilder  # noqa: E402
from src.services.spec_service import system_spec_from_relative_gamma  # noqa: E402
from src.services.synthesis_service import SynthesisService  # noqa: E402


@pytest.fixture
def builder():
    return TwoDofBuilder()


@pytest.fixture(scope="session")
def small_grid():
    """20 log-spaced points over 0.5-5 Hz."""
    return FrequencyGrid.logspace_hz(0.5, 5.0, 20)


@pytest.fixture(scope="session")
def two_dof_system(small_grid):
    return TwoDofBuilder().assemble(small_grid)


@pytest.fixture(scope="session")
def two_dof_spec(two_dof_system):
    return system_spec_from_relative_gamma(two_dof_system.g_a, 0.05)


@pytest.fixture(scope="session")
def two_dof_result(two_dof_system, two_dof_spec):
    """Module specs for the two-DOF model, relative gamma 0.05, synthesized once."""
    with SynthesisService(options=SynthesisOptions(), jobs=1) as service:
        return service.synthesize(two_dof_system, two_dof_spec)


def random_hermitian(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
