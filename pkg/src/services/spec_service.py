"""
System and module FRF specifications.

Constructors turn user intents (relative or absolute error bounds, explicit
channel weights) into weighted specification sets; checks evaluate
membership and report per-frequency margins.
"""

from typing import Any, Sequence, Union

import numpy as np

from src.domain.errors import InvalidParameter, NotSiso, ZeroBaselineNorm
from src.domain.models import FrequencyGrid, FrfMatrix, spectral_norms
from src.domain.specs import (
    DiagonalWeight, ErrorFrf, ModuleSpec, SpecVerdict, SystemSpec, WeightSide
)
from src.logger import get_logger

logger = get_logger()

Spec = Union[SystemSpec, ModuleSpec]


def _per_frequency(gamma: Any, grid: FrequencyGrid) -> np.ndarray:
    values = np.broadcast_to(np.asarray(gamma, dtype=float), (len(grid),)).copy()
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise InvalidParameter("gamma must be finite and strictly positive at every frequency")
    return values


def interpolate_gamma(grid: FrequencyGrid, omega_hz: Sequence[float], gamma: Sequence[float]) -> np.ndarray:
    """
    Interpolate gamma breakpoints (Hz) onto the grid, linearly in log-frequency.

    A single breakpoint gives a constant; values beyond the ends are held.
    """
    f_pts = np.asarray(omega_hz, dtype=float)
    g_pts = np.asarray(gamma, dtype=float)
    if f_pts.size == 0 or f_pts.size != g_pts.size:
        raise InvalidParameter("relative_gamma needs matching, non-empty omega_hz and gamma lists")
    if f_pts.size == 1:
        return _per_frequency(g_pts[0], grid)
    if np.any(f_pts <= 0) or np.any(np.diff(f_pts) <= 0):
        raise InvalidParameter("relative_gamma breakpoints must be positive and increasing")
    f_grid = np.maximum(grid.hz, np.finfo(float).tiny)
    return _per_frequency(np.interp(np.log(f_grid), np.log(f_pts), g_pts), grid)


def error_frf(g_hat: FrfMatrix, g: FrfMatrix) -> ErrorFrf:
    """Grid-aligned difference Ĝ - G."""
    g.require_compatible(g_hat)
    return g.with_samples(g_hat.samples - g.samples)


def system_spec_from_relative_gamma(g_a: FrfMatrix, gamma: Any) -> SystemSpec:
    """
    Relative bound ||G_A - Ĝ_A|| / ||G_A|| < gamma.

    V_A = W_A = (gamma ||G_A||)^(-1/2) I at every grid point.

    Args:
        g_a: Baseline system FRF
        gamma: Positive scalar or one value per grid point

    Raises:
        ZeroBaselineNorm: If ||G_A|| vanishes at some grid point
    """
    gammas = _per_frequency(gamma, g_a.grid)
    norms = g_a.norms()
    zero = np.flatnonzero(norms <= 0)
    if zero.size:
        raise ZeroBaselineNorm(float(g_a.grid.points[zero[0]]))
    scale = (gammas * norms) ** -0.5
    p_a, m_a = g_a.shape
    return SystemSpec(
        baseline=g_a,
        v_a=DiagonalWeight.uniform(g_a.grid, scale, p_a, WeightSide.OUTPUT),
        w_a=DiagonalWeight.uniform(g_a.grid, scale, m_a, WeightSide.INPUT),
    )


def system_spec_from_absolute_gamma(g_a: FrfMatrix, gamma: Any) -> SystemSpec:
    """Absolute bound ||G_A - Ĝ_A|| < gamma, i.e. V_A = W_A = gamma^(-1/2) I."""
    scale = _per_frequency(gamma, g_a.grid) ** -0.5
    p_a, m_a = g_a.shape
    return SystemSpec(
        baseline=g_a,
        v_a=DiagonalWeight.uniform(g_a.grid, scale, p_a, WeightSide.OUTPUT),
        w_a=DiagonalWeight.uniform(g_a.grid, scale, m_a, WeightSide.INPUT),
    )


def system_spec_from_weights(g_a: FrfMatrix, v: Any, w: Any) -> SystemSpec:
    """
    System spec from explicit channel weights.

    v (p_A entries) and w (m_A entries) are either one vector for all
    frequencies or one row per grid point.
    """
    p_a, m_a = g_a.shape
    return SystemSpec(
        baseline=g_a,
        v_a=DiagonalWeight(g_a.grid, _rows(v, len(g_a.grid), p_a), WeightSide.OUTPUT),
        w_a=DiagonalWeight(g_a.grid, _rows(w, len(g_a.grid), m_a), WeightSide.INPUT),
    )


def module_spec_from_weights(name: str, baseline: FrfMatrix, w: Any, v: Any) -> ModuleSpec:
    """Module spec from explicit weights: w on the p_j outputs, v on the m_j inputs."""
    p, m = baseline.shape
    return ModuleSpec(
        name=name,
        baseline=baseline,
        w_j=DiagonalWeight(baseline.grid, _rows(w, len(baseline.grid), p), WeightSide.OUTPUT),
        v_j=DiagonalWeight(baseline.grid, _rows(v, len(baseline.grid), m), WeightSide.INPUT),
    )


def _rows(values: Any, n_freq: int, dim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim <= 1 and arr.size == dim:
        return np.broadcast_to(arr.reshape(1, dim), (n_freq, dim)).copy()
    if arr.ndim == 1 and dim == 1 and arr.size == n_freq:
        return arr.reshape(n_freq, 1)
    return arr


def _weighted_error(left: np.ndarray, error: np.ndarray, right: np.ndarray) -> np.ndarray:
    """diag(left) E diag(right), per frequency."""
    return left[:, :, None] * error * right[:, None, :]


def check_system_spec(spec: SystemSpec, g_a_hat: FrfMatrix) -> SpecVerdict:
    """
    Evaluate ||V_A (G_A - Ĝ_A) W_A|| < 1 per frequency.

    Raises:
        GridMismatch, ShapeMismatch: If Ĝ_A does not align with the baseline
    """
    error = error_frf(g_a_hat, spec.baseline)
    margins = spectral_norms(_weighted_error(spec.v_a.values, error.samples, spec.w_a.values))
    return SpecVerdict(spec.grid, margins, strict=True)


def check_module_spec(spec: ModuleSpec, g_j_hat: FrfMatrix) -> SpecVerdict:
    """
    Evaluate ||W_j^-1 (Ĝ_j - G_j) V_j^-1|| <= 1 per frequency.

    Raises:
        GridMismatch, ShapeMismatch: If Ĝ_j does not align with the baseline
    """
    error = error_frf(g_j_hat, spec.baseline)
    margins = spectral_norms(_weighted_error(1.0 / spec.w_j.values, error.samples, 1.0 / spec.v_j.values))
    return SpecVerdict(spec.grid, margins, strict=False)


def module_margins(spec: ModuleSpec, error: np.ndarray) -> np.ndarray:
    """Module-spec margins of a raw error stack (n_freq, p_j, m_j)."""
    return spectral_norms(_weighted_error(1.0 / spec.w_j.values, error, 1.0 / spec.v_j.values))


def disc_radii(spec: Spec) -> np.ndarray:
    """
    Radius of the allowed disc around a SISO baseline, per grid point.

    1/(V_A W_A) for system specs, W_j V_j for module specs.

    Raises:
        NotSiso: If the spec is not single-input single-output
    """
    if not spec.baseline.is_siso:
        raise NotSiso(f"disc radius needs a SISO spec, got {spec.baseline.shape}")
    if isinstance(spec, SystemSpec):
        return 1.0 / (spec.v_a.values[:, 0] * spec.w_a.values[:, 0])
    return spec.w_j.values[:, 0] * spec.v_j.values[:, 0]


def spec_disc_radius(spec: Spec, omega: float) -> float:
    """Disc radius at one grid frequency omega (rad/s)."""
    return float(disc_radii(spec)[spec.grid.index_of(omega)])
