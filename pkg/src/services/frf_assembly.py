"""
FRF algebra for modular systems.

Evaluates module FRFs from second-order models, stacks them block-diagonally,
closes the interconnection and forms the nominal system N used by the
module-spec synthesis. All operations are vectorized over the grid.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.domain.errors import (
    DimensionMismatch, GridMismatch, IllPosedInterconnection, IndexOutOfRange,
    InvalidParameter, SingularDynamicStiffness
)
from src.domain.models import FrequencyGrid, FrfMatrix, InterconnectionStructure, SecondOrderModel
from src.logger import get_logger

logger = get_logger()

DEFAULT_RCOND_THRESHOLD = 1e-12
# Dynamic stiffness counts as singular below this reciprocal condition number
SINGULAR_RCOND = 1e-15


def _rcond(stack: np.ndarray) -> np.ndarray:
    """Reciprocal 2-norm condition number of each square matrix in a stack."""
    sv = np.linalg.svd(stack, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        rc = sv[:, -1] / sv[:, 0]
    return np.where(np.isfinite(rc), rc, 0.0)


def eval_second_order_frf(model: SecondOrderModel, grid: FrequencyGrid) -> FrfMatrix:
    """
    Evaluate C (-w^2 M + i w D + K)^-1 B at every grid point.

    Args:
        model: Second-order module model
        grid: Frequency grid (rad/s)

    Returns:
        FRF of shape (p, m) over the grid

    Raises:
        SingularDynamicStiffness: If the dynamic stiffness is singular at some frequency
    """
    w = grid.points[:, None, None]
    z = -w ** 2 * model.mass + 1j * w * model.damping + model.stiffness
    rc = _rcond(z)
    bad = np.flatnonzero(rc < SINGULAR_RCOND)
    if bad.size:
        i = int(bad[0])
        raise SingularDynamicStiffness(float(grid.points[i]), float(rc[i]))

    rhs = np.broadcast_to(model.input_map.astype(complex), (len(grid),) + model.input_map.shape)
    samples = model.output_map @ np.linalg.solve(z, rhs)
    prefix = f"{model.name}." if model.name else ""
    return FrfMatrix(
        grid,
        samples,
        output_labels=tuple(f"{prefix}y{i + 1}" for i in range(model.n_outputs)),
        input_labels=tuple(f"{prefix}u{i + 1}" for i in range(model.n_inputs)),
        unit="m/N",
    )


def block_diag(frfs: Sequence[FrfMatrix]) -> FrfMatrix:
    """
    Stack module FRFs into the block-diagonal G_B.

    Raises:
        GridMismatch: If the FRFs are sampled on different grids
    """
    if not frfs:
        raise DimensionMismatch("block_diag needs at least one FRF")
    grid = frfs[0].grid
    for frf in frfs[1:]:
        if frf.grid != grid:
            raise GridMismatch("module FRFs are sampled on different frequency grids")
    if len(frfs) == 1:
        return frfs[0]

    total_p = sum(f.n_outputs for f in frfs)
    total_m = sum(f.n_inputs for f in frfs)
    samples = np.zeros((len(grid), total_p, total_m), dtype=complex)
    row = col = 0
    for frf in frfs:
        p, m = frf.shape
        samples[:, row:row + p, col:col + m] = frf.samples
        row += p
        col += m
    return FrfMatrix(
        grid,
        samples,
        output_labels=sum((f.output_labels for f in frfs), ()),
        input_labels=sum((f.input_labels for f in frfs), ()),
        unit=frfs[0].unit,
    )


def _check_partition(g_b: FrfMatrix, k: InterconnectionStructure) -> None:
    if g_b.shape != (k.total_outputs, k.total_inputs):
        raise DimensionMismatch(
            f"G_B is {g_b.shape[0]}x{g_b.shape[1]}, the interconnection expects "
            f"{k.total_outputs}x{k.total_inputs}"
        )


def _closure(g_b: FrfMatrix, k: InterconnectionStructure, rcond_threshold: float) -> np.ndarray:
    """I - K_BB G_B per frequency, after the well-posedness check."""
    eye = np.eye(k.total_inputs)
    closure = eye - k.k_bb @ g_b.samples
    rc = _rcond(closure) if k.total_inputs else np.ones(len(g_b.grid))
    bad = np.flatnonzero(rc < rcond_threshold)
    if bad.size:
        i = int(bad[0])
        raise IllPosedInterconnection(float(g_b.grid.points[i]), float(rc[i]))
    return closure


def assemble_system_frf(g_b: FrfMatrix, k: InterconnectionStructure,
                        rcond_threshold: float = DEFAULT_RCOND_THRESHOLD) -> FrfMatrix:
    """
    Close the interconnection: G_A = K_AB G_B (I - K_BB G_B)^-1 K_BA.

    The same formula assembles redesigned systems from redesigned modules.

    Raises:
        DimensionMismatch: If G_B does not match the module partition
        IllPosedInterconnection: If I - K_BB G_B is numerically singular
    """
    _check_partition(g_b, k)
    closure = _closure(g_b, k, rcond_threshold)
    n_freq = len(g_b.grid)
    rhs = np.broadcast_to(k.k_ba.astype(complex), (n_freq,) + k.k_ba.shape)
    samples = k.k_ab @ g_b.samples @ np.linalg.solve(closure, rhs)
    return FrfMatrix(g_b.grid, samples, unit=g_b.unit)


def nominal_system(g_b: FrfMatrix, k: InterconnectionStructure,
                   rcond_threshold: float = DEFAULT_RCOND_THRESHOLD) -> FrfMatrix:
    """
    Nominal system N of the original modules.

    N = [[K_BB (I - G_B K_BB)^-1, (I - K_BB G_B)^-1 K_BA],
         [K_AB (I - G_B K_BB)^-1, 0]]

    Rows follow [u_B; y_A], columns follow [y_B; u_A]; the lower-right block
    is exactly zero.
    """
    _check_partition(g_b, k)
    closure = _closure(g_b, k, rcond_threshold)
    n_freq = len(g_b.grid)
    sum_m, sum_p = k.total_inputs, k.total_outputs
    m_a, p_a = k.m_a, k.p_a

    k_bb = np.broadcast_to(k.k_bb.astype(complex), (n_freq, sum_m, sum_p))
    k_ba = np.broadcast_to(k.k_ba.astype(complex), (n_freq, sum_m, m_a))
    # (I - K G)^-1 K = K (I - G K)^-1
    n11 = np.linalg.solve(closure, k_bb)
    n12 = np.linalg.solve(closure, k_ba)
    # K_AB (I - G K)^-1 = K_AB (I + G (I - K G)^-1 K)
    n21 = k.k_ab + k.k_ab @ g_b.samples @ n11

    samples = np.zeros((n_freq, sum_m + p_a, sum_p + m_a), dtype=complex)
    samples[:, :sum_m, :sum_p] = n11
    samples[:, :sum_m, sum_p:] = n12
    samples[:, sum_m:, :sum_p] = n21
    return FrfMatrix(g_b.grid, samples)


def perturbed_system(n: FrfMatrix, e_b: FrfMatrix, k: InterconnectionStructure,
                     rcond_threshold: float = DEFAULT_RCOND_THRESHOLD) -> FrfMatrix:
    """
    System error E_A = N21 E_B (I - N11 E_B)^-1 N12 for a stacked module error E_B.

    Ĝ_A = G_A + E_A; used to cross-check assembly against the nominal system.
    """
    sum_m, sum_p = k.total_inputs, k.total_outputs
    n11 = n.samples[:, :sum_m, :sum_p]
    n12 = n.samples[:, :sum_m, sum_p:]
    n21 = n.samples[:, sum_m:, :sum_p]
    closure = np.eye(sum_m) - n11 @ e_b.samples
    rc = _rcond(closure)
    bad = np.flatnonzero(rc < rcond_threshold)
    if bad.size:
        i = int(bad[0])
        raise IllPosedInterconnection(float(n.grid.points[i]), float(rc[i]))
    return FrfMatrix(n.grid, n21 @ e_b.samples @ np.linalg.solve(closure, n12))


def stiff_coupling(k_value: float, pairs: Sequence[Tuple[int, int]], n_channels: int) -> np.ndarray:
    """
    K_BB contribution of springs between collocated channels.

    A spring of stiffness k_value between channels a and b adds -k on the
    diagonal entries (a, a), (b, b) and +k on (a, b), (b, a).

    Args:
        k_value: Spring stiffness in N/m (0 gives no contribution)
        pairs: Channel index pairs joined by a spring
        n_channels: Number of collocated module channels

    Returns:
        n_channels x n_channels contribution to K_BB

    Raises:
        IndexOutOfRange: If a channel index is outside [0, n_channels)
        InvalidParameter: If k_value is negative or a pair joins a channel to itself
    """
    if k_value < 0 or not np.isfinite(k_value):
        raise InvalidParameter(f"coupling stiffness must be a non-negative number, got {k_value}")
    contribution = np.zeros((n_channels, n_channels))
    for a, b in pairs:
        for idx in (a, b):
            if not 0 <= idx < n_channels:
                raise IndexOutOfRange(f"channel {idx} outside 0..{n_channels - 1}")
        if a == b:
            raise InvalidParameter(f"spring joins channel {a} to itself")
        contribution[a, a] -= k_value
        contribution[b, b] -= k_value
        contribution[a, b] += k_value
        contribution[b, a] += k_value
    return contribution


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Module FRFs plus their interconnection; caches G_B, G_A and N."""
    module_frfs: Tuple[FrfMatrix, ...]
    structure: InterconnectionStructure
    names: Tuple[str, ...] = ()
    rcond_threshold: float = DEFAULT_RCOND_THRESHOLD

    def __post_init__(self):
        frfs = tuple(self.module_frfs)
        if len(frfs) != self.structure.n_modules:
            raise DimensionMismatch(
                f"{len(frfs)} module FRFs for an interconnection of {self.structure.n_modules} modules"
            )
        for j, (frf, dims) in enumerate(zip(frfs, self.structure.module_dims)):
            if frf.shape != dims:
                raise DimensionMismatch(f"module {j} FRF is {frf.shape}, the interconnection expects {dims}")
        names = tuple(self.names) or tuple(f"module_{j + 1}" for j in range(len(frfs)))
        object.__setattr__(self, "module_frfs", frfs)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_models(cls, models: Sequence[SecondOrderModel], structure: InterconnectionStructure,
                    grid: FrequencyGrid, rcond_threshold: float = DEFAULT_RCOND_THRESHOLD) -> 'AssembledSystem':
        frfs = tuple(eval_second_order_frf(model, grid) for model in models)
        names = tuple(model.name or f"module_{j + 1}" for j, model in enumerate(models))
        return cls(frfs, structure, names, rcond_threshold)

    @property
    def grid(self) -> FrequencyGrid:
        return self.module_frfs[0].grid

    @cached_property
    def g_b(self) -> FrfMatrix:
        return block_diag(self.module_frfs)

    @cached_property
    def g_a(self) -> FrfMatrix:
        return assemble_system_frf(self.g_b, self.structure, self.rcond_threshold)

    @cached_property
    def nominal(self) -> FrfMatrix:
        return nominal_system(self.g_b, self.structure, self.rcond_threshold)

    def with_modules(self, frfs: Sequence[FrfMatrix], names: Optional[Sequence[str]] = None) -> 'AssembledSystem':
        """Same interconnection, redesigned module FRFs."""
        return AssembledSystem(tuple(frfs), self.structure, tuple(names or self.names), self.rcond_threshold)

    def redesigned_system_frf(self, frfs: Sequence[FrfMatrix]) -> FrfMatrix:
        """Ĝ_A for redesigned module FRFs."""
        return assemble_system_frf(block_diag(list(frfs)), self.structure, self.rcond_threshold)


def module_frfs(models: Sequence[SecondOrderModel], grid: FrequencyGrid) -> List[FrfMatrix]:
    return [eval_second_order_frf(model, grid) for model in models]
