"""
Error hierarchy for the toolkit.

Every error raised on purpose derives from ModSpecError and carries the
context (frequency, cell, file path) needed to report it.
"""

from typing import Any, List, Optional, Sequence, Tuple


class ModSpecError(Exception):
    """Root of all toolkit errors."""


class EmptyGrid(ModSpecError, ValueError):
    """A frequency grid without points."""

    def __init__(self, message: str = "empty frequency grid"):
        super().__init__(message)


class GridMismatch(ModSpecError, ValueError):
    """Two FRF-valued operands live on different frequency grids."""


class ShapeMismatch(ModSpecError, ValueError):
    """Two FRF-valued operands have different channel shapes."""


class DimensionMismatch(ModSpecError, ValueError):
    """Matrix dimensions inconsistent with the module partition."""


class IndexOutOfRange(ModSpecError, ValueError):
    """A channel or DOF index outside the addressed object."""


class InvalidParameter(ModSpecError, ValueError):
    """A model or perturbation parameter outside its valid range."""


class NotSiso(ModSpecError, ValueError):
    """An operation defined for single-input single-output FRFs only."""


class NotHermitian(ModSpecError, ValueError):
    """A matrix that should be Hermitian is not."""


class SingularDynamicStiffness(ModSpecError):
    """The dynamic stiffness -w^2 M + i w D + K is singular at some frequency."""

    def __init__(self, omega: float, rcond: float):
        self.omega = omega
        self.rcond = rcond
        super().__init__(
            f"dynamic stiffness singular at omega={omega:.6g} rad/s (rcond={rcond:.3e})"
        )

    def __reduce__(self):
        return type(self), (self.omega, self.rcond)


class IllPosedInterconnection(ModSpecError):
    """I - K_BB G_B is (numerically) singular at some frequency."""

    def __init__(self, omega: float, rcond: float, cell: Optional[Tuple[Any, ...]] = None):
        self.omega = omega
        self.rcond = rcond
        self.cell = cell
        where = f" in cell {cell}" if cell is not None else ""
        super().__init__(
            f"ill-posed interconnection at omega={omega:.6g} rad/s{where} "
            f"(rcond={rcond:.3e})"
        )

    def __reduce__(self):
        return type(self), (self.omega, self.rcond, self.cell)

    def at_cell(self, cell: Tuple[Any, ...]) -> 'IllPosedInterconnection':
        """Copy of this error tagged with the parameter-grid cell that produced it."""
        return IllPosedInterconnection(self.omega, self.rcond, cell)


class ZeroBaselineNorm(ModSpecError, ValueError):
    """A relative specification around a baseline that vanishes at some frequency."""

    def __init__(self, omega: float):
        self.omega = omega
        super().__init__(f"baseline FRF has zero norm at omega={omega:.6g} rad/s")

    def __reduce__(self):
        return type(self), (self.omega,)


class Infeasible(ModSpecError):
    """No module weights satisfy the sufficient condition at the listed frequencies."""

    def __init__(self, omegas: Sequence[float], partial: Any = None):
        self.omegas: List[float] = list(omegas)
        self.partial = partial
        listed = ", ".join(f"{w:.6g}" for w in self.omegas[:10])
        more = "..." if len(self.omegas) > 10 else ""
        super().__init__(f"infeasible at {len(self.omegas)} frequencies (rad/s): {listed}{more}")

    def __reduce__(self):
        return type(self), (self.omegas, self.partial)


class SolverFailure(ModSpecError):
    """The conic solver failed to return a usable point."""

    def __init__(self, message: str, omegas: Sequence[float] = (), partial: Any = None):
        self.omegas: List[float] = list(omegas)
        self.partial = partial
        super().__init__(message)

    def __reduce__(self):
        return type(self), (str(self), self.omegas, self.partial)


class GuaranteeViolated(ModSpecError):
    """An in-contract module perturbation broke the system specification."""

    def __init__(self, sample_index: int, margin: float, omega: float, sample: Any = None):
        self.sample_index = sample_index
        self.margin = margin
        self.omega = omega
        self.sample = sample
        super().__init__(
            f"sample {sample_index} violates the system spec: margin {margin:.6g} "
            f"at omega={omega:.6g} rad/s"
        )

    def __reduce__(self):
        return type(self), (self.sample_index, self.margin, self.omega, self.sample)


class RegionInclusionViolated(ModSpecError):
    """A parameter cell accepted by the module specs fails the system spec."""

    def __init__(self, cells: Sequence[Tuple[float, ...]]):
        self.cells: List[Tuple[float, ...]] = list(cells)
        super().__init__(
            f"{len(self.cells)} cells accepted by the module specs fail the system spec, "
            f"first {self.cells[0] if self.cells else None}"
        )

    def __reduce__(self):
        return type(self), (self.cells,)


class ModelFileError(ModSpecError):
    """A model, spec or FRF file that cannot be read."""

    def __init__(self, path: str, json_path: str, message: str):
        self.path = path
        self.message = message
        self.json_path = json_path
        super().__init__(f"{path}: {json_path or '/'}: {message}")

    def __reduce__(self):
        return type(self), (self.path, self.json_path, self.message)


class NotConverged(UserWarning):
    """The alternation stopped early (max_iters or a failed step); the best feasible iterate is returned."""
