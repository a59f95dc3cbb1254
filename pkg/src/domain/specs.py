"""
Specification sets, verdicts and synthesis records.

Weights are positive diagonal matrices stored as vectors, one row per grid
point. A system spec scales the error as V_A E W_A (strict), a module spec
as W^-1 E V^-1 (non-strict).
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.domain.errors import DimensionMismatch, GridMismatch, InvalidParameter
from src.domain.models import FrequencyGrid, FrfMatrix, InterconnectionStructure

# The difference Ĝ - G is an ordinary FRF on the operands' grid.
ErrorFrf = FrfMatrix


class WeightSide(Enum):
    """Which side of the error a weight multiplies."""
    OUTPUT = "output"
    INPUT = "input"


@dataclass(frozen=True, eq=False)
class DiagonalWeight:
    """Positive diagonal weight per frequency; values has shape (n_freq, dim)."""
    grid: FrequencyGrid
    values: np.ndarray
    side: WeightSide

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        if vals.ndim != 2 or vals.shape[0] != len(self.grid):
            raise GridMismatch(
                f"weight has {vals.shape[0] if vals.ndim else 0} rows for a grid of {len(self.grid)} points"
            )
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise InvalidParameter("weights must be finite and strictly positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "side", WeightSide(self.side))

    @classmethod
    def uniform(cls, grid: FrequencyGrid, scale: Any, dim: int, side: WeightSide) -> 'DiagonalWeight':
        """scale (scalar or one value per frequency) times the identity."""
        per_freq = np.broadcast_to(np.asarray(scale, dtype=float), (len(grid),))
        return cls(grid, np.repeat(per_freq[:, None], dim, axis=1), side)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def at(self, index: int) -> np.ndarray:
        return self.values[index]

    def matrix(self, index: int) -> np.ndarray:
        return np.diag(self.values[index])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiagonalWeight):
            return NotImplemented
        return (self.grid == other.grid and self.side == other.side
                and self.values.shape == other.values.shape
                and bool(np.all(self.values == other.values)))


@dataclass(frozen=True)
class SystemSpec:
    """
    Allowed redesigned system FRFs: ||V_A (G_A - Ĝ_A) W_A|| < 1 at every grid point.

    v_a acts on the p_A outputs, w_a on the m_A inputs.
    """
    baseline: FrfMatrix
    v_a: DiagonalWeight
    w_a: DiagonalWeight

    strict = True

    def __post_init__(self):
        _check_weights(self.baseline, left=self.v_a, right=self.w_a)

    @property
    def grid(self) -> FrequencyGrid:
        return self.baseline.grid

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "system",
            "omega_hz": self.grid.hz.tolist(),
            "weights": {"v": self.v_a.values.tolist(), "w": self.w_a.values.tolist()},
        }


@dataclass(frozen=True)
class ModuleSpec:
    """
    Allowed redesigned module FRFs: ||W_j^-1 (Ĝ_j - G_j) V_j^-1|| <= 1.

    w_j acts on the p_j outputs, v_j on the m_j inputs.
    """
    name: str
    baseline: FrfMatrix
    w_j: DiagonalWeight
    v_j: DiagonalWeight

    strict = False

    def __post_init__(self):
        _check_weights(self.baseline, left=self.w_j, right=self.v_j)

    @property
    def grid(self) -> FrequencyGrid:
        return self.baseline.grid

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "module",
            "name": self.name,
            "omega_hz": self.grid.hz.tolist(),
            "baseline": self.baseline.to_dict(),
            "weights": {"v": self.v_j.values.tolist(), "w": self.w_j.values.tolist()},
        }


def _check_weights(baseline: FrfMatrix, left: DiagonalWeight, right: DiagonalWeight) -> None:
    if left.grid != baseline.grid or right.grid != baseline.grid:
        raise GridMismatch("spec weights and baseline live on different grids")
    if left.side is not WeightSide.OUTPUT or right.side is not WeightSide.INPUT:
        raise InvalidParameter("left weight must be output-side and right weight input-side")
    p, m = baseline.shape
    if left.dim != p or right.dim != m:
        raise DimensionMismatch(
            f"weights of size ({left.dim}, {right.dim}) for a {p}x{m} baseline"
        )


@dataclass(frozen=True, eq=False)
class SpecVerdict:
    """Per-frequency margins of a spec check and the resulting pass flags."""
    grid: FrequencyGrid
    margins: np.ndarray
    strict: bool

    @property
    def passed(self) -> np.ndarray:
        return self.margins < 1.0 if self.strict else self.margins <= 1.0

    @property
    def overall(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def max_margin(self) -> float:
        return float(np.max(self.margins))

    @property
    def worst_index(self) -> int:
        return int(np.argmax(self.margins))

    @property
    def worst_omega(self) -> float:
        return float(self.grid.points[self.worst_index])

    @property
    def failing_omegas(self) -> List[float]:
        return self.grid.points[~self.passed].tolist()

    def rows(self) -> Iterator[Dict[str, Any]]:
        """Rows of the verdict table (omega_hz, margin, pass)."""
        for f_hz, margin, ok in zip(self.grid.hz, self.margins, self.passed):
            yield {"omega_hz": float(f_hz), "margin": float(margin), "pass": bool(ok)}


@dataclass(frozen=True)
class DScaling:
    """Block-scalar scalings: one positive scalar per module plus d_A."""
    d_modules: Tuple[float, ...]
    d_a: float = 1.0

    def __post_init__(self):
        d = tuple(float(v) for v in self.d_modules)
        if not all(v > 0 and math.isfinite(v) for v in d) or not (self.d_a > 0 and math.isfinite(self.d_a)):
            raise InvalidParameter("D-scalings must be finite and strictly positive")
        object.__setattr__(self, "d_modules", d)
        object.__setattr__(self, "d_a", float(self.d_a))

    @classmethod
    def identity(cls, n_modules: int) -> 'DScaling':
        return cls(tuple([1.0] * n_modules), 1.0)

    def expand(self, structure: InterconnectionStructure) -> Tuple[np.ndarray, np.ndarray]:
        """
        Diagonals of (D_l, D_r).

        D_l follows the rows of N (blocks of m_j, then p_A); D_r follows its
        columns (blocks of p_j, then m_A). Both use the same scalar per module.
        """
        if len(self.d_modules) != structure.n_modules:
            raise DimensionMismatch(
                f"{len(self.d_modules)} D-scalars for {structure.n_modules} modules"
            )
        d_left = np.concatenate(
            [np.full(m, d) for d, (_, m) in zip(self.d_modules, structure.module_dims)]
            + [np.full(structure.p_a, self.d_a)]
        )
        d_right = np.concatenate(
            [np.full(p, d) for d, (p, _) in zip(self.d_modules, structure.module_dims)]
            + [np.full(structure.m_a, self.d_a)]
        )
        return d_left, d_right

    def normalized(self) -> 'DScaling':
        """Same ray with d_A = 1."""
        return DScaling(tuple(d / self.d_a for d in self.d_modules), 1.0)


@dataclass(frozen=True, eq=False)
class StackedWeights:
    """
    Module and system weights at one frequency.

    V stacks v_j (m_j entries) with v_A (p_A) along N's rows; W stacks w_j
    (p_j entries) with w_A (m_A) along N's columns.
    """
    module_w: Tuple[np.ndarray, ...]
    module_v: Tuple[np.ndarray, ...]
    w_a: np.ndarray
    v_a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "module_w", tuple(np.asarray(w, dtype=float).ravel() for w in self.module_w))
        object.__setattr__(self, "module_v", tuple(np.asarray(v, dtype=float).ravel() for v in self.module_v))
        object.__setattr__(self, "w_a", np.asarray(self.w_a, dtype=float).ravel())
        object.__setattr__(self, "v_a", np.asarray(self.v_a, dtype=float).ravel())
        every = list(self.module_w) + list(self.module_v) + [self.w_a, self.v_a]
        if any(np.any(~np.isfinite(a)) or np.any(a <= 0) for a in every):
            raise InvalidParameter("stacked weights must be finite and strictly positive")

    def validate(self, structure: InterconnectionStructure) -> None:
        """Raise DimensionMismatch unless the blocks follow the partition."""
        if len(self.module_w) != structure.n_modules or len(self.module_v) != structure.n_modules:
            raise DimensionMismatch(f"weights for {len(self.module_w)} modules, expected {structure.n_modules}")
        for j, (p, m) in enumerate(structure.module_dims):
            if self.module_w[j].size != p or self.module_v[j].size != m:
                raise DimensionMismatch(f"module {j} weights do not match its {p}x{m} shape")
        if self.w_a.size != structure.m_a or self.v_a.size != structure.p_a:
            raise DimensionMismatch("system weights do not match the external channels")

    def v_diag(self) -> np.ndarray:
        return np.concatenate(list(self.module_v) + [self.v_a])

    def w_diag(self) -> np.ndarray:
        return np.concatenate(list(self.module_w) + [self.w_a])

    def scaled_modules(self, factor: float, modules: Sequence[int]) -> 'StackedWeights':
        """Copy with the listed modules' weights multiplied by factor."""
        chosen = set(modules)
        return StackedWeights(
            tuple(w * factor if j in chosen else w for j, w in enumerate(self.module_w)),
            tuple(v * factor if j in chosen else v for j, v in enumerate(self.module_v)),
            self.w_a,
            self.v_a,
        )


@dataclass(frozen=True)
class CostWeights:
    """
    Per-module cost weights alpha_j of the trace objective.

    alpha_j = inf freezes module j. A frozen module listed in frozen_specs
    keeps those weights; otherwise it gets no redesign freedom.
    """
    alphas: Tuple[float, ...]
    frozen_specs: Mapping[int, ModuleSpec] = field(default_factory=dict)

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas:
            raise InvalidParameter("cost weights need at least one module")
        if any(math.isnan(a) or a < 0 for a in alphas):
            raise InvalidParameter("cost weights must be non-negative")
        if all(math.isinf(a) for a in alphas):
            raise InvalidParameter("at least one module must be free")
        for j in self.frozen_specs:
            if not (0 <= j < len(alphas)) or not math.isinf(alphas[j]):
                raise InvalidParameter(f"frozen weights given for module {j}, which is not frozen")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "frozen_specs", dict(self.frozen_specs))

    @classmethod
    def uniform(cls, n_modules: int) -> 'CostWeights':
        return cls(tuple([1.0] * n_modules))

    @classmethod
    def parse(cls, text: str, n_modules: int) -> 'CostWeights':
        """Parse the CLI form: "uniform" or a comma list such as "1,inf"."""
        if text.strip().lower() == "uniform":
            return cls.uniform(n_modules)
        try:
            alphas = tuple(float(part) for part in text.split(","))
        except ValueError:
            raise InvalidParameter(f"cannot parse cost weights {text!r}")
        if len(alphas) != n_modules:
            raise InvalidParameter(f"{len(alphas)} cost weights for {n_modules} modules")
        return cls(alphas)

    @property
    def n_modules(self) -> int:
        return len(self.alphas)

    @property
    def free_indices(self) -> List[int]:
        return [j for j, a in enumerate(self.alphas) if not math.isinf(a)]

    @property
    def frozen_indices(self) -> List[int]:
        return [j for j, a in enumerate(self.alphas) if math.isinf(a)]

    @property
    def excluded_indices(self) -> List[int]:
        """Frozen modules without given weights; they drop out of the LMI."""
        return [j for j in self.frozen_indices if j not in self.frozen_specs]

    def is_frozen(self, j: int) -> bool:
        return math.isinf(self.alphas[j])


class TerminationReason(Enum):
    """Why the alternation stopped at one frequency."""
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"
    SOLVER_FAILURE = "solver_failure"
    # a later step failed; the best earlier iterate is returned
    STEP_FAILED = "step_failed"


@dataclass
class FrequencyTrace:
    """Iterates and outcome of the alternation at one grid point."""
    index: int
    omega: float
    betas: List[float] = field(default_factory=list)
    deltas: List[float] = field(default_factory=list)
    module_w: Tuple[np.ndarray, ...] = ()
    module_v: Tuple[np.ndarray, ...] = ()
    d: Optional[DScaling] = None
    reason: TerminationReason = TerminationReason.MAX_ITERS
    lmi_margin: float = float("nan")
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.betas)

    @property
    def ok(self) -> bool:
        return self.reason in (
            TerminationReason.CONVERGED, TerminationReason.MAX_ITERS, TerminationReason.STEP_FAILED
        )

    @property
    def best_beta(self) -> float:
        return min(self.betas) if self.betas else float("nan")


@dataclass
class SynthesisTrace:
    """Per-frequency records, keyed by grid index; accepts results out of order."""
    grid: FrequencyGrid
    frequencies: Dict[int, FrequencyTrace] = field(default_factory=dict)

    def add(self, record: FrequencyTrace) -> None:
        self.frequencies[record.index] = record

    def ordered(self) -> List[FrequencyTrace]:
        return [self.frequencies[i] for i in sorted(self.frequencies)]

    def omegas_with(self, reason: TerminationReason) -> List[float]:
        return [t.omega for t in self.ordered() if t.reason is reason]

    @property
    def infeasible_omegas(self) -> List[float]:
        return self.omegas_with(TerminationReason.INFEASIBLE)

    @property
    def failed_omegas(self) -> List[float]:
        return self.omegas_with(TerminationReason.SOLVER_FAILURE)

    @property
    def not_converged_omegas(self) -> List[float]:
        """Frequencies that returned an iterate without meeting the stopping rule."""
        return [
            t.omega for t in self.ordered()
            if t.reason in (TerminationReason.MAX_ITERS, TerminationReason.STEP_FAILED)
        ]

    @property
    def complete(self) -> bool:
        return len(self.frequencies) == len(self.grid)

    def rows(self) -> Iterator[Dict[str, Any]]:
        """Rows of trace.csv: one per frequency and iteration."""
        for record in self.ordered():
            f_hz = record.omega / (2.0 * np.pi)
            for i, beta in enumerate(record.betas):
                delta = record.deltas[i] if i < len(record.deltas) else float("nan")
                yield {"omega_hz": f_hz, "iter": i + 1, "beta": beta, "delta": delta}
