"""
Core domain models for frequency-domain modular redesign.

Immutable value objects: frequency grids, sampled FRFs, second-order module
models and the static interconnection structure.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from src.domain.errors import (
    DimensionMismatch, EmptyGrid, GridMismatch, InvalidParameter, ShapeMismatch
)

# Symmetry tolerance for model matrices, relative to their norm
SYMMETRY_TOL = 1e-10
# Largest accepted condition number of a mass matrix
MASS_COND_LIMIT = 1e12


def _frozen_array(values: Any, dtype: Any = float) -> np.ndarray:
    """Copy into a read-only ndarray."""
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """
    Ordered set of angular frequencies (rad/s) at which FRFs are sampled.

    Files speak Hz; everything in memory is rad/s.
    """
    points: np.ndarray

    def __post_init__(self):
        pts = _frozen_array(np.atleast_1d(self.points), float)
        if pts.ndim != 1:
            raise InvalidParameter("frequency grid must be one-dimensional")
        if pts.size == 0:
            raise EmptyGrid()
        if not np.all(np.isfinite(pts)):
            raise InvalidParameter("frequency grid contains non-finite values")
        if np.any(pts < 0):
            raise InvalidParameter("frequency grid contains negative frequencies")
        if np.any(np.diff(pts) <= 0):
            raise InvalidParameter("frequency grid must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_hz(cls, f_hz: Sequence[float]) -> 'FrequencyGrid':
        return cls(2.0 * np.pi * np.asarray(f_hz, dtype=float))

    @classmethod
    def logspace_hz(cls, f_min_hz: float, f_max_hz: float, n: int) -> 'FrequencyGrid':
        """Logarithmically spaced grid between two frequencies in Hz (inclusive)."""
        if n < 1:
            raise EmptyGrid()
        if f_min_hz <= 0 or f_max_hz < f_min_hz:
            raise InvalidParameter(f"invalid log grid bounds {f_min_hz}..{f_max_hz} Hz")
        return cls.from_hz(np.logspace(np.log10(f_min_hz), np.log10(f_max_hz), n))

    @classmethod
    def linspace_hz(cls, f_min_hz: float, f_max_hz: float, n: int) -> 'FrequencyGrid':
        if n < 1:
            raise EmptyGrid()
        if f_min_hz < 0 or f_max_hz < f_min_hz:
            raise InvalidParameter(f"invalid linear grid bounds {f_min_hz}..{f_max_hz} Hz")
        return cls.from_hz(np.linspace(f_min_hz, f_max_hz, n))

    @property
    def hz(self) -> np.ndarray:
        return self.points / (2.0 * np.pi)

    def index_of(self, omega: float) -> int:
        """Index of a grid point given in rad/s."""
        hits = np.flatnonzero(np.isclose(self.points, omega, rtol=1e-12, atol=0.0))
        if hits.size == 0:
            raise GridMismatch(f"omega={omega:.6g} rad/s is not a grid point")
        return int(hits[0])

    def subset(self, indices: Sequence[int]) -> 'FrequencyGrid':
        return FrequencyGrid(self.points[np.sort(np.asarray(indices, dtype=int))])

    def __len__(self) -> int:
        return int(self.points.size)

    def __iter__(self):
        return iter(self.points.tolist())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.all(self.points == other.points))


@dataclass(frozen=True, eq=False)
class FrfMatrix:
    """
    Sampled complex p x m transfer matrix over a frequency grid.

    samples has shape (len(grid), p, m).
    """
    grid: FrequencyGrid
    samples: np.ndarray
    output_labels: Tuple[str, ...] = ()
    input_labels: Tuple[str, ...] = ()
    unit: str = ""

    def __post_init__(self):
        data = np.array(self.samples, dtype=complex, copy=True)
        if data.ndim == 1:
            data = data.reshape(-1, 1, 1)
        if data.ndim != 3:
            raise ShapeMismatch(f"FRF samples must be 3-D (n, p, m), got shape {data.shape}")
        if data.shape[0] != len(self.grid):
            raise GridMismatch(
                f"{data.shape[0]} FRF samples for a grid of {len(self.grid)} points"
            )
        if not np.all(np.isfinite(data)):
            raise InvalidParameter("FRF samples contain NaN or Inf")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)

        p, m = data.shape[1], data.shape[2]
        outputs = tuple(self.output_labels) or tuple(f"y{i + 1}" for i in range(p))
        inputs = tuple(self.input_labels) or tuple(f"u{i + 1}" for i in range(m))
        if len(outputs) != p or len(inputs) != m:
            raise ShapeMismatch(
                f"labels ({len(outputs)} outputs, {len(inputs)} inputs) do not match shape {p}x{m}"
            )
        object.__setattr__(self, "output_labels", outputs)
        object.__setattr__(self, "input_labels", inputs)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.samples.shape[1], self.samples.shape[2]

    @property
    def n_outputs(self) -> int:
        return self.samples.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.samples.shape[2]

    @property
    def is_siso(self) -> bool:
        return self.shape == (1, 1)

    def at(self, index: int) -> np.ndarray:
        """Sample matrix at the index-th grid point."""
        return self.samples[index]

    def norms(self) -> np.ndarray:
        """Matrix 2-norm (largest singular value) per frequency."""
        return spectral_norms(self.samples)

    def require_compatible(self, other: 'FrfMatrix') -> None:
        """Raise unless other lives on the same grid with the same shape."""
        if self.grid != other.grid:
            raise GridMismatch("FRFs are sampled on different frequency grids")
        if self.shape != other.shape:
            raise ShapeMismatch(f"FRF shapes differ: {self.shape} vs {other.shape}")

    def with_samples(self, samples: np.ndarray) -> 'FrfMatrix':
        """Same grid and labels, new samples."""
        return FrfMatrix(self.grid, samples, self.output_labels, self.input_labels, self.unit)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to the file form; frequencies in Hz."""
        return {
            "omega": self.grid.hz.tolist(),
            "real": self.samples.real.tolist(),
            "imag": self.samples.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], unit: str = "") -> 'FrfMatrix':
        """Create from the file form (frequencies in Hz)."""
        grid = FrequencyGrid.from_hz(data["omega"])
        real = np.asarray(data["real"], dtype=float)
        imag = np.asarray(data["imag"], dtype=float)
        if real.shape != imag.shape:
            raise ShapeMismatch(f"real part {real.shape} and imaginary part {imag.shape} differ")
        return cls(grid, real + 1j * imag, unit=unit)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrfMatrix):
            return NotImplemented
        return (self.grid == other.grid and self.shape == other.shape
                and bool(np.all(self.samples == other.samples)))


def spectral_norms(stack: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix in a (n, p, m) stack."""
    if stack.shape[1:] == (1, 1):
        return np.abs(stack[:, 0, 0])
    if stack.shape[1] == 0 or stack.shape[2] == 0:
        return np.zeros(stack.shape[0])
    return np.linalg.norm(stack, ord=2, axis=(1, 2))


def _is_symmetric(a: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.max(np.abs(a - a.T), initial=0.0) <= SYMMETRY_TOL * scale)


@dataclass(frozen=True, eq=False)
class SecondOrderModel:
    """
    Lumped model M q'' + D q' + K q = B u, y = C q.

    Units: kg, Ns/m, N/m; B and C select or scale channels.
    """
    mass: np.ndarray
    damping: np.ndarray
    stiffness: np.ndarray
    input_map: np.ndarray
    output_map: np.ndarray
    name: str = ""

    def __post_init__(self):
        mass = _frozen_array(np.atleast_2d(self.mass))
        damping = _frozen_array(np.atleast_2d(self.damping))
        stiffness = _frozen_array(np.atleast_2d(self.stiffness))
        input_map = _frozen_array(np.atleast_2d(self.input_map))
        output_map = _frozen_array(np.atleast_2d(self.output_map))

        n = mass.shape[0]
        for label, mat in (("mass", mass), ("damping", damping), ("stiffness", stiffness)):
            if mat.shape != (n, n):
                raise DimensionMismatch(f"{label} matrix has shape {mat.shape}, expected ({n}, {n})")
            if not np.all(np.isfinite(mat)):
                raise InvalidParameter(f"{label} matrix contains non-finite values")
            if not _is_symmetric(mat):
                raise InvalidParameter(f"{label} matrix is not symmetric")
        if input_map.shape[0] != n:
            raise DimensionMismatch(f"input map has {input_map.shape[0]} rows, expected {n}")
        if output_map.shape[1] != n:
            raise DimensionMismatch(f"output map has {output_map.shape[1]} columns, expected {n}")

        try:
            np.linalg.cholesky(mass)
        except np.linalg.LinAlgError:
            raise InvalidParameter(f"mass matrix of '{self.name}' is not positive definite")
        if np.linalg.cond(mass) > MASS_COND_LIMIT:
            raise InvalidParameter(f"mass matrix of '{self.name}' is ill-conditioned")
        for label, mat in (("damping", damping), ("stiffness", stiffness)):
            eig_min = float(np.min(np.linalg.eigvalsh(mat)))
            if eig_min < -SYMMETRY_TOL * max(1.0, float(np.max(np.abs(mat)))):
                raise InvalidParameter(f"{label} matrix of '{self.name}' is not positive semidefinite")

        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "damping", damping)
        object.__setattr__(self, "stiffness", stiffness)
        object.__setattr__(self, "input_map", input_map)
        object.__setattr__(self, "output_map", output_map)

    @classmethod
    def scalar(cls, mass: float, damping: float, stiffness: float, name: str = "") -> 'SecondOrderModel':
        """Single DOF, force in, position out."""
        return cls([[mass]], [[damping]], [[stiffness]], [[1.0]], [[1.0]], name=name)

    @property
    def n_dof(self) -> int:
        return self.mass.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_map.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.output_map.shape[0]

    @property
    def total_mass(self) -> float:
        return float(np.trace(self.mass))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "M": self.mass.tolist(),
            "D": self.damping.tolist(),
            "K": self.stiffness.tolist(),
            "B": self.input_map.tolist(),
            "C": self.output_map.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SecondOrderModel':
        return cls(
            mass=data["M"],
            damping=data["D"],
            stiffness=data["K"],
            input_map=data["B"],
            output_map=data["C"],
            name=data.get("name", ""),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SecondOrderModel):
            return NotImplemented
        pairs = zip(
            (self.mass, self.damping, self.stiffness, self.input_map, self.output_map),
            (other.mass, other.damping, other.stiffness, other.input_map, other.output_map),
        )
        return self.name == other.name and all(
            a.shape == b.shape and bool(np.all(a == b)) for a, b in pairs
        )


@dataclass(frozen=True, eq=False)
class InterconnectionStructure:
    """
    Static coupling K = [[K_BB, K_BA], [K_AB, 0]].

    [u_B; y_A] = K [y_B; u_A]. module_dims holds (p_j, m_j) per module and
    external_dims holds (m_A, p_A).
    """
    k_bb: np.ndarray
    k_ba: np.ndarray
    k_ab: np.ndarray
    module_dims: Tuple[Tuple[int, int], ...]
    external_dims: Tuple[int, int]

    def __post_init__(self):
        dims = tuple((int(p), int(m)) for p, m in self.module_dims)
        if not dims:
            raise DimensionMismatch("an interconnection needs at least one module")
        m_a, p_a = (int(v) for v in self.external_dims)
        sum_p = sum(p for p, _ in dims)
        sum_m = sum(m for _, m in dims)

        k_bb = _frozen_array(np.asarray(self.k_bb, dtype=float).reshape(sum_m, -1) if np.size(self.k_bb) else np.zeros((sum_m, sum_p)))
        k_ba = _frozen_array(np.asarray(self.k_ba, dtype=float).reshape(sum_m, -1) if np.size(self.k_ba) else np.zeros((sum_m, m_a)))
        k_ab = _frozen_array(np.asarray(self.k_ab, dtype=float).reshape(p_a, -1) if np.size(self.k_ab) else np.zeros((p_a, sum_p)))

        if k_bb.shape != (sum_m, sum_p):
            raise DimensionMismatch(f"K_BB has shape {k_bb.shape}, expected ({sum_m}, {sum_p})")
        if k_ba.shape != (sum_m, m_a):
            raise DimensionMismatch(f"K_BA has shape {k_ba.shape}, expected ({sum_m}, {m_a})")
        if k_ab.shape != (p_a, sum_p):
            raise DimensionMismatch(f"K_AB has shape {k_ab.shape}, expected ({p_a}, {sum_p})")
        for label, mat in (("K_BB", k_bb), ("K_BA", k_ba), ("K_AB", k_ab)):
            if not np.all(np.isfinite(mat)):
                raise InvalidParameter(f"{label} contains non-finite values")

        object.__setattr__(self, "module_dims", dims)
        object.__setattr__(self, "external_dims", (m_a, p_a))
        object.__setattr__(self, "k_bb", k_bb)
        object.__setattr__(self, "k_ba", k_ba)
        object.__setattr__(self, "k_ab", k_ab)

    @property
    def n_modules(self) -> int:
        return len(self.module_dims)

    @property
    def total_outputs(self) -> int:
        """Sum of module outputs p_j."""
        return sum(p for p, _ in self.module_dims)

    @property
    def total_inputs(self) -> int:
        """Sum of module inputs m_j."""
        return sum(m for _, m in self.module_dims)

    @property
    def m_a(self) -> int:
        return self.external_dims[0]

    @property
    def p_a(self) -> int:
        return self.external_dims[1]

    @property
    def full(self) -> np.ndarray:
        """The complete K with its zero lower-right block."""
        top = np.hstack([self.k_bb, self.k_ba])
        bottom = np.hstack([self.k_ab, np.zeros((self.p_a, self.m_a))])
        return np.vstack([top, bottom])

    def output_slices(self) -> List[slice]:
        """Slices of the stacked module outputs y_B, one per module."""
        return _slices([p for p, _ in self.module_dims])

    def input_slices(self) -> List[slice]:
        """Slices of the stacked module inputs u_B, one per module."""
        return _slices([m for _, m in self.module_dims])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k_bb": self.k_bb.tolist(),
            "k_ba": self.k_ba.tolist(),
            "k_ab": self.k_ab.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], module_dims: Sequence[Tuple[int, int]]) -> 'InterconnectionStructure':
        """Create from the file form; dimensions come from the modules and the matrices."""
        sum_m = sum(m for _, m in module_dims)
        k_ba = np.asarray(data["k_ba"], dtype=float).reshape(sum_m, -1)
        k_ab = np.atleast_2d(np.asarray(data["k_ab"], dtype=float))
        return cls(
            k_bb=data["k_bb"],
            k_ba=k_ba,
            k_ab=k_ab,
            module_dims=tuple(module_dims),
            external_dims=(k_ba.shape[1], k_ab.shape[0]),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InterconnectionStructure):
            return NotImplemented
        return (self.module_dims == other.module_dims
                and self.external_dims == other.external_dims
                and all(bool(np.all(a == b)) for a, b in (
                    (self.k_bb, other.k_bb), (self.k_ba, other.k_ba), (self.k_ab, other.k_ab))))


def _slices(sizes: Sequence[int]) -> List[slice]:
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return [slice(int(offsets[i]), int(offsets[i + 1])) for i in range(len(sizes))]


@dataclass(frozen=True)
class SynthesisOptions:
    """Solver settings for the alternating module-spec synthesis."""
    eps: float = 1e-4
    max_iters: int = 50
    eps_pd_rel: float = 1e-9
    weight_floor: float = 1e-12
    d_min: float = 1e-6
    d_max: float = 1e6
    solver: str = "CLARABEL"
    tighten_steps: int = 30

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidParameter(f"stopping tolerance must be positive, got {self.eps}")
        if self.max_iters < 1:
            raise InvalidParameter(f"max_iters must be at least 1, got {self.max_iters}")
        if not (0 < self.d_min < self.d_max):
            raise InvalidParameter("D-scaling bounds must satisfy 0 < d_min < d_max")
        if not self.weight_floor > 0:
            raise InvalidParameter("weight floor must be positive")

    @property
    def weight_cap(self) -> float:
        """Largest weight representable with the inverse-square floor."""
        return float(self.weight_floor ** -0.5)

    @property
    def zero_freedom_weight(self) -> float:
        """Weight reported for modules given no redesign freedom."""
        return float(self.weight_floor ** 0.5)
