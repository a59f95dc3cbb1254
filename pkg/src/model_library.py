"""
Built-in parameterized models and perturbation operators.

Builders produce module models plus their interconnection from a handful
of physical parameters. They are frozen, so every design change goes
through with_params / with_perturbation and yields a new builder.
"""

import dataclasses
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple, Type

import numpy as np

from src.domain.errors import InvalidParameter
from src.domain.models import FrequencyGrid, InterconnectionStructure, SecondOrderModel
from src.services.frf_assembly import DEFAULT_RCOND_THRESHOLD, AssembledSystem, stiff_coupling
from src.logger import get_logger

logger = get_logger()


class PerturbationKind(Enum):
    """Kinds of physical module changes."""
    ADDED_MASS = "added_mass"
    STIFFNESS_SCALE = "stiffness_scale"
    DAMPING_SCALE = "damping_scale"


@dataclass(frozen=True)
class Perturbation:
    """
    A physical change to one module.

    magnitude is kg for added mass (negative removes mass) and a factor for
    the scale kinds.
    """
    kind: PerturbationKind
    module: int
    magnitude: float
    dof: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", PerturbationKind(self.kind))
        if not np.isfinite(self.magnitude):
            raise InvalidParameter("perturbation magnitude must be finite")
        if self.kind is not PerturbationKind.ADDED_MASS and self.magnitude < 0:
            raise InvalidParameter(f"{self.kind.value} factor must be non-negative, got {self.magnitude}")
        if self.module < 0:
            raise InvalidParameter(f"module index must be non-negative, got {self.module}")


def apply_perturbation(model: SecondOrderModel, p: Perturbation) -> SecondOrderModel:
    """
    Apply a perturbation to a module model.

    Added mass goes on the mass-matrix diagonal at p.dof; scale kinds multiply
    the whole stiffness or damping matrix.

    Raises:
        InvalidParameter: If the DOF does not exist or the result is not a valid model
    """
    mass = np.array(model.mass)
    damping = np.array(model.damping)
    stiffness = np.array(model.stiffness)
    if p.kind is PerturbationKind.ADDED_MASS:
        if not 0 <= p.dof < model.n_dof:
            raise InvalidParameter(f"DOF {p.dof} does not exist in '{model.name}' ({model.n_dof} DOFs)")
        mass[p.dof, p.dof] += p.magnitude
    elif p.kind is PerturbationKind.STIFFNESS_SCALE:
        stiffness = stiffness * p.magnitude
    else:
        damping = damping * p.magnitude
    return SecondOrderModel(mass, damping, stiffness, model.input_map, model.output_map, name=model.name)


def _chain_matrix(n_dof: int, value: float, ground: Tuple[int, ...] = ()) -> np.ndarray:
    """Springs (or dampers) of one value between consecutive DOFs, plus grounded ones."""
    mat = np.zeros((n_dof, n_dof))
    for i in range(n_dof - 1):
        mat[i, i] += value
        mat[i + 1, i + 1] += value
        mat[i, i + 1] -= value
        mat[i + 1, i] -= value
    for g in ground:
        mat[g, g] += value
    return mat


@dataclass(frozen=True)
class ModelBuilder(ABC):
    """Base class for parameterized modular models."""
    perturbations: Tuple[Perturbation, ...] = ()

    @abstractmethod
    def _build_nominal(self) -> Tuple[List[SecondOrderModel], InterconnectionStructure]:
        """Modules and interconnection before perturbations."""

    @abstractmethod
    def design_parameters(self) -> Dict[str, int]:
        """Scalar design parameters and the module each one belongs to."""

    def build(self) -> Tuple[List[SecondOrderModel], InterconnectionStructure]:
        """Build modules (perturbations applied in order) and the interconnection."""
        models, structure = self._build_nominal()
        for p in self.perturbations:
            if p.module >= len(models):
                raise InvalidParameter(f"perturbation targets module {p.module}, model has {len(models)}")
            models[p.module] = apply_perturbation(models[p.module], p)
        return models, structure

    def assemble(self, grid: FrequencyGrid,
                 rcond_threshold: float = DEFAULT_RCOND_THRESHOLD) -> AssembledSystem:
        models, structure = self.build()
        return AssembledSystem.from_models(models, structure, grid, rcond_threshold)

    def get_param(self, name: str) -> float:
        if name not in {f.name for f in dataclasses.fields(self)} or name == "perturbations":
            raise InvalidParameter(f"{type(self).__name__} has no parameter '{name}'")
        return getattr(self, name)

    def with_params(self, **changes: float) -> 'ModelBuilder':
        """Copy with some parameters replaced."""
        names = {f.name for f in dataclasses.fields(self)} - {"perturbations"}
        unknown = set(changes) - names
        if unknown:
            raise InvalidParameter(f"{type(self).__name__} has no parameter(s) {sorted(unknown)}")
        return dataclasses.replace(self, **changes)

    def with_perturbation(self, p: Perturbation) -> 'ModelBuilder':
        return dataclasses.replace(self, perturbations=self.perturbations + (p,))

    def total_mass(self) -> float:
        models, _ = self.build()
        return float(sum(model.total_mass for model in models))

    def params(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "perturbations"}


@dataclass(frozen=True)
class TwoDofBuilder(ModelBuilder):
    """
    Two grounded mass-spring-damper modules joined by a spring k.

    The external force enters module 1 and the external output reads
    module 1's position.
    """
    m_1: float = 1.0
    m_2: float = 2.0
    d_1: float = 0.3
    d_2: float = 0.3
    k_1: float = 100.0
    k_2: float = 100.0
    k: float = 90.0

    def __post_init__(self):
        for name in ("m_1", "m_2", "d_1", "d_2", "k_1", "k_2"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive, got {getattr(self, name)}")
        if self.k < 0:
            raise InvalidParameter(f"coupling stiffness k must be non-negative, got {self.k}")

    def design_parameters(self) -> Dict[str, int]:
        return {"m_1": 0, "m_2": 1}

    def _build_nominal(self) -> Tuple[List[SecondOrderModel], InterconnectionStructure]:
        models = [
            SecondOrderModel.scalar(self.m_1, self.d_1, self.k_1, name="module_1"),
            SecondOrderModel.scalar(self.m_2, self.d_2, self.k_2, name="module_2"),
        ]
        structure = InterconnectionStructure(
            k_bb=stiff_coupling(self.k, [(0, 1)], 2),
            k_ba=np.array([[1.0], [0.0]]),
            k_ab=np.array([[1.0, 0.0]]),
            module_dims=((1, 1), (1, 1)),
            external_dims=(1, 1),
        )
        return models, structure


def build_two_dof(**params: float) -> Tuple[List[SecondOrderModel], InterconnectionStructure]:
    """Modules and interconnection of the two-DOF system; unknown names raise InvalidParameter."""
    return TwoDofBuilder().with_params(**params).build()


@dataclass(frozen=True)
class ChainBuilder(ModelBuilder):
    """
    A chain of identical lumped modules joined by stiff springs.

    Each module is a grounded chain of dof_per_module masses; its first and
    last DOFs are its interface channels. Module j's last DOF couples to
    module j+1's first DOF. The external force enters the first module's
    first DOF; the external output reads the last module's last DOF.
    module_masses overrides the per-DOF mass of individual modules.
    """
    n_modules: int = 3
    dof_per_module: int = 2
    mass: float = 1.0
    damping: float = 0.3
    stiffness: float = 100.0
    coupling: float = 1e4
    module_masses: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.n_modules < 1 or self.dof_per_module < 1:
            raise InvalidParameter("a chain needs at least one module with at least one DOF")
        if not (self.mass > 0 and self.damping > 0 and self.stiffness > 0) or self.coupling < 0:
            raise InvalidParameter("chain mass, damping and stiffness must be positive")
        if self.module_masses and len(self.module_masses) != self.n_modules:
            raise InvalidParameter(f"{len(self.module_masses)} module masses for {self.n_modules} modules")
        if any(not m > 0 for m in self.module_masses):
            raise InvalidParameter("module masses must be positive")

    def _masses(self) -> Tuple[float, ...]:
        return tuple(self.module_masses) or tuple([self.mass] * self.n_modules)

    def design_parameters(self) -> Dict[str, int]:
        return {f"m_{j + 1}": j for j in range(self.n_modules)}

    def get_param(self, name: str) -> float:
        if name in self.design_parameters():
            return self._masses()[self.design_parameters()[name]]
        return super().get_param(name)

    def with_params(self, **changes: float) -> 'ChainBuilder':
        design = self.design_parameters()
        masses = list(self._masses())
        plain = {}
        for name, value in changes.items():
            if name in design:
                masses[design[name]] = float(value)
            else:
                plain[name] = value
        updated = super().with_params(**plain) if plain else self
        if any(name in design for name in changes):
            updated = dataclasses.replace(updated, module_masses=tuple(masses))
        return updated

    def _channels(self) -> int:
        return 1 if self.dof_per_module == 1 else 2

    def _build_nominal(self) -> Tuple[List[SecondOrderModel], InterconnectionStructure]:
        n, c = self.dof_per_module, self._channels()
        select = np.zeros((c, n))
        select[0, 0] = 1.0
        select[-1, n - 1] = 1.0
        models = [
            SecondOrderModel(
                mass=np.eye(n) * m,
                damping=_chain_matrix(n, self.damping, ground=(0,)),
                stiffness=_chain_matrix(n, self.stiffness, ground=(0,)),
                input_map=select.T,
                output_map=select,
                name=f"module_{j + 1}",
            )
            for j, m in enumerate(self._masses())
        ]
        total = c * self.n_modules
        pairs = [(j * c + c - 1, (j + 1) * c) for j in range(self.n_modules - 1)]
        k_ba = np.zeros((total, 1))
        k_ba[0, 0] = 1.0
        k_ab = np.zeros((1, total))
        k_ab[0, total - 1] = 1.0
        structure = InterconnectionStructure(
            k_bb=stiff_coupling(self.coupling, pairs, total),
            k_ba=k_ba,
            k_ab=k_ab,
            module_dims=tuple((c, c) for _ in range(self.n_modules)),
            external_dims=(1, 1),
        )
        return models, structure


# Top/bottom plate DOF each pillar stands on
PILLAR_POSITIONS = (0, 2, 0, 2)


@dataclass(frozen=True)
class PlatePillarBuilder(ModelBuilder):
    """
    Two 3-DOF plates on four 1-DOF pillars.

    Module order: bottom plate, top plate, pillars 1-4. The bottom plate is
    grounded at both ends. Each pillar has its own grounded stiffness and is
    stiff-coupled to one top-plate DOF and one bottom-plate DOF. The
    external force enters the top plate at position r (0 = left edge,
    1 = right edge); the external output reads the top plate at 1 - r.
    pillar_scales multiplies each pillar's stiffness.
    """
    plate_mass: float = 1.0
    plate_stiffness: float = 1000.0
    pillar_mass: float = 0.5
    pillar_stiffness: float = 500.0
    damping: float = 0.5
    coupling: float = 1e5
    r: float = 0.25
    pillar_scales: Tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        for name in ("plate_mass", "plate_stiffness", "pillar_mass", "pillar_stiffness", "damping", "coupling"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.r <= 1.0:
            raise InvalidParameter(f"position ratio r must lie in [0, 1], got {self.r}")
        if len(self.pillar_scales) != 4 or any(not s > 0 for s in self.pillar_scales):
            raise InvalidParameter("pillar_scales needs four positive factors")

    def design_parameters(self) -> Dict[str, int]:
        return {f"s_{i + 1}": i + 2 for i in range(4)}

    def get_param(self, name: str) -> float:
        if name in self.design_parameters():
            return self.pillar_scales[self.design_parameters()[name] - 2]
        return super().get_param(name)

    def with_params(self, **changes: float) -> 'PlatePillarBuilder':
        design = self.design_parameters()
        scales = list(self.pillar_scales)
        plain = {}
        for name, value in changes.items():
            if name in design:
                scales[design[name] - 2] = float(value)
            else:
                plain[name] = value
        updated = super().with_params(**plain) if plain else self
        if any(name in design for name in changes):
            updated = dataclasses.replace(updated, pillar_scales=tuple(scales))
        return updated

    @staticmethod
    def _position_weights(ratio: float) -> np.ndarray:
        """Split a unit force (or reading) between the two nearest plate DOFs."""
        s = 2.0 * ratio
        left = min(int(np.floor(s)), 1)
        frac = s - left
        weights = np.zeros(3)
        weights[left] = 1.0 - frac
        weights[left + 1] += frac
        return weights

    def _build_nominal(self) -> Tuple[List[SecondOrderModel], InterconnectionStructure]:
        eye3 = np.eye(3)
        plates = [
            SecondOrderModel(
                eye3 * self.plate_mass,
                _chain_matrix(3, self.damping, ground=(0, 2)),
                _chain_matrix(3, self.plate_stiffness, ground=(0, 2)),
                eye3, eye3, name="bottom_plate",
            ),
            SecondOrderModel(
                eye3 * self.plate_mass,
                _chain_matrix(3, self.damping),
                _chain_matrix(3, self.plate_stiffness),
                eye3, eye3, name="top_plate",
            ),
        ]
        pillars = [
            SecondOrderModel.scalar(
                self.pillar_mass, self.damping, self.pillar_stiffness * scale, name=f"pillar_{i + 1}"
            )
            for i, scale in enumerate(self.pillar_scales)
        ]
        total = 10
        pairs = []
        for i, pos in enumerate(PILLAR_POSITIONS):
            pillar = 6 + i
            pairs.append((pillar, 3 + pos))
            pairs.append((pillar, pos))
        k_ba = np.zeros((total, 1))
        k_ba[3:6, 0] = self._position_weights(self.r)
        k_ab = np.zeros((1, total))
        k_ab[0, 3:6] = self._position_weights(1.0 - self.r)
        structure = InterconnectionStructure(
            k_bb=stiff_coupling(self.coupling, pairs, total),
            k_ba=k_ba,
            k_ab=k_ab,
            module_dims=((3, 3), (3, 3), (1, 1), (1, 1), (1, 1), (1, 1)),
            external_dims=(1, 1),
        )
        return plates + pillars, structure


BUILDERS: Dict[str, Type[ModelBuilder]] = {
    "two_dof": TwoDofBuilder,
    "chain": ChainBuilder,
    "plate_pillar": PlatePillarBuilder,
}


def parse_params(text: Optional[str]) -> Dict[str, str]:
    """Parse "k=90,m_1=1" into a name -> raw value mapping."""
    params: Dict[str, str] = {}
    if not text:
        return params
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise InvalidParameter(f"expected name=value, got {item!r}")
        name, value = item.split("=", 1)
        params[name.strip()] = value.strip()
    return params


def make_builder(name: str, params: Optional[str] = None) -> ModelBuilder:
    """
    Create a registered builder from its CLI name and a parameter string.

    Raises:
        InvalidParameter: For an unknown builder, parameter or malformed value
    """
    if name not in BUILDERS:
        raise InvalidParameter(f"unknown builder '{name}' (choose from {', '.join(sorted(BUILDERS))})")
    builder = BUILDERS[name]()
    changes: Dict[str, float] = {}
    field_types = {f.name: f.type for f in dataclasses.fields(builder)}
    for key, raw in parse_params(params).items():
        try:
            if field_types.get(key) in (int, "int"):
                changes[key] = int(raw)
            else:
                changes[key] = float(raw)
        except ValueError:
            raise InvalidParameter(f"parameter {key} has non-numeric value {raw!r}")
    builder = builder.with_params(**changes) if changes else builder
    logger.debug(f"Builder {name}: {builder.params()}")
    return builder
