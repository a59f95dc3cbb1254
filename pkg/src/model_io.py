"""
Model and spec file persistence.

Model files hold the modules (second-order matrices or raw FRF samples),
the coupling matrices and the frequency grid. Spec files hold a system spec
(weights, relative or absolute gamma) or a synthesized module spec. All
reads and writes go through a file lock; every parse error is reported as
ModelFileError with the file and JSON path.
"""

import json
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from filelock import FileLock

from src.domain.errors import ModelFileError, ModSpecError
from src.domain.models import FrequencyGrid, FrfMatrix, InterconnectionStructure, SecondOrderModel
from src.domain.specs import ModuleSpec, SystemSpec
from src.services.frf_assembly import DEFAULT_RCOND_THRESHOLD, AssembledSystem, eval_second_order_frf
from src.services.spec_service import (
    interpolate_gamma, module_spec_from_weights, system_spec_from_absolute_gamma,
    system_spec_from_relative_gamma, system_spec_from_weights
)
from src.validation import validate_frf, validate_model_file, validate_spec_file
from src.logger import get_logger

logger = get_logger()

Module = Union[SecondOrderModel, FrfMatrix]

# Relative tolerance when matching file frequencies against the model grid
GRID_RTOL = 1e-9

LOCK_TIMEOUT = 10


@dataclass(frozen=True)
class GridSpec:
    """Frequency grid as written in a model file (Hz)."""
    kind: str
    f_min_hz: float = 0.0
    f_max_hz: float = 0.0
    n: int = 0
    f_hz: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("logspace", "linspace", "points"):
            raise ValueError(f"unknown grid type '{self.kind}'")
        object.__setattr__(self, "f_hz", tuple(float(f) for f in self.f_hz))

    @classmethod
    def points(cls, f_hz: Sequence[float]) -> 'GridSpec':
        return cls("points", f_hz=tuple(f_hz))

    @classmethod
    def logspace(cls, f_min_hz: float, f_max_hz: float, n: int) -> 'GridSpec':
        return cls("logspace", f_min_hz, f_max_hz, n)

    def build(self) -> FrequencyGrid:
        if self.kind == "logspace":
            return FrequencyGrid.logspace_hz(self.f_min_hz, self.f_max_hz, self.n)
        if self.kind == "linspace":
            return FrequencyGrid.linspace_hz(self.f_min_hz, self.f_max_hz, self.n)
        return FrequencyGrid.from_hz(self.f_hz)

    def hz(self) -> List[float]:
        """Grid frequencies in Hz as they should appear in the file."""
        if self.kind == "points":
            return list(self.f_hz)
        return self.build().hz.tolist()

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "points":
            return {"type": "points", "f_hz": list(self.f_hz)}
        return {"type": self.kind, "f_min_hz": self.f_min_hz, "f_max_hz": self.f_max_hz, "n": self.n}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GridSpec':
        if data["type"] == "points":
            return cls.points(data["f_hz"])
        return cls(data["type"], float(data["f_min_hz"]), float(data["f_max_hz"]), int(data["n"]))


@dataclass(frozen=True)
class ModelDefinition:
    """Everything a model file describes, in memory."""
    modules: Tuple[Module, ...]
    structure: InterconnectionStructure
    grid_spec: GridSpec
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        modules = tuple(self.modules)
        names = tuple(self.names) or tuple(
            (m.name if isinstance(m, SecondOrderModel) and m.name else f"module_{j + 1}")
            for j, m in enumerate(modules)
        )
        object.__setattr__(self, "modules", modules)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_builder(cls, builder: Any, grid_spec: GridSpec) -> 'ModelDefinition':
        """Snapshot of a model_library builder."""
        models, structure = builder.build()
        return cls(tuple(models), structure, grid_spec)

    @property
    def grid(self) -> FrequencyGrid:
        return self.grid_spec.build()

    def module_frfs(self) -> List[FrfMatrix]:
        grid = self.grid
        return [
            m if isinstance(m, FrfMatrix) else eval_second_order_frf(m, grid)
            for m in self.modules
        ]

    def assemble(self, rcond_threshold: float = DEFAULT_RCOND_THRESHOLD) -> AssembledSystem:
        return AssembledSystem(tuple(self.module_frfs()), self.structure, self.names, rcond_threshold)

    def to_dict(self, as_frf: bool = False) -> Dict[str, Any]:
        """
        Convert to the file form.

        Args:
            as_frf: Write every module as raw FRF samples instead of matrices
        """
        modules = []
        frfs = self.module_frfs() if as_frf else [None] * len(self.modules)
        omega = self.grid_spec.hz()
        for name, module, frf in zip(self.names, self.modules, frfs):
            if as_frf or isinstance(module, FrfMatrix):
                samples = (frf if frf is not None else module).samples
                modules.append({
                    "name": name,
                    "frf": {"omega": omega, "real": samples.real.tolist(), "imag": samples.imag.tolist()},
                })
            else:
                modules.append({**module.to_dict(), "name": name})
        return {
            "modules": modules,
            "coupling": self.structure.to_dict(),
            "grid": self.grid_spec.to_dict(),
        }


def _aligned(frf: FrfMatrix, grid: FrequencyGrid, path: str, json_path: str) -> FrfMatrix:
    """Re-anchor file FRF samples on the model grid."""
    if len(frf.grid) != len(grid) or not np.allclose(frf.grid.points, grid.points, rtol=GRID_RTOL, atol=0.0):
        raise ModelFileError(path, json_path, "FRF frequencies do not match the grid")
    return FrfMatrix(grid, frf.samples, unit=frf.unit)


def _read_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ModelFileError(path, "", "file not found")
    lock = FileLock(path + ".lock", timeout=LOCK_TIMEOUT)
    try:
        with lock:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFileError(path, "", f"invalid JSON (line {e.lineno}): {e.msg}")
    except OSError as e:
        raise ModelFileError(path, "", str(e))


def _write_json(path: str, data: Dict[str, Any]) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    lock = FileLock(path + ".lock", timeout=LOCK_TIMEOUT)
    with lock:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)


class ModelStore:
    """Loads and saves model files."""

    def __init__(self, path: str) -> None:
        self.path = path

    def load(self) -> ModelDefinition:
        """
        Read, validate and build a model definition.

        Raises:
            ModelFileError: If the file is missing, malformed or inconsistent
        """
        data = _read_json(self.path)
        is_valid, error_msg, json_path = validate_model_file(data)
        if not is_valid:
            raise ModelFileError(self.path, json_path, error_msg)

        try:
            grid_spec = GridSpec.from_dict(data["grid"])
            grid = grid_spec.build()
        except (ModSpecError, ValueError) as e:
            raise ModelFileError(self.path, "/grid", str(e))

        modules: List[Module] = []
        names: List[str] = []
        for j, entry in enumerate(data["modules"]):
            json_path = f"/modules/{j}"
            try:
                if "frf" in entry:
                    frf = FrfMatrix.from_dict(entry["frf"], unit="m/N")
                    modules.append(_aligned(frf, grid, self.path, json_path + "/frf"))
                else:
                    modules.append(SecondOrderModel.from_dict(entry))
            except (ModSpecError, ValueError) as e:
                if isinstance(e, ModelFileError):
                    raise
                raise ModelFileError(self.path, json_path, str(e))
            names.append(entry["name"])

        dims = [
            m.shape if isinstance(m, FrfMatrix) else (m.n_outputs, m.n_inputs) for m in modules
        ]
        try:
            structure = InterconnectionStructure.from_dict(data["coupling"], dims)
        except (ModSpecError, ValueError) as e:
            raise ModelFileError(self.path, "/coupling", str(e))

        logger.info(f"Loaded model with {len(modules)} modules and {len(grid)} frequencies from {self.path}")
        return ModelDefinition(tuple(modules), structure, grid_spec, tuple(names))

    def save(self, definition: ModelDefinition, as_frf: bool = False) -> None:
        """Validate and write a model definition."""
        file_data = definition.to_dict(as_frf=as_frf)
        is_valid, error_msg, json_path = validate_model_file(file_data)
        if not is_valid:
            logger.error(f"Validation failed before save: {error_msg} at {json_path}")
            raise ModelFileError(self.path, json_path, f"cannot save invalid model: {error_msg}")
        _write_json(self.path, file_data)
        logger.debug(f"Saved model with {len(definition.modules)} modules to {self.path}")


def load_model(path: str) -> ModelDefinition:
    return ModelStore(path).load()


def save_model(definition: ModelDefinition, path: str, as_frf: bool = False) -> None:
    ModelStore(path).save(definition, as_frf)


def _load_spec_data(path: str, expected_type: str) -> Dict[str, Any]:
    data = _read_json(path)
    is_valid, error_msg, json_path = validate_spec_file(data)
    if not is_valid:
        raise ModelFileError(path, json_path, error_msg)
    if data["type"] != expected_type:
        raise ModelFileError(path, "/type", f"expected a {expected_type} spec, found '{data['type']}'")
    return data


def _weight_rows(rows: List[List[float]]) -> Any:
    """A single row applies to every frequency."""
    return rows[0] if len(rows) == 1 else rows


def _check_omega(path: str, data: Dict[str, Any], grid: FrequencyGrid) -> None:
    if "omega_hz" not in data:
        return
    f_hz = np.asarray(data["omega_hz"], dtype=float)
    if f_hz.size != len(grid) or not np.allclose(f_hz, grid.hz, rtol=GRID_RTOL, atol=0.0):
        raise ModelFileError(path, "/omega_hz", "spec frequencies do not match the model grid")


def load_system_spec(path: str, g_a: FrfMatrix) -> SystemSpec:
    """
    Read a system spec file and build it around the baseline G_A.

    Gamma curves are interpolated onto the grid of G_A; explicit weights
    must be given on that grid (or as a single row).

    Raises:
        ModelFileError: For invalid files or specs that do not fit G_A
    """
    data = _load_spec_data(path, "system")
    try:
        if "weights" in data:
            _check_omega(path, data, g_a.grid)
            weights = data["weights"]
            spec = system_spec_from_weights(g_a, _weight_rows(weights["v"]), _weight_rows(weights["w"]))
        elif "relative_gamma" in data:
            curve = data["relative_gamma"]
            gamma = interpolate_gamma(g_a.grid, curve["omega_hz"], curve["gamma"])
            spec = system_spec_from_relative_gamma(g_a, gamma)
        else:
            curve = data["absolute_gamma"]
            gamma = interpolate_gamma(g_a.grid, curve["omega_hz"], curve["gamma"])
            spec = system_spec_from_absolute_gamma(g_a, gamma)
    except ModelFileError:
        raise
    except (ModSpecError, ValueError) as e:
        raise ModelFileError(path, "", str(e))
    logger.info(f"Loaded system spec from {path}")
    return spec


def load_module_spec(path: str) -> ModuleSpec:
    """Read a module spec file (baseline FRF plus weights)."""
    data = _load_spec_data(path, "module")
    try:
        baseline = FrfMatrix.from_dict(data["baseline"], unit="m/N")
        _check_omega(path, data, baseline.grid)
        weights = data["weights"]
        spec = module_spec_from_weights(
            data.get("name", os.path.splitext(os.path.basename(path))[0]),
            baseline, _weight_rows(weights["w"]), _weight_rows(weights["v"]),
        )
    except ModelFileError:
        raise
    except (ModSpecError, ValueError) as e:
        raise ModelFileError(path, "", str(e))
    return spec


def save_spec(spec: Union[SystemSpec, ModuleSpec], path: str) -> None:
    """Write a system or module spec file."""
    file_data = spec.to_dict()
    is_valid, error_msg, json_path = validate_spec_file(file_data)
    if not is_valid:
        raise ModelFileError(path, json_path, f"cannot save invalid spec: {error_msg}")
    _write_json(path, file_data)
    logger.debug(f"Saved {file_data['type']} spec to {path}")


def load_frf(path: str, grid: Optional[FrequencyGrid] = None) -> FrfMatrix:
    """
    Read a raw FRF file ({"omega", "real", "imag"}, frequencies in Hz).

    Args:
        path: File path
        grid: Grid the samples must lie on; the result is anchored on it
    """
    data = _read_json(path)
    is_valid, error_msg, json_path = validate_frf(data)
    if not is_valid:
        raise ModelFileError(path, json_path, error_msg)
    try:
        frf = FrfMatrix.from_dict(data, unit="m/N")
    except (ModSpecError, ValueError) as e:
        raise ModelFileError(path, "", str(e))
    return _aligned(frf, grid, path, "/omega") if grid is not None else frf


def save_frf(frf: FrfMatrix, path: str) -> None:
    _write_json(path, frf.to_dict())
