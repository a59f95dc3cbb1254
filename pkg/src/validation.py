"""
JSON schema validation for model and spec files.

Catches malformed input before any numerical work and reports the JSON
path of the offending element.
"""

from typing import Any, Dict, Tuple

from jsonschema import validate, ValidationError

from src.logger import get_logger

logger = get_logger()


_NUMBER_MATRIX = {
    "type": "array",
    "items": {"type": "array", "items": {"type": "number"}}
}

_NUMBER_LIST = {
    "type": "array",
    "minItems": 1,
    "items": {"type": "number"}
}

# Per-frequency weight rows: one list of positive numbers per grid point
_WEIGHT_ROWS = {
    "type": "array",
    "minItems": 1,
    "items": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}}
}

FRF_SCHEMA = {
    "type": "object",
    "required": ["omega", "real", "imag"],
    "properties": {
        "omega": {**_NUMBER_LIST, "description": "Frequencies in Hz"},
        "real": {"type": "array", "minItems": 1, "items": _NUMBER_MATRIX},
        "imag": {"type": "array", "minItems": 1, "items": _NUMBER_MATRIX}
    }
}

GRID_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "oneOf": [
        {
            "properties": {
                "type": {"enum": ["logspace", "linspace"]},
                "f_min_hz": {"type": "number", "minimum": 0},
                "f_max_hz": {"type": "number", "minimum": 0},
                "n": {"type": "integer", "minimum": 0}
            },
            "required": ["type", "f_min_hz", "f_max_hz", "n"]
        },
        {
            "properties": {
                "type": {"const": "points"},
                "f_hz": {"type": "array", "items": {"type": "number", "minimum": 0}}
            },
            "required": ["type", "f_hz"]
        }
    ]
}

# JSON Schema for a model file
MODEL_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["modules", "coupling", "grid"],
    "properties": {
        "modules": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name"],
                "properties": {"name": {"type": "string"}},
                "oneOf": [
                    {
                        "required": ["M", "D", "K", "B", "C"],
                        "properties": {
                            "M": _NUMBER_MATRIX,
                            "D": _NUMBER_MATRIX,
                            "K": _NUMBER_MATRIX,
                            "B": _NUMBER_MATRIX,
                            "C": _NUMBER_MATRIX
                        }
                    },
                    {
                        "required": ["frf"],
                        "properties": {"frf": FRF_SCHEMA}
                    }
                ]
            }
        },
        "coupling": {
            "type": "object",
            "required": ["k_bb", "k_ba", "k_ab"],
            "properties": {
                "k_bb": _NUMBER_MATRIX,
                "k_ba": _NUMBER_MATRIX,
                "k_ab": _NUMBER_MATRIX
            }
        },
        "grid": GRID_SCHEMA
    }
}

_GAMMA_CURVE = {
    "type": "object",
    "required": ["omega_hz", "gamma"],
    "properties": {
        "omega_hz": _NUMBER_LIST,
        "gamma": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}}
    }
}

# JSON Schema for a system or module spec file
SPEC_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["system", "module"]},
        "name": {"type": "string"},
        "omega_hz": {"type": "array", "items": {"type": "number"}},
        "baseline": FRF_SCHEMA,
        "weights": {
            "type": "object",
            "required": ["v", "w"],
            "properties": {"v": _WEIGHT_ROWS, "w": _WEIGHT_ROWS}
        },
        "relative_gamma": _GAMMA_CURVE,
        "absolute_gamma": _GAMMA_CURVE
    },
    "oneOf": [
        {"required": ["weights"]},
        {"required": ["relative_gamma"]},
        {"required": ["absolute_gamma"]}
    ],
    "if": {"properties": {"type": {"const": "module"}}},
    "then": {"required": ["weights", "baseline", "omega_hz"]}
}


def _json_path(error: ValidationError) -> str:
    return "/" + "/".join(str(p) for p in error.absolute_path)


def _validate_against(data: Any, schema: Dict[str, Any], label: str) -> Tuple[bool, str, str]:
    try:
        validate(instance=data, schema=schema)
        return True, "", ""
    except ValidationError as e:
        error_msg = f"Validation error: {e.message}"
        path = _json_path(e)
        logger.warning(f"{label} validation failed at {path}: {e.message}")
        return False, error_msg, path
    except Exception as e:
        error_msg = f"Unexpected validation error: {e}"
        logger.error(error_msg)
        return False, error_msg, ""


def validate_model_file(file_data: Dict[str, Any]) -> Tuple[bool, str, str]:
    """
    Validate a model file against the schema.

    Args:
        file_data: Entire file contents as dictionary

    Returns:
        Tuple of (is_valid, error_message, json_path)
    """
    return _validate_against(file_data, MODEL_SCHEMA, "Model file")


def validate_spec_file(file_data: Dict[str, Any]) -> Tuple[bool, str, str]:
    """
    Validate a system or module spec file against the schema.

    Args:
        file_data: Entire file contents as dictionary

    Returns:
        Tuple of (is_valid, error_message, json_path)
    """
    return _validate_against(file_data, SPEC_SCHEMA, "Spec file")


def validate_frf(frf_data: Dict[str, Any]) -> Tuple[bool, str, str]:
    """Validate a raw FRF block ({"omega", "real", "imag"})."""
    return _validate_against(frf_data, FRF_SCHEMA, "FRF")
