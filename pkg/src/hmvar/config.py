"""Run configuration documents for simulation campaigns."""
from __future__ import annotations

import json
from importlib import resources

import jsonschema

from .estimators import METHODS
from .kernels import KINDS, KernelSpec
from .simulation import HET_PATTERNS, SimulationConfig

SEED_ENV = "HMVAR_SEED"

_DGP_FIELDS = {
    "beta0": {"type": "number"},
    "beta1": {"type": "number"},
    "w_alpha": {"type": "number"},
    "w_gamma": {"type": "number"},
    "w_eps": {"type": "number"},
    "het_amplitude": {"type": "number"},
    "het_pattern": {"enum": list(HET_PATTERNS)},
}

_KERNEL = {
    "oneOf": [
        {"const": "auto"},
        {"type": "object", "additionalProperties": False, "required": ["kind", "bandwidth"],
         "properties": {"kind": {"enum": list(KINDS)},
                        "bandwidth": {"type": "integer", "minimum": 0}}},
    ]
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["rows"],
    "properties": {
        "replications": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "methods": {"type": "array", "minItems": 1, "uniqueItems": True,
                    "items": {"enum": list(METHODS)}},
        "kernel": _KERNEL,
        "alpha_level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "chs_drop_adjustment": {"type": "boolean"},
        "defaults": {"type": "object", "additionalProperties": False, "properties": _DGP_FIELDS},
        "rows": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["G", "T", "rho"],
                "properties": {"name": {"type": "string"},
                               "G": {"type": "integer", "minimum": 1},
                               "T": {"type": "integer", "minimum": 3},
                               "rho": {"type": "number", "exclusiveMinimum": -1,
                                       "exclusiveMaximum": 1},
                               **_DGP_FIELDS},
            },
        },
        "outputs": {"type": "object", "additionalProperties": False,
                    "properties": {"json": {"type": "string"}, "csv": {"type": "string"},
                                   "table": {"type": "string"}}},
    },
}


class ConfigError(ValueError):
    pass


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def load(path: str) -> dict:
    """Read a config file; the name ``table2`` selects the bundled campaign."""
    if path == "table2":
        text = resources.files("hmvar").joinpath("data/table2.json").read_text(encoding="utf-8")
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    validate(doc)
    return doc


def simulation_configs(doc: dict, replications: int | None = None,
                       seed: int | None = None) -> list[SimulationConfig]:
    validate(doc)
    base = {
        "replications": replications or doc.get("replications", 1000),
        "master_seed": doc.get("seed", 20240101) if seed is None else seed,
        "methods": tuple(doc.get("methods", METHODS)),
        "alpha_level": doc.get("alpha_level", 0.05),
        "chs_drop_adjustment": doc.get("chs_drop_adjustment", False),
        **doc.get("defaults", {}),
    }
    kernel = doc.get("kernel", "auto")
    base["kernel"] = kernel if kernel == "auto" else KernelSpec(**kernel)
    return [SimulationConfig(**{**base, **row}) for row in doc["rows"]]
