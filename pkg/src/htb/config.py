"""Analysis configs (schema ``htb-config/1``) and their validation.

Validation errors carry a JSON pointer to the offending field so that CI
logs can point straight at the broken entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .sharing import SharingModel, model_from_dict
from .simulator import DependenceSpec
from .spectral import DiscreteSpectralMeasure, RNorm, TailModel, canonicalize

SCHEMA_VERSION = "htb-config/1"

_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}}}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema", "tail", "r", "sharing", "mc"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "tail": {
            "type": "object",
            "required": ["alpha", "K"],
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "K": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
            },
        },
        "r": {"type": "number", "exclusiveMinimum": 0},
        "sharing": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": ["deterministic", "scenarios", "bipartite"]}},
            "allOf": [
                {
                    "if": {"properties": {"type": {"const": "deterministic"}}},
                    "then": {"required": ["matrix"], "properties": {"matrix": _matrix}},
                },
                {
                    "if": {"properties": {"type": {"const": "scenarios"}}},
                    "then": {
                        "required": ["items"],
                        "properties": {
                            "items": {
                                "type": "array",
                                "minItems": 1,
                                "items": {
                                    "type": "object",
                                    "required": ["matrix", "p"],
                                    "properties": {"matrix": _matrix, "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
                                },
                            }
                        },
                    },
                },
                {
                    "if": {"properties": {"type": {"const": "bipartite"}}},
                    "then": {
                        "required": ["q", "d", "p"],
                        "properties": {
                            "q": {"type": "integer", "minimum": 1},
                            "d": {"type": "integer", "minimum": 1},
                            "p": {
                                "oneOf": [
                                    {"type": "number", "minimum": 0, "maximum": 1},
                                    {"type": "array", "items": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}}},
                                ]
                            },
                            "zero_degree": {"enum": ["drop", "resample"]},
                        },
                    },
                },
            ],
        },
        "dependence": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["independent", "comonotone", "spectral"]},
                "measure": {"type": "object"},
                "measure_path": {"type": "string"},
            },
        },
        "gammas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        "mc": {
            "type": "object",
            "required": ["seed"],
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "expectation_n": {"type": "integer", "minimum": 1},
                "bootstrap": {"type": "integer", "minimum": 2},
            },
        },
        "outputs": {"type": "object"},
    },
}


class ConfigError(ValueError):
    def __init__(self, pointer: str, message: str):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


@dataclass
class AnalysisConfig:
    tail: TailModel
    norm: RNorm
    sharing: SharingModel
    dependence: DependenceSpec
    gammas: list
    n: int
    seed: int
    expectation_n: int
    bootstrap: int
    outputs: dict = field(default_factory=dict)

    @property
    def rho_star(self) -> DiscreteSpectralMeasure:
        return self.dependence.canonical_measure(self.norm)


def parse_config(data: dict, base_dir: Path | None = None) -> AnalysisConfig:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        # prefer the innermost failing field of a conditional block
        best = max(errors, key=lambda e: len(e.absolute_path))
        if len(best.absolute_path) > len(err.absolute_path):
            err = best
        raise ConfigError(_pointer(err.absolute_path), err.message)

    tail = TailModel(data["tail"]["alpha"], data["tail"]["K"])
    norm = RNorm(data["r"])
    try:
        sharing = model_from_dict(data["sharing"])
    except ValueError as exc:
        raise ConfigError("/sharing", str(exc)) from None
    if sharing.d != tail.d:
        raise ConfigError("/sharing", f"sharing model has d={sharing.d} but /tail/K has {tail.d} entries")

    dep = data.get("dependence", {"kind": "independent"})
    measure = None
    if dep["kind"] == "spectral":
        if "measure" in dep:
            raw, where = dep["measure"], "/dependence/measure"
        elif "measure_path" in dep:
            path = Path(dep["measure_path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            try:
                raw = json.loads(path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError("/dependence/measure_path", str(exc)) from None
            where = "/dependence/measure_path"
        else:
            raise ConfigError("/dependence", "spectral dependence needs 'measure' or 'measure_path'")
        try:
            measure = DiscreteSpectralMeasure.from_dict(raw)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(where, f"invalid measure: {exc}") from None
        if measure.norm.r != norm.r:
            raise ConfigError(where + ("/r" if where.endswith("measure") else ""),
                              f"measure sphere uses r={measure.norm.r}, config uses r={norm.r}")
        if measure.dim != tail.d:
            raise ConfigError(where + ("/dim" if where.endswith("measure") else ""),
                              f"measure dim {measure.dim} != {tail.d} risks")
        if not measure.canonical:
            try:
                measure = canonicalize(measure)
            except ValueError as exc:
                raise ConfigError(where, str(exc)) from None
    spec = DependenceSpec(dep["kind"], tail, measure)

    mc = data["mc"]
    gammas = [float(g) for g in data.get("gammas", [])]
    if len(set(gammas)) != len(gammas):
        raise ConfigError("/gammas", "duplicate gamma values")
    return AnalysisConfig(
        tail=tail,
        norm=norm,
        sharing=sharing,
        dependence=spec,
        gammas=sorted(gammas, reverse=True),
        n=int(mc.get("n", 1_000_000)),
        seed=int(mc["seed"]),
        expectation_n=int(mc.get("expectation_n", 100_000)),
        bootstrap=int(mc.get("bootstrap", 200)),
        outputs=dict(data.get("outputs", {})),
    )


def load_config(path) -> AnalysisConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("/", f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("/", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("/", "config must be a JSON object")
    return parse_config(data, base_dir=path.parent)


def example_config() -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "tail": {"alpha": 2.0, "K": [1.0, 1.0]},
        "r": 1.0,
        "sharing": {"type": "deterministic", "matrix": np.eye(2).tolist()},
        "dependence": {"kind": "independent"},
        "gammas": [0.1, 0.01, 0.001],
        "mc": {"n": 1_000_000, "seed": 1},
    }
