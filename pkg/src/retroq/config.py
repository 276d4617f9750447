"""Scenario configuration: JSON documents validated against a published schema."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Any

import jsonschema

from .errors import ParseError, ValidationError

SCENARIOS = ("factorize", "weakfield", "average", "bell", "chsh", "trajectories", "continuity")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT_POS = {"type": "integer", "minimum": 1}
_ANGLE_LIST = {"type": "array", "items": _NUM, "minItems": 1}

_GRID = {
    "type": "object",
    "properties": {"x_min": _NUM, "x_max": _NUM, "n": {"type": "integer", "minimum": 8}},
    "required": ["x_min", "x_max", "n"],
    "additionalProperties": False,
}
_PACKET = {
    "type": "object",
    "properties": {"x0": _NUM, "p0": _NUM, "sigma": _POS},
    "required": ["x0", "p0", "sigma"],
    "additionalProperties": False,
}
_KIND = {"enum": ["density", "energy_density", "momentum_density", "current"]}

_COMMON = {
    "scenario": {"enum": list(SCENARIOS)},
    "seed": {"type": "integer", "minimum": 0},
    "out": {"type": "string"},
}

_SCENARIO_PROPS: dict[str, dict[str, Any]] = {
    "factorize": {
        "state": {"enum": ["random", "singlet", "ghz"]},
        "parties": {"type": "integer", "minimum": 2, "maximum": 4},
        "dim": {"type": "integer", "minimum": 2, "maximum": 4},
        "observables": {
            "oneOf": [
                {"const": "random"},
                {"type": "array", "items": {"enum": ["x", "y", "z"]}, "minItems": 2},
            ]
        },
        "tol": _POS,
    },
    "weakfield": {
        "grid": _GRID, "dt": _POS, "mass": _POS, "initial": _PACKET, "final": _PACKET,
        "t_i": _NUM, "t_f": _NUM, "t": _NUM, "kind": _KIND,
        "expect_negative": {"type": "boolean"},
    },
    "average": {
        "grid": _GRID, "dt": _POS, "mass": _POS, "initial": _PACKET,
        "t_i": _NUM, "t_f": _NUM, "t": _NUM, "kind": _KIND,
        "basis": {"enum": ["box", "containing"]}, "tol": _POS,
    },
    "bell": {
        "a": {"oneOf": [_NUM, _ANGLE_LIST]},
        "b": {"oneOf": [_NUM, _ANGLE_LIST]},
        "samples": _INT_POS,
        "planted_violation": {"type": "boolean"},
        "sigma": _POS,
    },
    "chsh": {
        "settings": {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4},
        "samples": _INT_POS,
        "planted_violation": {"type": "boolean"},
        "sigma": _POS,
    },
    "trajectories": {
        "grid": _GRID, "dt": _POS, "mass": _POS, "initial": _PACKET,
        "t_i": _NUM, "t_f": _NUM, "t_probe": _NUM,
        "basis": {"enum": ["box", "containing"]},
        "n_traj": _INT_POS, "bins": {"type": "integer", "minimum": 2},
        "sampler": {"enum": ["weak_density", "born"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "n_write": {"type": "integer", "minimum": 0},
    },
    "continuity": {
        "grid": _GRID, "dt": _POS, "mass": _POS, "initial": _PACKET, "final": _PACKET,
        "t_i": _NUM, "t_f": _NUM, "t": _NUM, "dt_probe": _POS,
        "min_ratio": _POS, "integral_tol": _POS,
    },
}

_REQUIRED = {
    "factorize": [],
    "weakfield": ["grid", "dt"],
    "average": ["grid", "dt"],
    "bell": ["a", "b", "samples"],
    "chsh": ["samples"],
    "trajectories": ["grid", "dt", "n_traj"],
    "continuity": ["grid", "dt"],
}

_DEMO_INITIAL = {"x0": -1.0, "p0": 1.0, "sigma": 1.0}
_DEMO_FINAL = {"x0": 1.0, "p0": -0.5, "sigma": 1.2}

DEFAULTS: dict[str, dict[str, Any]] = {
    "factorize": {"state": "random", "parties": 3, "dim": 2, "observables": "random", "tol": 1e-10},
    "weakfield": {"mass": 1.0, "initial": _DEMO_INITIAL, "final": _DEMO_FINAL,
                  "t_i": 0.0, "t_f": 1.0, "t": 0.5, "kind": "density", "expect_negative": False},
    "average": {"mass": 1.0, "initial": {"x0": 0.0, "p0": 1.0, "sigma": 1.0},
                "t_i": 0.0, "t_f": 1.0, "t": 0.5, "kind": "density", "basis": "box", "tol": 1e-8},
    "bell": {"planted_violation": False, "sigma": 3.0},
    "chsh": {"settings": [0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4],
             "planted_violation": False, "sigma": 3.0},
    "trajectories": {"mass": 1.0, "initial": {"x0": 0.0, "p0": 1.0, "sigma": 1.0},
                     "t_i": 0.0, "t_f": 4.0, "t_probe": 2.0, "basis": "containing",
                     "bins": 40, "sampler": "weak_density", "alpha": 0.01, "n_write": 20},
    "continuity": {"mass": 1.0, "initial": _DEMO_INITIAL, "final": _DEMO_FINAL,
                   "t_i": 0.0, "t_f": 1.0, "t": 0.5, "dt_probe": 0.02,
                   "min_ratio": 3.0, "integral_tol": 1e-8},
}


def _scenario_schema(name: str) -> dict:
    return {
        "type": "object",
        "properties": {**_COMMON, **_SCENARIO_PROPS[name]},
        "required": ["scenario", *_REQUIRED[name]],
        "additionalProperties": False,
    }


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "retroq scenario config",
    "type": "object",
    "required": ["scenario"],
    "properties": {"scenario": _COMMON["scenario"]},
    "allOf": [
        {"if": {"properties": {"scenario": {"const": s}}, "required": ["scenario"]},
         "then": _scenario_schema(s)}
        for s in SCENARIOS
    ],
}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)
    out: str | None = None

    def with_seed(self, seed: int) -> ScenarioConfig:
        return ScenarioConfig(self.scenario, seed, self.params, self.out)


def _path(parts) -> str:
    return "/".join(str(p) for p in parts) or "<root>"


def _collect(doc: Any) -> list[tuple[str, str]]:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    found = []
    for err in validator.iter_errors(doc):
        # if/then failures carry their real causes in the context
        leaves = [err] if err.validator not in ("if", "then", "allOf") else (err.context or [err])
        for e in leaves:
            base = list(e.absolute_path)
            if e.validator == "required" and isinstance(e.instance, dict):
                for key in e.validator_value:
                    if key not in e.instance:
                        found.append((_path(base + [key]), f"missing required key '{key}'"))
            elif e.validator == "additionalProperties" and isinstance(e.instance, dict):
                allowed = e.schema.get("properties", {})
                for key in e.instance:
                    if key not in allowed:
                        found.append((_path(base + [key]), f"unknown key '{key}'"))
            else:
                found.append((_path(base), e.message))
    return sorted(set(found))


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a JSON scenario document.

    Raises ``ParseError`` for malformed JSON and ``ValidationError`` listing
    every schema violation with its key path.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ValidationError([("<root>", "config must be a JSON object")])
    errors = _collect(doc)
    if errors:
        raise ValidationError(errors)
    name = doc["scenario"]
    params = copy.deepcopy(DEFAULTS[name])
    params.update({k: v for k, v in doc.items() if k not in _COMMON})
    return ScenarioConfig(name, int(doc.get("seed", 0)), params, doc.get("out"))


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
