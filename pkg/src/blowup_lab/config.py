"""Run configuration: a versioned JSON schema and typed accessors."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .damping import DampingSpec
from .errors import ConfigurationError
from .pde import VARIANTS, DataFamily, NonlinearityKind

SCHEMA_VERSION = "1"

_family = {
    "type": "object",
    "properties": {
        "family": {"enum": ["bump", "gaussian", "zero"]},
        "width": {"type": "number", "exclusiveMinimum": 0},
        "amplitude": {"type": "number"},
        "center": {"type": "number"},
    },
    "additionalProperties": False,
}

_positive = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["schema"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "damping": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["power_law", "tabulated"]},
                "b0": _positive,
                "beta": {"type": "number", "minimum": -1, "exclusiveMaximum": 1},
                "t": {"type": "array", "items": {"type": "number"}},
                "b": {"type": "array", "items": {"type": "number"}},
                "b_prime": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "n": {"type": "integer", "minimum": 1, "maximum": 3},
        "p": {"type": "number", "exclusiveMinimum": 1, "maximum": 10},
        "nonlinearity": {"enum": sorted(VARIANTS)},
        "data": {
            "type": "object",
            "properties": {"a0": _family, "a1": _family},
            "additionalProperties": False,
        },
        "eps": _positive,
        "eps_grid": {
            "oneOf": [
                {"type": "array", "items": _positive, "minItems": 1},
                {
                    "type": "object",
                    "required": ["min", "max", "num"],
                    "properties": {"min": _positive, "max": _positive,
                                   "num": {"type": "integer", "minimum": 1}},
                    "additionalProperties": False,
                },
            ]
        },
        "solver": {
            "type": "object",
            "properties": {
                "dx": _positive,
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "cap": {"type": "number", "exclusiveMinimum": 1},
                "horizon": _positive,
                "L": _positive,
                "n_outputs": {"type": "integer", "minimum": 2},
                "growth_max": {"type": "number", "exclusiveMinimum": 1},
            },
            "additionalProperties": False,
        },
        "cutoff": {
            "type": "object",
            "properties": {"ell": {"type": "integer", "minimum": 2}},
            "additionalProperties": False,
        },
        "ode": {
            "type": "object",
            "properties": {
                "gamma": {"type": "number", "minimum": 0},
                "f0": {"type": "number"},
                "f1": {"type": "number"},
                "A0": _positive,
                "eps0": _positive,
                "horizon": _positive,
                "rtol": _positive,
            },
            "additionalProperties": False,
        },
        "energy": {
            "type": "object",
            "properties": {
                "ds": _positive,
                "T": _positive,
                "y_max": _positive,
                "dy": _positive,
                "lambda": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.25},
                "C0": _positive,
                "C1": _positive,
                "K": _positive,
                "truncate": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "properties": {
                "mu_scale": _positive,
                "draws": {"type": "integer", "minimum": 1},
                "upper_bound": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "out": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "schema": SCHEMA_VERSION,
    "damping": {"kind": "power_law", "b0": 1.0, "beta": 0.0},
    "n": 1,
    "p": 2.0,
    "nonlinearity": "abs_p",
    "data": {"a0": {"family": "bump", "width": 1.0, "amplitude": 1.0, "center": 0.0},
             "a1": {"family": "bump", "width": 1.0, "amplitude": 1.0, "center": 0.0}},
    "eps": 0.5,
    "eps_grid": {"min": 0.1, "max": 1.0, "num": 8},
    "solver": {"dx": 1.0 / 32.0, "cfl": 0.5, "cap": 1e8, "horizon": 100.0,
               "n_outputs": 400, "growth_max": 1.1},
    "cutoff": {},
    "ode": {"gamma": 1.0, "A0": 1.0, "eps0": 0.5, "rtol": 1e-10},
    "energy": {"ds": 0.08, "T": 20.0, "y_max": 14.0, "dy": 1.0 / 64.0, "lambda": 0.125,
               "C0": 100.0, "C1": 10.0, "K": 50.0, "truncate": 0.9},
    "verify": {"mu_scale": 1.0, "draws": 20, "upper_bound": True},
    "out": "out",
    "seed": 0,
    "workers": 1,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with defaults filled in.

    ``raw`` is the merged dictionary; typed views are exposed as properties.
    """

    raw: dict

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            jsonschema.validate(d, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
            raise ConfigurationError(f"invalid config at {where}: {exc.message}") from None
        merged = _merge(DEFAULTS, d)
        # a tabulated damping ignores the power-law fields of the defaults
        if merged["damping"].get("kind") == "tabulated":
            merged["damping"] = {k: v for k, v in d["damping"].items()}
        cfg = cls(merged)
        cfg._check_ranges()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def with_overrides(self, **kw) -> "RunConfig":
        return RunConfig.from_dict(_merge(self.raw, kw))

    def _check_ranges(self):
        g = self.raw.get("eps_grid")
        if isinstance(g, dict) and not g["min"] < g["max"]:
            raise ConfigurationError("eps_grid needs min < max")
        e = self.raw["energy"]
        if not e["C0"] > e["C1"] > 1:
            raise ConfigurationError("energy constants need C0 > C1 > 1")
        self.damping  # noqa: B018 - construction validates the damping block

    # ------------------------------------------------------------- views
    @property
    def damping(self) -> DampingSpec:
        d = self.raw["damping"]
        try:
            return DampingSpec.from_dict(d)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"incomplete damping block: {exc}") from None

    @property
    def n(self) -> int:
        return int(self.raw["n"])

    @property
    def p(self) -> float:
        return float(self.raw["p"])

    @property
    def nonlinearity(self) -> NonlinearityKind:
        return NonlinearityKind(self.raw["nonlinearity"], self.p)

    @property
    def a0(self) -> DataFamily:
        return DataFamily.from_dict(self.raw["data"]["a0"])

    @property
    def a1(self) -> DataFamily:
        return DataFamily.from_dict(self.raw["data"]["a1"])

    @property
    def eps(self) -> float:
        return float(self.raw["eps"])

    @property
    def eps_grid(self) -> np.ndarray:
        g = self.raw["eps_grid"]
        if isinstance(g, list):
            return np.array(sorted(float(x) for x in g))
        return np.geomspace(float(g["min"]), float(g["max"]), int(g["num"]))

    @property
    def solver(self) -> dict:
        return self.raw["solver"]

    @property
    def ell(self) -> int | None:
        return self.raw["cutoff"].get("ell")

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def workers(self) -> int:
        return int(self.raw["workers"])

    def section(self, name: str) -> dict:
        return self.raw[name]

    def domain_length(self, horizon: float) -> float:
        """Half-length of the spatial domain: data support + light cone + margin."""
        if "L" in self.solver:
            return float(self.solver["L"])
        supp = max(self.a0.support_radius, self.a1.support_radius)
        return supp + horizon + 4.0 + 8.0 * float(self.solver["dx"])


def fmt(x) -> str:
    """Round-trip decimal formatting used in every numeric CSV."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")
