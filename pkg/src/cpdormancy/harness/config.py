"""Experiment configuration: a single JSON document, validated per experiment kind."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any

from ..engine import Rates
from ..errors import ConfigInvalid, InvalidLaw, InvalidRates
from ..renewal import law_from_config

KINDS = ("growth", "survival", "dl", "percolation", "recursion", "gap", "coupling")

_NUM = (int, float)

# kind -> {field: (expected types, default or REQUIRED)}
REQUIRED = object()
_SIM = {
    "topology": (dict, REQUIRED),
    "rates": (dict, REQUIRED),
    "wake_law": (dict, REQUIRED),
}
SCHEMAS: dict[str, dict[str, tuple]] = {
    "growth": {
        **_SIM,
        "horizon": (_NUM, REQUIRED),
        "checkpoints": (list, REQUIRED),
        "max_radius": (int, 1600),
        "initial_infected": (str, "origin"),
        "initial_active": (str, "all"),
    },
    "survival": {
        **_SIM,
        "times": (list, REQUIRED),
        "initial_infected": (str, "all"),
        "initial_active": (str, "all"),
    },
    "coupling": {
        **_SIM,
        "horizon": (_NUM, REQUIRED),
        "p_c": (_NUM, REQUIRED),
        "initial_infected": (str, "origin"),
        "initial_active": (str, "all"),
    },
    "dl": {
        "alpha": (_NUM, REQUIRED),
        "t": (_NUM, REQUIRED),
        "xm": (_NUM, 1.0),
    },
    "gap": {
        "alpha": (_NUM, REQUIRED),
        "times": (list, REQUIRED),
        "eps": (_NUM, REQUIRED),
        "xm": (_NUM, 1.0),
    },
    "percolation": {
        "d": (int, REQUIRED),
        "p": (_NUM, REQUIRED),
        "n": (int, REQUIRED),
        "cap": (int, 4096),
    },
    "recursion": {
        "alpha": (_NUM, REQUIRED),
        "V_size": (int, REQUIRED),
        "t_hat": (_NUM, 1.0),
        "steps": (int, 200),
        "threshold": (_NUM, 100.0),
        "max_time": (_NUM, 1e10),
        "xm": (_NUM, 1.0),
    },
}
COMMON = {
    "seed": (int, 0),
    "replicas": (int, REQUIRED),
    "workers": (int, 1),
    "out": (str, "out"),
}


def _type_ok(value, types) -> bool:
    if isinstance(value, bool):
        return types is bool
    return isinstance(value, types)


def _type_name(types) -> str:
    if isinstance(types, tuple):
        return "number"
    return {dict: "object", list: "array", str: "string", int: "integer"}.get(types, types.__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description; ``params`` holds the kind-specific fields."""

    kind: str
    seed: int
    replicas: int
    out: str
    workers: int = 1
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d = {"kind": self.kind, "seed": self.seed, "replicas": self.replicas, "out": self.out,
             "workers": self.workers}
        d.update(copy.deepcopy(self.params))
        return d

    def resolved(self) -> dict[str, Any]:
        """The fields that determine the outputs (``out`` and ``workers`` do not)."""
        d = self.to_dict()
        del d["out"], d["workers"]
        return d

    def __getitem__(self, key):
        return self.params[key]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return validate(d)


def validate(raw: dict[str, Any], source: str = "") -> ExperimentConfig:
    """Check ``raw`` against the schema of its kind and fill in defaults.

    Errors name the offending field by its dotted path.
    """
    def fail(path, msg):
        raise ConfigInvalid(path, f"{source + ': ' if source else ''}{msg}")

    if not isinstance(raw, dict):
        fail("", "config must be a JSON object")
    kind = raw.get("kind")
    if kind not in KINDS:
        fail("kind", f"expected one of {', '.join(KINDS)}, got {kind!r}")
    schema = {**COMMON, **SCHEMAS[kind]}
    unknown = sorted(set(raw) - set(schema) - {"kind"})
    if unknown:
        fail(unknown[0], f"unknown field for kind {kind}")
    vals: dict[str, Any] = {}
    for name, (types, default) in schema.items():
        if name not in raw:
            if default is REQUIRED:
                fail(name, f"missing required field {name!r} for kind {kind}")
            vals[name] = copy.deepcopy(default)
            continue
        v = raw[name]
        if not _type_ok(v, types):
            fail(name, f"field {name!r} must be {_type_name(types)}, got {type(v).__name__}")
        vals[name] = copy.deepcopy(v)
    if vals["replicas"] < 1:
        fail("replicas", "replicas must be at least 1")
    if vals["workers"] < 1:
        fail("workers", "workers must be at least 1")
    for key in ("checkpoints", "times"):
        if key in vals:
            seq = vals[key]
            if not seq or not all(_type_ok(x, _NUM) for x in seq):
                fail(key, f"{key!r} must be a nonempty array of numbers")
            if any(b <= a for a, b in zip(seq, seq[1:])):
                fail(key, f"{key!r} must be strictly increasing")
    if "rates" in vals:
        try:
            Rates(**{k: v for k, v in vals["rates"].items() if k != "recovery_law"},
                  recovery_law=law_from_config(vals["rates"]["recovery_law"])
                  if vals["rates"].get("recovery_law") else None)
        except TypeError as exc:
            fail("rates", str(exc))
        except (InvalidRates, InvalidLaw) as exc:
            fail("rates", str(exc))
    if "wake_law" in vals:
        try:
            law_from_config(vals["wake_law"])
        except KeyError as exc:
            fail(f"wake_law.{exc.args[0]}", f"missing field {exc.args[0]!r} in wake_law")
        except (InvalidLaw, ValueError) as exc:
            fail("wake_law", str(exc))
    if "topology" in vals and "kind" not in vals["topology"]:
        fail("topology.kind", "topology needs a 'kind'")
    if vals.get("initial_active", "all") not in ("all", "none"):
        fail("initial_active", "initial_active must be 'all' or 'none'")
    if vals.get("initial_infected", "all") not in ("all", "origin"):
        fail("initial_infected", "initial_infected must be 'all' or 'origin'")
    for name, (ok, msg) in _RANGES.items():
        if name in vals and not ok(vals[name]):
            fail(name, f"{name!r} {msg}, got {vals[name]!r}")
    common = {k: vals.pop(k) for k in list(COMMON)}
    return ExperimentConfig(kind=kind, params=vals, **common)


_RANGES = {
    "alpha": (lambda v: 0 < v < 1, "must lie in (0, 1)"),
    "eps": (lambda v: 0 < v < 1, "must lie in (0, 1)"),
    "p": (lambda v: 0 <= v < 1, "must lie in [0, 1)"),
    "p_c": (lambda v: 0 < v < 1, "must lie in (0, 1)"),
    "xm": (lambda v: v > 0, "must be positive"),
    "t": (lambda v: v > 0, "must be positive"),
    "t_hat": (lambda v: v > 0, "must be positive"),
    "horizon": (lambda v: v > 0, "must be positive"),
    "threshold": (lambda v: v > 0, "must be positive"),
    "max_time": (lambda v: v > 0, "must be positive"),
    "times": (lambda v: v[0] > 0, "must be positive"),
    "checkpoints": (lambda v: v[0] >= 0, "must be nonnegative"),
    "d": (lambda v: v >= 1, "must be at least 1"),
    "n": (lambda v: v >= 1, "must be at least 1"),
    "cap": (lambda v: v >= 1, "must be at least 1"),
    "V_size": (lambda v: v >= 1, "must be at least 1"),
    "steps": (lambda v: v >= 1, "must be at least 1"),
    "max_radius": (lambda v: v >= 1, "must be at least 1"),
}


def read_json(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigInvalid("", f"{path}: cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("", f"{path}: invalid JSON ({exc})") from None


def load(path) -> ExperimentConfig:
    return validate(read_json(path), str(path))


def set_path(raw: dict[str, Any], dotted: str, value) -> dict[str, Any]:
    """Copy of ``raw`` with the field at ``dotted`` (e.g. ``"topology.n"``) replaced."""
    out = copy.deepcopy(raw)
    node = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        nxt = node.get(p)
        if not isinstance(nxt, dict):
            raise ConfigInvalid(dotted, f"{p!r} is not an object in the base config")
        node = nxt
    node[parts[-1]] = value
    return out


def defaults(kind: str) -> dict[str, Any]:
    """Built-in config for each kind, used when no ``--config`` is given."""
    lattice = {"kind": "lattice", "d": 2, "radius": 200, "boundary": "absorbing"}
    lattice_rates = {"lambda_aa": 2.0, "lambda_ad": 2.0, "lambda_da": 2.0, "lambda_dd": 0.0,
                     "delta": 0.0, "sigma": 1.0}
    pareto = {"kind": "pareto", "alpha": 0.5, "xm": 1.0}
    table = {
        "growth": {"topology": lattice, "rates": lattice_rates, "wake_law": pareto,
                   "horizon": 1e4, "checkpoints": [10, 100, 1000, 10000], "replicas": 10},
        "survival": {"topology": {"kind": "complete", "n": 6},
                     "rates": {"lambda_aa": 1.0, "lambda_ad": 1.0, "lambda_da": 1.0, "lambda_dd": 1.0,
                               "delta": 1.0, "sigma": 1.0},
                     "wake_law": {"kind": "pareto", "alpha": 0.8, "xm": 1.0},
                     "times": [100, 1000, 10000], "replicas": 500},
        "coupling": {"topology": lattice, "rates": lattice_rates, "wake_law": pareto,
                     "horizon": 1e4, "p_c": 0.6, "replicas": 20},
        "dl": {"alpha": 0.5, "t": 1e4, "replicas": 100000},
        "gap": {"alpha": 0.5, "times": [100, 1000, 10000], "eps": 0.25, "replicas": 10000},
        "percolation": {"d": 2, "p": 0.1, "n": 500, "replicas": 20},
        "recursion": {"alpha": 0.8, "V_size": 3, "replicas": 200},
    }
    return {"kind": kind, "seed": 0, **copy.deepcopy(table[kind])}
