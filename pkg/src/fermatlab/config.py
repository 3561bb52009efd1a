"""Strict JSON experiment configs.

A config is one JSON object::

    {
      "experiment": "quantum_stationarity",
      "system": {"kind": "random_hermitian", "parameters": {"dim": 8}, "seed": 42},
      "path": {"t_final": 1.0, "grids": [250, 500, 1000, 2000], "state_seed": 1},
      "variation": {"n_directions": 8, "modes": [1, 2], "seed": 7},
      "tolerances": {"ratio": 1e-3},
      "expect": {"verdict": "stationary"},
      "output_dir": "runs/quantum"
    }

Every section except ``experiment`` is optional; missing entries take the
experiment's defaults (see ``fermatlab list``). Unknown keys anywhere are
errors, reported with the line on which the key appears.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field

from .errors import ConfigError
from .systems import DEFAULTS, SystemSpec

EXPERIMENTS = (
    "quantum_stationarity",
    "quantum_residuals",
    "aa_length",
    "nonlinear_flow",
    "classical_stationarity",
    "lambda_consistency",
    "isoperimetric",
    "shell_geodesic",
    "config_space",
    "spin_hypothesis",
)

TOP_KEYS = ("experiment", "system", "path", "variation", "tolerances", "expect", "output_dir")
SYSTEM_KEYS = ("kind", "parameters", "seed")
PATH_KEYS = (
    "t_final",
    "n_steps",
    "grids",
    "initial_state",
    "state_seed",
    "sign",
    "baseline_amplitude",
    "baseline_seed",
    "equipotential",
    "counter_t_final",
)
VARIATION_KEYS = ("n_directions", "modes", "seed", "epsilons")

TOLERANCE_DEFAULTS = {
    # stationarity verdict protocol
    "ratio": 1e-3,
    "order": 2.0,
    "order_tol": 0.05,
    "convergence_tol": 0.05,
    "zero_floor": 1e-11,
    # pointwise identities
    "residual": 1e-10,
    "extended_residual": 1e-8,
    "random_residual": 1e-3,
    "length_rel": 1e-6,
    "time_rel": 1e-5,
    "norm": 1e-10,
    # multiplier traces
    "spread": 1e-6,
    "counter_spread": 1e-1,
}
ENGINE_TOLERANCES = ("ratio", "order", "order_tol", "convergence_tol", "zero_floor")


class ConfigParseError(ConfigError):
    """Config problem with an optional 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class ExperimentConfig:
    experiment: str
    system: SystemSpec
    path: dict
    variation: dict
    tolerances: dict
    expect: dict
    output_dir: str
    source: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "system": self.system.to_dict(),
            "path": copy.deepcopy(self.path),
            "variation": copy.deepcopy(self.variation),
            "tolerances": dict(self.tolerances),
            "expect": dict(self.expect),
            "output_dir": self.output_dir,
        }


def _key_line(text: str, key: str) -> int | None:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _check_keys(obj, allowed, where, text):
    if not isinstance(obj, dict):
        raise ConfigParseError(f"{where} must be a JSON object", _key_line(text, where.split(".")[-1]))
    for key in obj:
        if key not in allowed:
            raise ConfigParseError(
                f"unknown key {key!r} in {where}; allowed keys: {', '.join(allowed)}", _key_line(text, key)
            )


def _reject_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigParseError(f"duplicate key {k!r}")
        seen[k] = v
    return seen


def parse_config(text: str, defaults_for=None) -> ExperimentConfig:
    """Parse and validate a config document.

    ``defaults_for`` maps an experiment name to its default config dict; the
    parsed sections are merged over those defaults (one level deep, except
    that a provided ``system`` replaces the default system wholesale).
    """
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from None
    _check_keys(raw, TOP_KEYS, "config", text)
    if "experiment" not in raw:
        raise ConfigParseError("missing required key 'experiment'")
    name = raw["experiment"]
    if name not in EXPERIMENTS:
        raise ConfigParseError(f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}",
                               _key_line(text, "experiment"))
    base = copy.deepcopy(defaults_for(name)) if defaults_for else {}

    system = raw.get("system", base.get("system"))
    if system is None:
        raise ConfigParseError("missing 'system' and the experiment has no default system")
    _check_keys(system, SYSTEM_KEYS, "system", text)
    if system.get("kind") not in DEFAULTS:
        raise ConfigParseError(f"unknown system kind {system.get('kind')!r}", _key_line(text, "kind"))
    params = system.get("parameters", {})
    _check_keys(params, tuple(DEFAULTS[system["kind"]]), "system.parameters", text)
    spec = SystemSpec(system["kind"], dict(params), system.get("seed"))

    sections = {}
    for sec, allowed in (("path", PATH_KEYS), ("variation", VARIATION_KEYS),
                         ("tolerances", tuple(TOLERANCE_DEFAULTS))):
        given = raw.get(sec, {})
        _check_keys(given, allowed, sec, text)
        merged = dict(base.get(sec, {}))
        merged.update(given)
        sections[sec] = merged
    tolerances = dict(TOLERANCE_DEFAULTS)
    tolerances.update(sections["tolerances"])
    for key, value in tolerances.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
            raise ConfigParseError(f"tolerance {key!r} must be a non-negative number", _key_line(text, key))

    expect = raw.get("expect", base.get("expect", {}))
    if not isinstance(expect, dict):
        raise ConfigParseError("expect must be a JSON object", _key_line(text, "expect"))
    output_dir = raw.get("output_dir", base.get("output_dir", f"runs/{name}"))
    if not isinstance(output_dir, str):
        raise ConfigParseError("output_dir must be a string", _key_line(text, "output_dir"))
    _validate_values(sections["path"], sections["variation"], text)
    return ExperimentConfig(name, spec, sections["path"], sections["variation"], tolerances, dict(expect),
                            output_dir, raw)


def _validate_values(path, variation, text):
    def fail(key, msg):
        raise ConfigParseError(f"{key}: {msg}", _key_line(text, key))

    if "t_final" in path and (not isinstance(path["t_final"], (int, float)) or path["t_final"] <= 0):
        fail("t_final", "must be a positive number")
    for key in ("n_steps", "state_seed", "baseline_seed"):
        if key in path and (not isinstance(path[key], int) or isinstance(path[key], bool) or path[key] < 0):
            fail(key, "must be a non-negative integer")
    if "grids" in path:
        g = path["grids"]
        if not isinstance(g, list) or not g or not all(isinstance(n, int) and n >= 2 for n in g):
            fail("grids", "must be a non-empty list of integers >= 2")
    if "sign" in path and path["sign"] not in (1, -1):
        fail("sign", "must be 1 or -1")
    if "n_directions" in variation and (not isinstance(variation["n_directions"], int)
                                        or variation["n_directions"] < 1):
        fail("n_directions", "must be a positive integer")
    if "modes" in variation and (not isinstance(variation["modes"], list) or not variation["modes"]
                                 or not all(isinstance(m, int) and m >= 1 for m in variation["modes"])):
        fail("modes", "must be a non-empty list of positive integers")
    if "epsilons" in variation and (not isinstance(variation["epsilons"], list) or not variation["epsilons"]
                                    or not all(isinstance(e, (int, float)) and e > 0
                                               for e in variation["epsilons"])):
        fail("epsilons", "must be a non-empty list of positive numbers")


def load_config(filename, defaults_for=None) -> ExperimentConfig:
    try:
        with open(filename, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {filename}: {exc.strerror}") from None
    return parse_config(text, defaults_for)
