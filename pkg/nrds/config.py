"""
Configuration handling utilities.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from typing import Optional

import yaml

from nrds.errors import ConfigError
from nrds.waveapp import DAMPING_LAWS, MAX_MODES
from scenarios.scenarios import SCENARIOS

# dependency order of the check suites
CHECK_ORDER = (
    "driver",
    "integrator",
    "conjugation",
    "hyperbolic",
    "manifold",
    "attractor",
    "continuity",
    "gradient",
    "wave",
)
WAVE_CHECKS = ("driver", "wave")
NONLINEARITIES = ("cubic", "zero")

TOP_LEVEL_KEYS = (
    "scenario",
    "etas",
    "seeds",
    "t_anchors",
    "numeric",
    "checks",
    "out_dir",
    "wave",
)
REQUIRED_NUMERIC = ("dt", "T_back", "T_h", "eps_cluster", "grid_n")
INTEGER_NUMERIC = ("grid_n", "N_modes", "graph_nodes", "max_doublings")


@dataclass(frozen=True)
class NumericConfig:
    dt: float
    T_back: float
    T_h: float
    eps_cluster: float
    grid_n: int
    N_modes: Optional[int] = None
    path_dt: Optional[float] = None
    T_trunc: float = 30.0
    delta0: float = 0.2
    graph_nodes: int = 17
    tol: float = 1e-10
    blowup: float = 1e6
    max_doublings: int = 8


@dataclass(frozen=True)
class WaveConfig:
    beta: float = 1.0
    nonlinearity: str = "cubic"
    lam: float = 1.0
    damping: str = "absolute"


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    etas: tuple
    seeds: tuple
    t_anchors: tuple
    numeric: NumericConfig
    checks: tuple
    out_dir: str
    wave: Optional[WaveConfig] = None

    @property
    def ordered_checks(self):
        return tuple(check for check in CHECK_ORDER if check in self.checks)

    def to_dict(self):
        """Validated configuration without the output location."""
        data = asdict(self)
        data.pop("out_dir")
        return data

    def config_hash(self):
        """SHA-256 of the canonical JSON of the validated configuration."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(config_path="config.yaml"):
    """
    Load the experiment configuration from a YAML file.

    Args:
        config_path: Path to the YAML configuration file

    Returns:
        dict: Raw configuration mapping
    """
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Configuration file {config_path} not found.")

    with open(config_path, "r") as file:
        try:
            config = yaml.safe_load(file)
        except yaml.MarkedYAMLError as e:
            line = e.problem_mark.line + 1 if e.problem_mark else 1
            raise ConfigError([f"line {line}: <root>: {e.problem}"]) from e

    if not isinstance(config, dict):
        raise ConfigError(["line 1: <root>: configuration must be a mapping"])
    return config


def load_key_lines(config_path):
    """Map every dotted key of the YAML file to its 1-based line."""
    with open(config_path, "r") as file:
        root = yaml.compose(file)

    lines = {}

    def walk(node, prefix):
        if not isinstance(node, yaml.MappingNode):
            return
        for key_node, value_node in node.value:
            name = f"{prefix}{key_node.value}"
            lines[name] = key_node.start_mark.line + 1
            walk(value_node, f"{name}.")

    walk(root, "")
    return lines


class _Diagnostics:
    def __init__(self, lines):
        self.lines = lines
        self.messages = []

    def line_of(self, key):
        while key:
            if key in self.lines:
                return self.lines[key]
            key = key.rpartition(".")[0]
        return 1

    def add(self, key, message):
        self.messages.append(f"line {self.line_of(key)}: {key}: {message}")


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_integer(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _check_unknown(section, allowed, prefix, diagnostics):
    for key in section:
        if key not in allowed:
            diagnostics.add(f"{prefix}{key}", "unknown key")


def _number_list(raw, key, diagnostics, integer=False, low=None, high=None):
    values = raw.get(key)
    if values is None:
        diagnostics.add(key, "missing required key")
        return ()
    if not isinstance(values, list) or not values:
        diagnostics.add(key, "must be a non-empty list")
        return ()
    checked = []
    for value in values:
        valid = _is_integer(value) if integer else _is_number(value)
        if not valid:
            kind = "integers" if integer else "numbers"
            diagnostics.add(key, f"entries must be {kind}, got {value!r}")
            continue
        if (low is not None and value < low) or (high is not None and value > high):
            diagnostics.add(key, f"entry {value} lies outside [{low}, {high}]")
            continue
        checked.append(int(value) if integer else float(value))
    return tuple(checked)


def _numeric_section(raw, scenario, diagnostics):
    section = raw.get("numeric")
    if section is None:
        diagnostics.add("numeric", "missing required key")
        return None
    if not isinstance(section, dict):
        diagnostics.add("numeric", "must be a mapping")
        return None

    allowed = {f.name for f in fields(NumericConfig)}
    _check_unknown(section, allowed, "numeric.", diagnostics)

    required = REQUIRED_NUMERIC + (("N_modes",) if scenario == "wave" else ())
    for key in required:
        if key not in section:
            diagnostics.add(f"numeric.{key}", "missing required key")

    values = {}
    for key, value in section.items():
        if key not in allowed:
            continue
        name = f"numeric.{key}"
        if key in INTEGER_NUMERIC:
            if not _is_integer(value):
                diagnostics.add(name, f"must be an integer, got {value!r}")
                continue
        elif not _is_number(value):
            diagnostics.add(name, f"must be a number, got {value!r}")
            continue
        if value <= 0:
            diagnostics.add(name, f"must be positive, got {value}")
            continue
        values[key] = int(value) if key in INTEGER_NUMERIC else float(value)

    if "N_modes" in values and values["N_modes"] > MAX_MODES:
        diagnostics.add("numeric.N_modes", f"must not exceed {MAX_MODES}")
    if any(key not in values for key in required):
        return None
    values.setdefault("path_dt", values["dt"] / 2.0)
    ratio = values["dt"] / values["path_dt"]
    if ratio < 1.0 - 1e-9 or abs(ratio - round(ratio)) > 1e-9 * ratio:
        diagnostics.add("numeric.path_dt", "must divide dt")
        return None
    return NumericConfig(**values)


def _wave_section(raw, scenario, diagnostics):
    section = raw.get("wave")
    if scenario != "wave":
        if section is not None:
            diagnostics.add("wave", "only allowed for scenario wave")
        return None
    if section is None:
        return WaveConfig()
    if not isinstance(section, dict):
        diagnostics.add("wave", "must be a mapping")
        return None

    _check_unknown(section, {f.name for f in fields(WaveConfig)}, "wave.", diagnostics)
    values = {}
    for key in ("beta", "lam"):
        if key in section:
            value = section[key]
            if not _is_number(value):
                diagnostics.add(f"wave.{key}", f"must be a number, got {value!r}")
            elif key == "beta" and value <= 0:
                diagnostics.add("wave.beta", f"must be positive, got {value}")
            else:
                values[key] = float(value)
    for key, choices in (("nonlinearity", NONLINEARITIES), ("damping", DAMPING_LAWS)):
        if key in section:
            if section[key] not in choices:
                diagnostics.add(
                    f"wave.{key}", f"must be one of {', '.join(choices)}"
                )
            else:
                values[key] = section[key]
    return WaveConfig(**values)


def validate_config(raw, lines=None, base_dir="."):
    """
    Validate a raw configuration mapping.

    Args:
        raw: Mapping as loaded from YAML
        lines: Dotted key to line number, used in diagnostics
        base_dir: Folder relative output paths resolve against

    Returns:
        ExperimentConfig: the validated configuration

    Raises:
        ConfigError: with one "line <n>: <key>: <message>" entry per problem
    """
    diagnostics = _Diagnostics(lines or {})
    _check_unknown(raw, TOP_LEVEL_KEYS, "", diagnostics)

    scenario = raw.get("scenario")
    if scenario is None:
        diagnostics.add("scenario", "missing required key")
    elif scenario not in SCENARIOS:
        diagnostics.add(
            "scenario", f"unknown scenario {scenario!r}; one of {', '.join(SCENARIOS)}"
        )
        scenario = None

    etas = _number_list(raw, "etas", diagnostics, low=0.0, high=1.0)
    seeds = _number_list(raw, "seeds", diagnostics, integer=True, low=0)
    t_anchors = _number_list(raw, "t_anchors", diagnostics)
    numeric = _numeric_section(raw, scenario, diagnostics)
    wave = _wave_section(raw, scenario, diagnostics)

    checks = raw.get("checks")
    if checks is None:
        diagnostics.add("checks", "missing required key")
        checks = ()
    elif not isinstance(checks, list) or not checks:
        diagnostics.add("checks", "must be a non-empty list")
        checks = ()
    else:
        allowed = WAVE_CHECKS if scenario == "wave" else CHECK_ORDER[:-1]
        for check in checks:
            if check not in CHECK_ORDER:
                diagnostics.add("checks", f"unknown check suite {check!r}")
            elif scenario is not None and check not in allowed:
                diagnostics.add(
                    "checks", f"check suite {check!r} does not apply to {scenario}"
                )
        checks = tuple(dict.fromkeys(checks))

    out_dir = raw.get("out_dir")
    if out_dir is None:
        diagnostics.add("out_dir", "missing required key")
    elif not isinstance(out_dir, str) or not out_dir:
        diagnostics.add("out_dir", "must be a path")
    else:
        out_dir = os.path.normpath(os.path.join(base_dir, out_dir))

    if diagnostics.messages:
        raise ConfigError(diagnostics.messages)

    return ExperimentConfig(
        scenario=scenario,
        etas=etas,
        seeds=seeds,
        t_anchors=t_anchors,
        numeric=numeric,
        checks=checks,
        out_dir=out_dir,
        wave=wave,
    )


def load_experiment(config_path):
    """Load and validate an experiment configuration file."""
    raw = load_config(config_path)
    base_dir = os.path.dirname(os.path.abspath(config_path))
    return validate_config(raw, load_key_lines(config_path), base_dir)


def validate(config_path):
    """
    Diagnostics of a configuration file without running it.

    Returns:
        list: "line <n>: <key>: <message>" strings, empty when valid
    """
    try:
        load_experiment(config_path)
    except ConfigError as e:
        return list(e.diagnostics)
    return []
