"""Flat dotted-key configuration files.

A config file is TOML restricted to dotted keys that mirror the ``SimConfig``
attribute paths::

    tank.L = 25e-6
    control.mode = "feedforward"
    duration = 0.0167

Every key is optional; missing keys keep their defaults.  All problems in a
file (unknown keys, wrong types, violated constraints) are reported together.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import sys

from .errors import ConfigError
from .simulation import SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_SECTIONS = ("grid", "tank", "battery", "modulator", "control")
_FIELD_DOCS = {
    "grid.vin_amplitude": "phase-to-neutral peak voltage, V",
    "grid.freq": "grid frequency, Hz (0 freezes the source)",
    "grid.phase": "source angle at t = 0, rad",
    "tank.L": "resonant inductance, H",
    "tank.C": "resonant capacitance, F",
    "tank.n": "transformer turns ratio, primary:secondary",
    "tank.r_series": "parasitic series resistance, ohm",
    "battery.v_batt": "battery voltage, V",
    "battery.power_cmd": "commanded battery power, W",
    "modulator.lf_carrier_freq": "sawtooth carrier of the phase selection, Hz",
    "modulator.hf_freq_min": "lower HF limit, Hz (must stay above resonance)",
    "modulator.hf_freq_max": "upper HF limit, Hz",
    "modulator.dead_time": "H-bridge dead time, s",
    "modulator.phase_shift": "leg B lag as a fraction of the HF period",
    "modulator.duty_law": "'ratio' or 'power_balanced'",
    "modulator.allow_below_resonance": "permit hf_freq_min below f0 (detector tests)",
    "control.mode": "open_loop_fixed | feedforward | feedforward_plus_pi",
    "control.fixed_freq": "HF frequency for open_loop_fixed, Hz",
    "control.pi_kp": "proportional gain, Hz/W",
    "control.pi_ki": "integral gain, Hz/(W*s)",
    "control.update_rate": "HF half-cycles per frequency update",
    "dt": "integration step, s (omit for HF period at hf_freq_max / 2000)",
    "duration": "simulated time, s",
    "record_decimation": "keep every n-th integration step in the trace",
    "i_eps": "current dead band of the switch and rectifier model, A",
}


def _field_types(obj) -> dict:
    return {f.name: f.type for f in dataclasses.fields(obj)}


def to_flat(cfg: SimConfig) -> dict:
    """Dotted-key view of a config; ``dt = None`` is left out."""
    out = {}
    for sec in _SECTIONS:
        for f in dataclasses.fields(getattr(cfg, sec)):
            out[f"{sec}.{f.name}"] = getattr(getattr(cfg, sec), f.name)
    for f in dataclasses.fields(cfg):
        if f.name not in _SECTIONS:
            value = getattr(cfg, f.name)
            if value is not None:
                out[f.name] = value
    return out


def _flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, path + "."))
        else:
            out[path] = value
    return out


def _coerce(path: str, value, kind: str):
    """Checked value for one key, or raise ValueError with a message."""
    if "bool" in kind:
        if not isinstance(value, bool):
            raise ValueError(f"{path} must be true or false")
        return value
    if "int" in kind and "float" not in kind:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ValueError(f"{path} must be an integer")
        return int(value)
    if "float" in kind:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{path} must be a number")
        if not math.isfinite(value):
            raise ValueError(f"{path} must be finite")
        return float(value)
    if "str" in kind:
        if not isinstance(value, str):
            raise ValueError(f"{path} must be a string")
        return value
    return value


def apply_values(cfg: SimConfig, values: dict) -> SimConfig:
    """Copy of ``cfg`` with dotted-key ``values`` applied and validated."""
    cfg = copy.deepcopy(cfg)
    problems = []
    top_types = _field_types(cfg)
    for path, value in values.items():
        head, _, tail = path.partition(".")
        if tail:
            if head not in _SECTIONS or tail not in _field_types(getattr(cfg, head)) or "." in tail:
                problems.append(f"unknown key {path!r}")
                continue
            target, name, kind = getattr(cfg, head), tail, _field_types(getattr(cfg, head))[tail]
        else:
            if head in _SECTIONS or head not in top_types:
                problems.append(f"unknown key {path!r}")
                continue
            target, name, kind = cfg, head, top_types[head]
        try:
            setattr(target, name, _coerce(path, value, str(kind)))
        except ValueError as exc:
            problems.append(str(exc))
    problems += cfg.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(text: str, base: SimConfig | None = None) -> SimConfig:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax error: {exc}"]) from None
    return apply_values(base or SimConfig(), _flatten(tree))


def load_config(path) -> SimConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    return parse_config(text)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg: SimConfig | None = None, comments: bool = True) -> str:
    """The config as a loadable flat key file."""
    cfg = cfg or SimConfig()
    flat = to_flat(cfg)
    width = max(len(k) for k in _FIELD_DOCS)
    lines = []
    for key in _FIELD_DOCS:
        if key not in flat:
            if comments:
                lines.append(f"# {key} = <auto>".ljust(width + 24) + f"  # {_FIELD_DOCS[key]}")
            continue
        entry = f"{key} = {_toml_value(flat[key])}"
        if comments:
            entry = entry.ljust(width + 24) + f"  # {_FIELD_DOCS[key]}"
        lines.append(entry)
    return "\n".join(lines) + "\n"


def canonical_json(cfg: SimConfig) -> str:
    flat = to_flat(cfg)
    flat["dt"] = cfg.step
    return json.dumps(flat, sort_keys=True, separators=(",", ":"))


def run_id(cfg: SimConfig) -> str:
    """Deterministic id: SHA-256 of the canonical config, first 16 hex digits."""
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]
