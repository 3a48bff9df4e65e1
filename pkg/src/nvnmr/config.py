"""Run configuration: YAML files validated against a strict schema.

Times are in seconds, frequencies and couplings in Hz, fields in tesla.
Unknown keys are rejected with their dotted path so a misspelling aborts
before any computation starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .spinsys import ISOTOPES, Isotope, Nucleus, SpinSystem


class ConfigError(ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


@dataclass(frozen=True)
class Field:
    kind: object  # type, tuple of types, dict (section), or ("list", Field)
    default: object = None
    required: bool = False
    choices: tuple = ()
    check: object = None  # callable(value) -> error message or None


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _count(v):
    return None if v >= 1 else "must be >= 1"


NUM = (int, float)

GRID = {
    "start": Field(NUM, 0.0, check=_nonneg),
    "dwell": Field(NUM, required=True, check=_positive),
    "count": Field(int, required=True, check=_count),
}

NUCLEUS = {
    "isotope": Field(str, required=True),
    "gamma": Field(NUM),  # MHz/T, only for isotopes outside the table
    "a_par": Field(NUM, 0.0),
    "a_perp": Field(NUM, 0.0, check=_nonneg),
}

SCHEMA = {
    "system": Field(
        {
            "b0": Field(NUM, required=True, check=_positive),
            "t1": Field(NUM, math.inf, check=_positive),
            "t2": Field(NUM, math.inf, check=_positive),
            "nuclei": Field(("list", Field(NUCLEUS)), []),
        },
        required=True,
    ),
    "protocol": Field(
        {
            "kind": Field(str, required=True, choices=("multipulse", "multipulse_decay", "fid", "2d")),
            "free": Field(str, "H2", choices=("H1", "H2", "H3")),
            "n_pulses": Field(int, 16, check=_count),
            "tau": Field((int, float, str), "auto"),
            "tau_nucleus": Field(int, 0, check=_nonneg),
            "tau3": Field((int, float, str), "auto"),
            "phase_pattern": Field(str, "CP", choices=("CP", "XY8")),
            "pulse_duration": Field(NUM, 0.0, check=_nonneg),
            "phase_cycle": Field(bool, True),
            "envelopes": Field(bool, True),
            "grids": Field(("list", Field(GRID)), required=True),
            "grid2": Field(GRID),
            "noise": Field(
                {
                    "enabled": Field(bool, False),
                    "photons_per_readout": Field(NUM, 0.03, check=_positive),
                    "contrast": Field(NUM, 0.3, check=_positive),
                    "averages": Field(int, 1_000_000, check=_count),
                    "seed": Field(int),
                }
            ),
        },
        required=True,
    ),
    "analysis": Field(
        {
            "window": Field(str, "cosine", choices=("none", "cosine")),
            "zero_pad": Field(int, 4, check=_count),
            "remove_dc": Field(bool, True),
            "threshold": Field(NUM, 0.2, check=_positive),
            "fit": Field(bool, True),
            "fit_decay": Field(bool, True),
            "band": Field(list),
            "alias_tol": Field(NUM, 0.0, check=_nonneg),
            "assign_tol": Field(NUM, 5e3, check=_positive),
            "harmonic_tol": Field(NUM, 0.01, check=_positive),
            "nmr_reference": Field(list),
        }
    ),
    "output": Field(
        {
            "prefix": Field(str, "run"),
            "dir": Field(str, "."),
        }
    ),
}


def _validate(value, spec, path):
    kind = spec.kind
    if isinstance(kind, dict):
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
        out = {}
        for key in value:
            if key not in kind:
                known = ", ".join(sorted(kind))
                raise ConfigError(_join(path, key), f"unknown key (expected one of: {known})")
        for key, sub in kind.items():
            p = _join(path, key)
            if key not in value or value[key] is None:
                if sub.required:
                    raise ConfigError(p, "required key missing")
                out[key] = _default(sub)
            else:
                out[key] = _validate(value[key], sub, p)
        return out
    if isinstance(kind, tuple) and kind and kind[0] == "list":
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        return [_validate(v, kind[1], f"{path}[{i}]") for i, v in enumerate(value)]
    types = kind if isinstance(kind, tuple) else (kind,)
    if isinstance(value, str) and float in types and str not in types:
        # YAML 1.1 reads exponents without a sign (1e6) as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(path, f"expected {_type_names(types)}, got bool")
    if not isinstance(value, types):
        raise ConfigError(path, f"expected {_type_names(types)}, got {type(value).__name__}")
    if spec.choices and value not in spec.choices:
        raise ConfigError(path, f"must be one of {list(spec.choices)}, got {value!r}")
    if spec.check and isinstance(value, (int, float)) and not isinstance(value, bool):
        msg = spec.check(value)
        if msg:
            raise ConfigError(path, msg)
    return value


def _default(spec):
    if isinstance(spec.kind, dict):
        if any(f.required for f in spec.kind.values()):
            return None  # optional section that cannot be defaulted
        return _validate({}, spec, "")
    if isinstance(spec.default, list):
        return list(spec.default)
    return spec.default


def _join(path, key):
    return f"{path}.{key}" if path else key


def _type_names(types):
    return " or ".join(t.__name__ for t in types)


def validate(raw):
    """Validate a raw mapping; returns a normalized copy with defaults filled in."""
    cfg = _validate(raw if raw is not None else {}, Field(SCHEMA), "")
    proto, analysis = cfg["protocol"], cfg["analysis"]
    for key in ("tau", "tau3"):
        v = proto[key]
        if isinstance(v, str) and v != "auto":
            raise ConfigError(f"protocol.{key}", f"must be a number or 'auto', got {v!r}")
        if not isinstance(v, str) and not v > 0:
            raise ConfigError(f"protocol.{key}", "must be > 0")
    if not proto["grids"]:
        raise ConfigError("protocol.grids", "at least one grid is required")
    if proto["kind"] == "2d" and proto["grid2"] is None:
        raise ConfigError("protocol.grid2", "required for the 2d protocol")
    if proto["kind"] in ("fid", "2d", "multipulse_decay") and not cfg["system"]["nuclei"]:
        if proto["tau"] == "auto":
            raise ConfigError("protocol.tau", "'auto' needs at least one nucleus")
    noise = proto["noise"]
    if noise["enabled"] and noise["seed"] is None:
        raise ConfigError("protocol.noise.seed", "a seed is required when noise is enabled")
    if noise["contrast"] > 1:
        raise ConfigError("protocol.noise.contrast", "must be <= 1")
    band = analysis["band"]
    if band is not None:
        try:
            band = analysis["band"] = [float(b) for b in band]
        except (TypeError, ValueError):
            raise ConfigError("analysis.band", "expected two numbers in Hz") from None
        if len(band) != 2 or not band[1] > band[0]:
            raise ConfigError("analysis.band", "expected [low_hz, high_hz] with high > low")
    ref = analysis["nmr_reference"]
    if ref is not None:
        try:
            ref = analysis["nmr_reference"] = [float(f) for f in ref]
        except (TypeError, ValueError):
            raise ConfigError("analysis.nmr_reference", "expected frequencies in Hz") from None
        if not all(f > 0 for f in ref):
            raise ConfigError("analysis.nmr_reference", "frequencies must be positive")
    nuclei = cfg["system"]["nuclei"]
    for i, n in enumerate(nuclei):
        if n["isotope"] not in ISOTOPES and n["gamma"] is None:
            raise ConfigError(f"system.nuclei[{i}].isotope",
                              f"unknown isotope {n['isotope']!r}; give 'gamma' in MHz/T")
    if proto["tau_nucleus"] >= max(len(nuclei), 1):
        raise ConfigError("protocol.tau_nucleus", "index out of range")
    try:
        build_system(cfg)
    except ValueError as exc:
        raise ConfigError("system", str(exc)) from None
    return cfg


def load(path):
    """Read and validate a YAML config file."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark else "<yaml>"
        raise ConfigError(where, f"YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    return validate(raw)


def build_system(cfg):
    s = cfg["system"]
    nuclei = []
    for n in s["nuclei"]:
        if n["gamma"] is not None:
            iso = Isotope(n["isotope"], float(n["gamma"]))
        else:
            iso = ISOTOPES[n["isotope"]]
        nuclei.append(Nucleus(iso, float(n["a_par"]), float(n["a_perp"])))
    return SpinSystem(float(s["b0"]), tuple(nuclei), float(s["t1"]), float(s["t2"]))
