"""Flat key=value run configuration: parsing, validation, serialization.

The format is one `key = value` per line, `#` starts a comment, dotted
prefixes group related keys (`grid.spacing = 0.1`).  Every key is checked
against the schema before any computation starts; unknown keys are hard
errors with a nearest-match suggestion, and every diagnostic names the
offending key and line.
"""

from __future__ import annotations

import difflib
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .model import POTENTIAL_KINDS

__all__ = ["ConfigError", "RunConfig", "parse_config", "serialize_config"]

MODES = ("eigensolve", "propagate", "optimize", "stability")
TARGET_KINDS = ("superposition", "symmetry", "file")


class ConfigError(ValueError):
    """A configuration file failed validation."""


def _float(text):
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"{text!r} is not a number")
    if not math.isfinite(value):
        raise ValueError(f"{text!r} is not finite")
    return value


def _positive_float(text):
    value = _float(text)
    if value <= 0:
        raise ValueError(f"must be positive, got {text}")
    return value


def _nonnegative_float(text):
    value = _float(text)
    if value < 0:
        raise ValueError(f"must be nonnegative, got {text}")
    return value


def _int(text):
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"{text!r} is not an integer")


def _positive_int(text):
    value = _int(text)
    if value < 1:
        raise ValueError(f"must be at least 1, got {text}")
    return value


def _choice(options):
    def convert(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}; got {text!r}")
        return text
    return convert


def _float_list(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("needs at least one number")
    return tuple(_float(p) for p in parts)


def _int_list(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("needs at least one integer")
    return tuple(_int(p) for p in parts)


def _parity(text):
    value = _int(text)
    if value not in (-1, 1):
        raise ValueError(f"parity must be -1 or 1, got {text}")
    return value


def _frequency(text):
    if text == "auto":
        return "auto"
    return _positive_float(text)


def _points(text):
    groups = [g.strip() for g in text.split(";") if g.strip()]
    if not groups:
        raise ValueError("needs at least one point")
    return tuple(tuple(_float(c) for c in g.split(",")) for g in groups)


def _text(text):
    return text


# key -> (converter, modes that read it; None = every mode)
_SCHEMA = {
    "mode": (_choice(MODES), None),
    "out": (_text, None),
    "grid.dim": (_choice(("1", "2")), None),
    "grid.spacing": (_positive_float, None),
    "grid.half_extent": (_float_list, None),
    "potential.kind": (_choice(POTENTIAL_KINDS), None),
    "potential.x_coefficients": (_float_list, None),
    "potential.y_coefficients": (_float_list, None),
    "time.total": (_positive_float, ("propagate", "optimize", "stability")),
    "time.dt": (_positive_float, ("propagate", "optimize", "stability")),
    "target.kind": (_choice(TARGET_KINDS), ("optimize", "stability")),
    "target.states": (_int_list, ("optimize", "stability")),
    "target.coefficients": (_float_list, ("optimize", "stability")),
    "target.parity_x": (_parity, ("optimize", "stability")),
    "target.parity_y": (_parity, ("optimize", "stability")),
    "target.density_file": (_text, ("optimize", "stability")),
    "w_c": (_nonnegative_float, ("optimize", "stability")),
    "guess.amplitude": (_positive_float, ("optimize",)),
    "guess.frequency": (_frequency, ("optimize",)),
    "guess.sign": (_float, ("optimize",)),
    "guess.seeds": (_float_list, ("optimize",)),
    "tolerances.j_tol": (_positive_float, ("optimize",)),
    "tolerances.max_iter": (_positive_int, ("optimize",)),
    "eigensolve.count": (_positive_int, ("eigensolve",)),
    "monitor.points": (_points, ("optimize", "stability")),
    "stability.state_file": (_text, ("stability",)),
    "propagate.state_file": (_text, ("propagate",)),
    "propagate.field_file": (_text, ("propagate",)),
}

_REQUIRED = {
    "eigensolve": (),
    "propagate": ("time.total", "time.dt"),
    "optimize": ("time.total", "time.dt", "target.kind", "w_c",
                 "guess.amplitude", "guess.frequency"),
    "stability": ("time.total", "time.dt", "target.kind", "w_c",
                  "stability.state_file", "monitor.points"),
}

_ALWAYS_REQUIRED = ("mode", "out", "grid.dim", "grid.spacing",
                    "grid.half_extent", "potential.kind")

_PATH_KEYS = ("out", "target.density_file", "stability.state_file",
              "propagate.state_file", "propagate.field_file")


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one run; attribute names mirror the keys."""

    mode: str
    out: Path
    grid_dim: int
    grid_spacing: float
    grid_half_extent: tuple
    potential_kind: str
    potential_x_coefficients: tuple = None
    potential_y_coefficients: tuple = None
    time_total: float = None
    time_dt: float = None
    target_kind: str = None
    target_states: tuple = None
    target_coefficients: tuple = None
    target_parity_x: int = None
    target_parity_y: int = None
    target_density_file: Path = None
    w_c: float = None
    guess_amplitude: float = None
    guess_frequency: object = None
    guess_sign: float = 1.0
    guess_seeds: tuple = (1.0,)
    tolerances_j_tol: float = 1e-6
    tolerances_max_iter: int = 200
    eigensolve_count: int = 2
    monitor_points: tuple = None
    stability_state_file: Path = None
    propagate_state_file: Path = None
    propagate_field_file: Path = None

    @property
    def mesh_steps(self) -> int:
        steps = round(self.time_total / self.time_dt)
        return int(steps)


def _attr_of(key: str) -> str:
    return key.replace(".", "_")


def _fail(path, line, key, message):
    place = f"{path.name} line {line}" if line else path.name
    raise ConfigError(f"{place}: {key}: {message}")


def _scan(path: Path):
    """Raw key -> (value text, line number), with syntax checks."""
    entries = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{path.name} line {lineno}: expected 'key = value', got {raw!r}"
            )
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path.name} line {lineno}: empty key")
        if key in entries:
            _fail(path, lineno, key,
                  f"duplicate key (first set on line {entries[key][1]})")
        if key not in _SCHEMA:
            hint = difflib.get_close_matches(key, _SCHEMA, n=1, cutoff=0.5)
            suggestion = f"; did you mean {hint[0]!r}?" if hint else ""
            _fail(path, lineno, key, f"unknown key{suggestion}")
        entries[key] = (value, lineno)
    return entries


def _cross_validate(path, values, lines):
    def fail(key, message):
        _fail(path, lines.get(key), key, message)

    mode = values["mode"]
    for key in _ALWAYS_REQUIRED + _REQUIRED[mode]:
        if key not in values:
            _fail(path, None, key, f"required for mode {mode!r} but missing")
    for key in values:
        allowed = _SCHEMA[key][1]
        if allowed is not None and mode not in allowed:
            fail(key, f"not used in mode {mode!r}")

    dim = int(values["grid.dim"])
    if len(values["grid.half_extent"]) not in (1, dim):
        fail("grid.half_extent", f"needs 1 or {dim} values")
    if values["potential.kind"] != "custom_polynomial":
        for key in ("potential.x_coefficients", "potential.y_coefficients"):
            if key in values:
                fail(key, f"only valid for potential.kind = custom_polynomial")

    if "time.total" in values:
        total, dt = values["time.total"], values["time.dt"]
        steps = round(total / dt)
        if steps < 1 or abs(steps * dt - total) > 1e-9 * max(1.0, total):
            fail("time.total", "must be a positive integer multiple of time.dt")

    kind = values.get("target.kind")
    if kind == "superposition":
        if "target.states" not in values:
            fail("target.kind", "superposition target needs target.states")
        if "target.coefficients" not in values:
            fail("target.kind", "superposition target needs target.coefficients")
        states = values["target.states"]
        coeffs = values["target.coefficients"]
        if len(states) != len(coeffs):
            fail("target.coefficients",
                 f"{len(coeffs)} coefficients for {len(states)} states")
        if len(set(states)) != len(states) or min(states) < 0:
            fail("target.states", "state indices must be distinct and >= 0")
    elif kind == "symmetry":
        if "target.parity_x" not in values:
            fail("target.kind", "symmetry target needs target.parity_x")
        if len(values.get("target.coefficients", ())) != 2:
            fail("target.coefficients",
                 "symmetry target needs exactly 2 coefficients")
        if "target.parity_y" in values and dim == 1:
            fail("target.parity_y", "only valid on 2D grids")
    elif kind == "file":
        if "target.density_file" not in values:
            fail("target.kind", "file target needs target.density_file")
    if "target.coefficients" in values and kind != "file":
        total = sum(c * c for c in values["target.coefficients"])
        if abs(total - 1.0) > 1e-8:
            fail("target.coefficients",
                 f"squared coefficients sum to {total:.12f}, must be 1")

    if values.get("guess.frequency") == "auto":
        if kind == "superposition" and len(values["target.states"]) != 2:
            fail("guess.frequency",
                 "auto needs a two-state superposition target")
        if kind == "file":
            fail("guess.frequency", "auto needs an eigenstate-based target")

    if "monitor.points" in values:
        for point in values["monitor.points"]:
            if len(point) != dim:
                fail("monitor.points",
                     f"point {point} has {len(point)} coordinates on a "
                     f"{dim}D grid")


def parse_config(path) -> RunConfig:
    """Read, type, and cross-validate a configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    entries = _scan(path)
    values, lines = {}, {}
    for key, (text, lineno) in entries.items():
        converter = _SCHEMA[key][0]
        try:
            values[key] = converter(text)
        except ValueError as exc:
            _fail(path, lineno, key, str(exc))
        lines[key] = lineno
    _cross_validate(path, values, lines)

    base = path.resolve().parent
    kwargs = {}
    for key, value in values.items():
        if key in _PATH_KEYS:
            value = (base / value).resolve()
        elif key == "grid.dim":
            value = int(value)
        elif key == "grid.half_extent" and len(value) == 1:
            value = (value[0],) * int(values["grid.dim"])
        kwargs[_attr_of(key)] = value
    return RunConfig(**kwargs)


def _format_value(key, value):
    if key == "monitor.points":
        return "; ".join(", ".join(repr(c) for c in p) for p in value)
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: RunConfig) -> str:
    """Canonical text form; parsing it back reproduces the RunConfig."""
    by_attr = {_attr_of(key): key for key in _SCHEMA}
    out = []
    for field in fields(config):
        value = getattr(config, field.name)
        if value is None:
            continue
        key = by_attr[field.name]
        allowed = _SCHEMA[key][1]
        if allowed is not None and config.mode not in allowed:
            continue
        out.append(f"{key} = {_format_value(key, value)}")
    return "\n".join(out) + "\n"
