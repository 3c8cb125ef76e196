"""Run configuration: a flat ``key = value`` file with typed, validated options.

Lengths are given in units of sigma0 and times in units of 1/omega; the
commands convert to physical units once the parameters are known.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .core import PhysicalParams
from .io import FormatError, format_key_values, params_from_mapping, params_to_mapping, parse_key_values

__all__ = ["ConfigError", "ScenarioConfig", "COMMANDS", "load_config", "option_schema"]


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _floats(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _str(text: str) -> str:
    return text.strip()


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# key -> (parser, default); defaults apply when a key is absent
_COMMON = {
    "grid_points": (_int, 2000),
    "x_max": (float, 10.0),
    "tolerance": (float, 0.0),
    "seed": (_int, 0),
}

_SCHEMA = {
    "spectrum": {
        "n": (_int, 2),
        "interval": (_str, "all"),
        "n_eigs": (_int, 6),
        "x_cut": (float, 12.0),
        "extrapolate": (_bool, True),
        "parity": (_str, "any"),
    },
    "evolve": {
        "n": (_int, 1),
        "initial": (_str, "delta"),
        "x0": (float, 1.0),
        "q": (float, 1.4),
        "width": (float, 1.0),
        "output_times": (_floats, (0.1, 0.5, 1.0, 5.0)),
        "dt": (float, 0.0),
    },
    "kernel": {
        "n": (_int, 0),
        "sources": (_floats, (1.0,)),
        "output_times": (_floats, (0.1, 0.5, 1.0, 5.0)),
        "dt": (float, 0.0),
    },
    "control": {
        "kind": (_str, "ou"),
        "x0": (float, 1.0),
        "a": (float, 1.0),
        "tau": (float, 1.0),
        "N": (_int, 4),
        "output_times": (_floats, (0.5, 1.0, 2.0, 5.0, 10.0)),
        "frame_dt": (float, 1e-3),
        "x_span": (float, 4.0),
        "exclude_radius": (float, 0.5),
    },
    "simulate": {
        "n": (_int, 0),
        "initial": (_str, "point"),
        "x0": (float, 1.0),
        "n_particles": (_int, 10000),
        "dt": (float, 1e-3),
        "snapshot_times": (_floats, (0.5, 1.0)),
    },
    "compare": {
        "engines": (_str, "fpsolver,ou_oracle"),
        "n": (_int, 0),
        "x0": (float, 1.0),
        "output_times": (_floats, (1.0,)),
        "n_particles": (_int, 100000),
        "dt": (float, 1e-3),
        "bins": (_int, 200),
    },
}

COMMANDS = tuple(_SCHEMA)

_CHOICES = {
    ("control", "kind"): ("ou", "n1", "decay", "packet"),
    ("evolve", "initial"): ("delta", "asymmetric", "stationary"),
    ("simulate", "initial"): ("point", "stationary"),
    ("spectrum", "parity"): ("any", "even", "odd"),
}

_PARAM_KEYS = ("m", "omega", "hbar", "emittance", "mode")


def option_schema(command: str) -> dict:
    if command not in _SCHEMA:
        raise ConfigError(f"command: unknown command {command!r}; expected one of {', '.join(COMMANDS)}",
                          "command")
    return {**_COMMON, **_SCHEMA[command]}


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters, command and typed options of one run."""

    params: PhysicalParams
    command: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        schema = option_schema(self.command)
        full = {k: d for k, (_, d) in schema.items()}
        for key, value in self.options.items():
            if key not in schema:
                raise ConfigError(f"{key}: unknown option for command {self.command!r}", key)
            full[key] = value
        for (cmd, key), allowed in _CHOICES.items():
            if cmd == self.command and full[key] not in allowed:
                raise ConfigError(f"{key}: expected one of {', '.join(allowed)}, got {full[key]!r}", key)
        if full["grid_points"] < 4:
            raise ConfigError("grid_points: need at least 4 points", "grid_points")
        if not full["x_max"] > 0:
            raise ConfigError("x_max: must be positive", "x_max")
        if self.command == "control" and full["kind"] == "packet" and full["N"] < 2:
            raise ConfigError("N: the smoothing exponent must satisfy N >= 2 so that F'(0) = 0", "N")
        if self.command == "control" and full["kind"] == "packet" and not full["tau"] > 0:
            raise ConfigError("tau: must be positive", "tau")
        object.__setattr__(self, "options", full)

    def __getitem__(self, key):
        return self.options[key]

    @property
    def seed(self) -> int:
        return int(self.options["seed"])

    def replace(self, **changes) -> "ScenarioConfig":
        return ScenarioConfig(self.params, self.command, {**self.options, **changes})

    def to_text(self) -> str:
        items = {"command": self.command, **params_to_mapping(self.params)}
        items.update({k: _fmt(v) for k, v in sorted(self.options.items())})
        return format_key_values(items)

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        try:
            mapping = parse_key_values(text)
        except FormatError as exc:
            raise ConfigError(str(exc), exc.key) from exc
        command = mapping.pop("command", None)
        if command is None:
            raise ConfigError("command: missing", "command")
        schema = option_schema(command)
        try:
            params = params_from_mapping({k: v for k, v in mapping.items() if k in _PARAM_KEYS})
        except FormatError as exc:
            raise ConfigError(str(exc), exc.key) from exc
        options = {}
        for key, raw in mapping.items():
            if key in _PARAM_KEYS:
                continue
            if key not in schema:
                raise ConfigError(f"{key}: unknown key for command {command!r}", key)
            try:
                options[key] = schema[key][0](raw)
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})", key) from None
        return cls(params, command, options)

    def digest(self) -> str:
        """SHA-256 of the canonical text form."""
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.to_text() == other.to_text()

    def __hash__(self):
        return hash(self.to_text())


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}", "config") from exc
    return ScenarioConfig.from_text(text)
