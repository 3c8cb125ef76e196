"""Plain-text formats: parameter files, grid functions and the run tables.

Every writer has a reader that returns the same numbers (floats are written
with 17 significant digits, so round trips are exact).
"""
from __future__ import annotations

import io as _io
from pathlib import Path

import numpy as np

from .core import DomainError, GridFunction, Piece, PhysicalParams, derive_params

__all__ = [
    "FormatError",
    "parse_key_values",
    "format_key_values",
    "params_from_mapping",
    "params_to_mapping",
    "read_params",
    "write_params",
    "gridfunction_to_csv",
    "gridfunction_from_csv",
    "write_table",
    "read_table",
    "TABLE_COLUMNS",
]

_FMT = "%.17g"

# column layouts of the run tables
TABLE_COLUMNS = {
    "trajectory": ("t", "x", "f"),
    "kernel": ("x0", "x", "t", "p"),
    "control": ("t", "x", "f", "v", "S", "V"),
    "ensemble": ("t", "particle_id", "x"),
    "eigenvalues": ("interval", "a", "b", "k", "eigenvalue"),
    "compare": ("t", "l1", "tolerance", "passed"),
}


class FormatError(ValueError):
    """A file does not follow the expected layout; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


# --------------------------------------------------------------------------
# key = value text
# --------------------------------------------------------------------------


def parse_key_values(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; keys may not repeat."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            key = line.split()[0]
            raise FormatError(f"line {lineno}: expected 'key = value' for key {key!r}", key)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(f"line {lineno}: empty key", "")
        if key in out:
            raise FormatError(f"line {lineno}: duplicate key {key!r}", key)
        out[key] = value
    return out


def format_key_values(items: dict[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())


_PARAM_KEYS = ("m", "omega", "hbar", "emittance", "mode")


def _number(mapping, key):
    try:
        return float(mapping[key])
    except ValueError:
        raise FormatError(f"{key}: not a number: {mapping[key]!r}", key) from None


def params_from_mapping(mapping: dict[str, str]) -> PhysicalParams:
    """Physical parameters from the keys ``m, omega, hbar | emittance, mode``."""
    mode = mapping.get("mode", "quantum").strip()
    if mode not in ("quantum", "beam"):
        raise FormatError(f"mode: expected 'quantum' or 'beam', got {mode!r}", "mode")
    if "hbar" in mapping and "emittance" in mapping:
        raise FormatError("hbar and emittance are mutually exclusive", "emittance")
    required = ("m", "hbar") if mode == "quantum" else ("emittance",)
    if mode == "beam" and "hbar" in mapping and "emittance" not in mapping:
        required = ("hbar",)
    for key in required:
        if key not in mapping:
            raise FormatError(f"{key}: required in {mode} mode", key)
    if mode == "quantum" and "emittance" in mapping:
        raise FormatError("emittance: only accepted in beam mode", "emittance")
    kw = {}
    for key in ("m", "omega", "hbar", "emittance"):
        if key in mapping:
            kw[key] = _number(mapping, key)
            if not (np.isfinite(kw[key]) and kw[key] > 0):
                raise FormatError(f"{key}: must be a positive number, got {mapping[key]!r}", key)
    try:
        return derive_params(kw.get("m"), kw.get("omega", 1.0), kw.get("hbar"),
                             emittance=kw.get("emittance"), mode=mode)
    except DomainError as exc:
        raise FormatError(f"m: {exc}", "m") from exc


def params_to_mapping(params: PhysicalParams) -> dict[str, str]:
    if params.mode == "beam":
        return {"omega": repr(params.omega), "emittance": repr(params.hbar), "mode": "beam"}
    return {"m": repr(params.mass), "omega": repr(params.omega), "hbar": repr(params.hbar), "mode": "quantum"}


def read_params(path) -> PhysicalParams:
    mapping = parse_key_values(Path(path).read_text())
    unknown = sorted(set(mapping) - set(_PARAM_KEYS))
    if unknown:
        raise FormatError(f"unknown parameter key {unknown[0]!r}", unknown[0])
    return params_from_mapping(mapping)


def write_params(params: PhysicalParams, path) -> None:
    Path(path).write_text(format_key_values(params_to_mapping(params)))


# --------------------------------------------------------------------------
# grid functions
# --------------------------------------------------------------------------


def gridfunction_to_csv(gf: GridFunction) -> str:
    """One ``x,value`` block per interval, blocks separated by a blank line.

    Interval ends are implied by the cell-centred layout (half a step beyond
    the outermost samples), so every interval needs at least two samples.
    """
    blocks = []
    for p in gf.pieces:
        buf = _io.StringIO()
        np.savetxt(buf, np.column_stack([p.x, p.values]), delimiter=",", fmt=_FMT,
                   header="x,value", comments="")
        blocks.append(buf.getvalue())
    return "\n".join(blocks)


def gridfunction_from_csv(text: str) -> GridFunction:
    pieces = []
    for block in (b for b in text.split("\n\n") if b.strip()):
        lines = [ln for ln in block.strip().splitlines() if ln.strip()]
        if lines[0].replace(" ", "") != "x,value":
            raise FormatError(f"expected header 'x,value', got {lines[0]!r}", "header")
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        if data.shape[0] < 2 or data.shape[1] != 2:
            raise FormatError("each interval needs at least two 'x,value' rows", "x")
        x, v = data[:, 0], data[:, 1]
        h = (x[-1] - x[0]) / (x.size - 1)
        pieces.append(Piece(float(x[0] - h / 2), float(x[-1] + h / 2), x, v, np.full_like(x, h)))
    if not pieces:
        raise FormatError("no grid-function data", "x")
    return GridFunction(tuple(pieces))


# --------------------------------------------------------------------------
# run tables
# --------------------------------------------------------------------------


def write_table(path, kind: str, columns) -> None:
    """Write equal-length ``columns`` under the header of table ``kind``."""
    names = TABLE_COLUMNS[kind]
    cols = [np.asarray(c, float).ravel() for c in columns]
    if len(cols) != len(names) or len({c.size for c in cols}) > 1:
        raise ValueError(f"{kind} table needs {len(names)} equal-length columns {names}")
    np.savetxt(path, np.column_stack(cols) if cols[0].size else np.zeros((0, len(names))),
               delimiter=",", fmt=_FMT, header=",".join(names), comments="")


def read_table(path, kind: str) -> dict[str, np.ndarray]:
    """Columns of a table written by :func:`write_table`, checked against its header."""
    names = TABLE_COLUMNS[kind]
    with open(path) as fh:
        header = fh.readline().strip()
        if header.replace(" ", "").split(",") != list(names):
            raise FormatError(f"{path}: expected header {','.join(names)}, got {header!r}", "header")
        body = fh.read()
    if not body.strip():
        return {n: np.zeros(0) for n in names}
    data = np.loadtxt(_io.StringIO(body), delimiter=",", ndmin=2)
    return {n: data[:, k] for k, n in enumerate(names)}
