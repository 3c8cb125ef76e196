"""Command-line front end.

Each run writes one directory holding ``config.snapshot`` (the canonical
configuration), ``report.json`` (results, pass/fail and the configuration
hash) and plain CSV tables.  Exit codes: 0 success, 1 configuration error,
2 numerical failure, 3 tolerance failure.

Configuration lengths are in units of sigma0 and times in units of 1/omega.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import COMMANDS, ConfigError, ScenarioConfig, option_schema
from .control import ControlError, build_scenario
from .core import DomainError, GridFunction, PhysicalParams, ho_eigenfunction, ho_nodes, ho_velocity
from .fpsolver import FPError, FPProblem, evolve_fp, fp_grid, l1_distance
from .io import FormatError, params_to_mapping, parse_key_values, write_table
from .oracles import gamma_factor, n1_asymptotic, n1_transition, ou_kernel_params, ou_transition
from .sde import histogram_l1, simulate
from .spectral import (
    SpectralError,
    evolve_spectral,
    expand_initial,
    hat_delta,
    ho_decomposition,
    ho_interval_eigenvalues,
    ho_intervals,
)

__all__ = ["main", "run", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERIC", "EXIT_TOLERANCE"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_TOLERANCE = 0, 1, 2, 3

_DEFAULT_PARAMS = {"m": "1", "omega": "1", "hbar": "1"}

_DEFAULT_TOL = {"spectrum": 1e-6, "evolve": 1e-3, "kernel": 1e-3, "control": 1e-4, "simulate": 0.05,
                "compare": 1e-3}


class RunResult:
    """Report payload, tables to write and the overall verdict of a command."""

    def __init__(self):
        self.results: dict = {}
        self.tables: list[tuple[str, str, list]] = []   # (file name, table kind, columns)
        self.texts: dict[str, str] = {}
        self.passed = True

    def check(self, ok: bool):
        self.passed = self.passed and bool(ok)


def _tolerance(cfg: ScenarioConfig, fallback: float | None = None) -> float:
    tol = float(cfg["tolerance"])
    if tol > 0:
        return tol
    return _DEFAULT_TOL[cfg.command] if fallback is None else fallback


def _physical_grid(v, cfg: ScenarioConfig) -> GridFunction:
    s0 = cfg.params.sigma0
    return fp_grid(v, -cfg["x_max"] * s0, cfg["x_max"] * s0, cfg["grid_points"])


def _time_step(cfg: ScenarioConfig) -> float | None:
    dt = float(cfg["dt"])
    return dt / cfg.params.omega if dt > 0 else None


# --------------------------------------------------------------------------
# spectrum
# --------------------------------------------------------------------------


def _parity(g: np.ndarray) -> str:
    return "even" if float(np.dot(g, g[::-1])) > 0 else "odd"


def cmd_spectrum(cfg: ScenarioConfig) -> RunResult:
    out = RunResult()
    p, n = cfg.params, cfg["n"]
    intervals = ho_intervals(n)
    if cfg["interval"] == "all":
        chosen = list(range(len(intervals)))
    else:
        try:
            chosen = [int(cfg["interval"])]
        except ValueError:
            raise ConfigError(f"interval: expected an index or 'all', got {cfg['interval']!r}", "interval") from None
        if not 0 <= chosen[0] < len(intervals):
            raise ConfigError(f"interval: state {n} has {len(intervals)} intervals", "interval")
    parity = None if cfg["parity"] == "any" else cfg["parity"]
    tol = _tolerance(cfg)
    cols = [[], [], [], [], []]
    rows = []
    for idx in chosen:
        lo, hi = intervals[idx]
        if parity is not None and not (math.isfinite(lo) and math.isfinite(hi) and abs(lo + hi) < 1e-12):
            raise ConfigError("parity: only meaningful on a finite interval symmetric about 0", "parity")
        n_solve = cfg["n_eigs"] * (2 if parity else 1) + 2
        dec = ho_decomposition(n, idx, p, n_eigs=n_solve, n_points=cfg["grid_points"],
                               x_cut=cfg["x_cut"], extrapolate=cfg["extrapolate"])
        mu_sl = dec.eigenvalues / p.omega
        if parity is not None:
            keep = [k for k in range(dec.n_eigs) if _parity(dec.eigenfunctions[k]) == parity]
        else:
            keep = list(range(dec.n_eigs))
        keep = keep[: cfg["n_eigs"]]
        mu_sl = mu_sl[keep]
        mu_k = np.array(ho_interval_eigenvalues(n, (lo, hi), len(keep), parity=parity))
        diff = float(np.max(np.abs(mu_sl - mu_k)))
        out.check(diff <= tol)
        a, b = dec.interval
        for k, lam in zip(keep, dec.eigenvalues[keep]):
            for c, val in zip(cols, (idx, a, b, k, lam)):
                c.append(val)
        out.texts[f"decomposition_{idx}.json"] = dec.to_json()
        rows.append({"interval": idx, "nodes_sigma0": [lo, hi], "eigen_index": keep,
                     "mu_sturm_liouville": mu_sl.tolist(), "mu_kummer": mu_k.tolist(),
                     "max_abs_difference": diff, "passed": diff <= tol})
    out.tables.append(("eigenvalues.csv", "eigenvalues", cols))
    out.results = {"state": n, "parity": cfg["parity"], "tolerance": tol, "intervals": rows}
    return out


# --------------------------------------------------------------------------
# evolve / kernel
# --------------------------------------------------------------------------


def _reference_kernel(n: int, x0: float, params: PhysicalParams):
    if n == 0:
        return lambda x, t: ou_transition(x, t, x0, 0.0, params)
    if n == 1:
        return lambda x, t: n1_transition(x, t, x0, 0.0, params)
    return None


def _check_source(n: int, x0: float, params: PhysicalParams, key: str):
    if any(abs(x0 - z) < 1e-12 for z in ho_nodes(n, params)):
        raise ConfigError(f"{key}: source sits on a node of state {n}", key)


def _initial_density(cfg: ScenarioConfig, grid: GridFunction) -> GridFunction:
    p, s0 = cfg.params, cfg.params.sigma0
    kind = cfg["initial"]
    if kind == "delta":
        _check_source(cfg["n"], cfg["x0"] * s0, p, "x0")
        return hat_delta(grid, cfg["x0"] * s0)
    if kind == "asymmetric":
        if not 0.0 <= cfg["q"] <= 2.0:
            raise ConfigError("q: must lie in [0, 2]", "q")
        w = cfg["width"] * s0
        g = np.exp(-0.5 * (grid.x / w) ** 2) * gamma_factor(cfg["q"], grid.x)
        f = grid.with_values(g)
        # each half-line carries exactly q/2 and 1 - q/2
        vals = f.values.copy()
        pos, neg = grid.x > 0, grid.x < 0
        wts = grid.weights
        if vals[pos].any():
            vals[pos] *= (cfg["q"] / 2) / np.dot(wts[pos], vals[pos])
        if vals[neg].any():
            vals[neg] *= (1 - cfg["q"] / 2) / np.dot(wts[neg], vals[neg])
        return grid.with_values(vals)
    f = grid.map(lambda x: ho_eigenfunction(cfg["n"], x, p) ** 2)
    return f.with_values(f.values / f.integral())


def cmd_evolve(cfg: ScenarioConfig) -> RunResult:
    out = RunResult()
    p, n = cfg.params, cfg["n"]
    v = ho_velocity(n, p)
    grid = _physical_grid(v, cfg)
    f0 = _initial_density(cfg, grid)
    times = np.asarray(cfg["output_times"], float) / p.omega
    traj = evolve_fp(FPProblem(v, p.D, f0, list(times), 0.0, _time_step(cfg)))
    tol = _tolerance(cfg)
    ref = None
    if cfg["initial"] == "delta":
        kern = _reference_kernel(n, cfg["x0"] * p.sigma0, p)
        if kern is not None:
            ref = lambda t: grid.map(lambda x: kern(x, t))
        label = "closed-form kernel"
    elif cfg["initial"] == "asymmetric" and n == 1:
        limit = n1_asymptotic(f0, p)
        ref = lambda t: limit
        label = "weighted stationary limit"
    else:
        stat = grid.map(lambda x: ho_eigenfunction(n, x, p) ** 2)
        ref = lambda t: stat
        label = "stationary density"
    frames = []
    cols = [[], [], []]
    for t, fr in zip(traj.times, traj.frames):
        row = {"t_omega": float(t * p.omega), "masses": fr.masses().tolist(), "min": float(fr.values.min())}
        if ref is not None and t > 0:
            row["l1_to_reference"] = l1_distance(fr, ref(t))
        frames.append(row)
        cols[0].append(np.full(len(fr), t))
        cols[1].append(fr.x)
        cols[2].append(fr.values)
    cols = [np.concatenate(c) for c in cols]
    out.tables.append(("trajectory.csv", "trajectory", cols))
    drift = traj.max_mass_drift()
    out.results = {"state": n, "initial": cfg["initial"], "reference": label, "frames": frames,
                   "max_mass_drift": drift, "steps": traj.steps, "tolerance": tol}
    if ref is not None and cfg["initial"] != "stationary":
        out.check(frames[-1].get("l1_to_reference", 0.0) <= tol)
    return out


def cmd_kernel(cfg: ScenarioConfig) -> RunResult:
    out = RunResult()
    p, n = cfg.params, cfg["n"]
    v = ho_velocity(n, p)
    grid = _physical_grid(v, cfg)
    times = np.asarray(cfg["output_times"], float) / p.omega
    tol = _tolerance(cfg, 3e-3 if n == 1 else 1e-3)
    cols = [[], [], [], []]
    rows = []
    for src in cfg["sources"]:
        x0 = src * p.sigma0
        _check_source(n, x0, p, "sources")
        traj = evolve_fp(FPProblem(v, p.D, hat_delta(grid, x0), list(times), 0.0, _time_step(cfg)))
        kern = _reference_kernel(n, x0, p)
        for t, fr in zip(traj.times, traj.frames):
            row = {"x0_sigma0": src, "t_omega": float(t * p.omega)}
            if kern is not None:
                row["l1_to_closed_form"] = l1_distance(fr, grid.map(lambda x: kern(x, t)))
                out.check(row["l1_to_closed_form"] <= tol)
            rows.append(row)
            for c, val in zip(cols, (np.full(len(fr), x0), fr.x, np.full(len(fr), t), fr.values)):
                c.append(val)
    out.tables.append(("kernel.csv", "kernel", [np.concatenate(c) for c in cols]))
    out.results = {"state": n, "tolerance": tol, "rows": rows,
                   "oracle": "closed form" if n in (0, 1) else "none (solver only)"}
    return out


# --------------------------------------------------------------------------
# control
# --------------------------------------------------------------------------


def cmd_control(cfg: ScenarioConfig) -> RunResult:
    out = RunResult()
    p = cfg.params
    kind = cfg["kind"]
    if kind == "n1" and cfg["x0"] == 0:
        raise ConfigError("x0: the source must not sit on the node x = 0", "x0")
    ev = build_scenario(kind, p, x0=cfg["x0"], a=cfg["a"], tau=cfg["tau"], N=cfg["N"])
    s0, om = p.sigma0, p.omega
    span = cfg["x_span"] * s0
    x = np.linspace(-span, span, cfg["grid_points"])
    dt = cfg["frame_dt"] / om
    tol = _tolerance(cfg)
    frames = []
    cols = [[] for _ in range(6)]
    for t_red in cfg["output_times"]:
        t = t_red / om
        if t - dt <= ev.t_min:
            raise ConfigError(f"output_times: t = {t_red} is too close to the start of the evolution", "output_times")
        f = ev.density(x, t)
        vv = ev.velocity(x, t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            S = ev.phase(x, t)
            V = ev.potential(x, t)
        res = ev.residual(x, t, dt)
        agree = ev.agreement(x, t, dt, exclude_radius=cfg["exclude_radius"] * s0)
        excluded = sorted(set(np.round(res.excluded / s0, 12).tolist()))
        near = [float(z / s0) for z in ev.singular_points]
        frames.append({"t_omega": t_red, "residual_max": res.max_abs(), "residual_l2": res.l2(),
                       "relative_agreement": agree, "excluded_x_sigma0": excluded[:50],
                       "n_excluded": len(excluded), "singular_points_sigma0": near})
        out.check(agree <= tol)
        for c, val in zip(cols, (np.full(x.size, t), x, f, vv, S, V)):
            c.append(np.asarray(val, float))
    out.tables.append(("control.csv", "control", [np.concatenate(c) for c in cols]))
    out.results = {"kind": kind, "tolerance": tol, "frames": frames,
                   "exclude_radius_sigma0": cfg["exclude_radius"]}
    return out


# --------------------------------------------------------------------------
# simulate / compare
# --------------------------------------------------------------------------


def _stationary_sampler(n: int, params: PhysicalParams, x_max: float):
    """Inverse-CDF sampler of ``phi_n^2`` on ``|x| <= x_max``; never lands on a node."""
    x = np.linspace(-x_max, x_max, 200001)
    pdf = ho_eigenfunction(n, x, params) ** 2
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    nodes = np.asarray(ho_nodes(n, params))

    def sample(rng, k):
        pts = np.interp(rng.random(k), cdf, x)
        if nodes.size:
            on = np.isin(pts, nodes)
            pts[on] = np.nextafter(pts[on], np.inf)
        return pts

    return sample


def _run_ensemble(cfg: ScenarioConfig, times):
    p, n = cfg.params, cfg["n"]
    v = ho_velocity(n, p)
    if cfg.options.get("initial", "point") == "stationary":
        x0 = _stationary_sampler(n, p, cfg["x_max"] * p.sigma0)
    else:
        x0 = cfg["x0"] * p.sigma0
        _check_source(n, x0, p, "x0")
    if cfg["n_particles"] < 1:
        raise ConfigError("n_particles: must be >= 1", "n_particles")
    if not cfg["dt"] > 0:
        raise ConfigError("dt: must be positive", "dt")
    return simulate(v, p.D, x0, cfg["dt"] / p.omega, cfg["n_particles"], float(times[-1]), seed=cfg.seed,
                    snapshot_times=list(times))


def cmd_simulate(cfg: ScenarioConfig) -> RunResult:
    out = RunResult()
    p, n = cfg.params, cfg["n"]
    times = np.asarray(cfg["snapshot_times"], float) / p.omega
    ens = _run_ensemble(cfg, times)
    tol = _tolerance(cfg)
    s0 = p.sigma0
    rows = []
    cols = [[], [], []]
    for t, xs in zip(ens.times, ens.positions):
        row = {"t_omega": float(t * p.omega), "mean": float(xs.mean()), "variance": float(xs.var(ddof=1))}
        ref = None
        if cfg["initial"] == "stationary":
            ref = lambda y: ho_eigenfunction(n, y, p) ** 2
        elif n in (0, 1) and t > 0:
            kern = _reference_kernel(n, cfg["x0"] * s0, p)
            ref = lambda y, t=t: kern(y, t)
        if n == 0 and cfg["initial"] == "point" and t > 0:
            k = ou_kernel_params(cfg["x0"] * s0, t, 0.0, p)
            m = xs.size
            row["mean_z"] = float((xs.mean() - k.alpha) / math.sqrt(k.sigma2 / m))
            row["variance_z"] = float((xs.var(ddof=1) - k.sigma2) / (k.sigma2 * math.sqrt(2.0 / (m - 1))))
        if ref is not None:
            row["histogram_l1"] = histogram_l1(xs, ref, bins=200, range=(-cfg["x_max"] * s0, cfg["x_max"] * s0))
            out.check(row["histogram_l1"] <= tol)
        rows.append(row)
        cols[0].append(np.full(xs.size, t))
        cols[1].append(np.arange(xs.size))
        cols[2].append(xs)
    out.tables.append(("ensemble.csv", "ensemble", [np.concatenate(c) for c in cols]))
    crossings = ens.crossings()
    out.check(crossings == 0)
    out.results = {"state": n, "n_particles": ens.n_particles, "steps": ens.steps, "snapshots": rows,
                   "node_crossings": crossings, "rejected_moves": ens.rejections, "stuck_moves": ens.stuck,
                   "tolerance": tol}
    return out


_GRID_ENGINES = ("fpsolver", "spectral", "ou_oracle", "n1_oracle")


def _engine_density(name: str, cfg: ScenarioConfig, grid: GridFunction, t: float) -> GridFunction:
    p, n = cfg.params, cfg["n"]
    x0 = cfg["x0"] * p.sigma0
    if name == "ou_oracle":
        if n != 0:
            raise ConfigError("engines: ou_oracle needs n = 0", "engines")
        return grid.map(lambda x: ou_transition(x, t, x0, 0.0, p))
    if name == "n1_oracle":
        if n != 1:
            raise ConfigError("engines: n1_oracle needs n = 1", "engines")
        return grid.map(lambda x: n1_transition(x, t, x0, 0.0, p))
    raise ConfigError(f"engines: unknown engine {name!r}", "engines")


class _Engines:
    """Lazily evaluated densities of each engine at the requested times."""

    def __init__(self, cfg: ScenarioConfig, times):
        self.cfg, self.times = cfg, times
        p, n = cfg.params, cfg["n"]
        self.v = ho_velocity(n, p)
        self.grid = _physical_grid(self.v, cfg)
        self.x0 = cfg["x0"] * p.sigma0
        _check_source(n, self.x0, p, "x0")
        self._cache: dict = {}

    def density(self, name: str, k: int) -> GridFunction:
        if name not in self._cache:
            self._cache[name] = self._run(name)
        return self._cache[name][k]

    def _run(self, name: str):
        cfg, p, n = self.cfg, self.cfg.params, self.cfg["n"]
        if name == "fpsolver":
            traj = evolve_fp(FPProblem(self.v, p.D, hat_delta(self.grid, self.x0), list(self.times), 0.0,
                                       None))
            return list(traj.frames)
        if name == "spectral":
            s0 = p.sigma0
            idx = next(i for i, (lo, hi) in enumerate(ho_intervals(n)) if lo < self.x0 / s0 < hi)
            piece = next(pc for pc in self.grid.pieces if pc.a <= self.x0 <= pc.b)
            n_eigs = min(400, piece.x.size - 1)
            dec = ho_decomposition(n, idx, p, n_eigs=n_eigs, n_points=piece.x.size, x_cut=cfg["x_max"])
            c = expand_initial(hat_delta(dec.grid, self.x0), dec)
            frames = []
            for t in self.times:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    frames.append(evolve_spectral(dec, c, t).resample(self.grid))
            return frames
        if name == "sde":
            return list(_run_ensemble(self.cfg, self.times).positions)
        return [_engine_density(name, cfg, self.grid, t) for t in self.times]


def cmd_compare(cfg: ScenarioConfig) -> RunResult:
    out = RunResult()
    p = cfg.params
    names = [s.strip() for s in cfg["engines"].split(",") if s.strip()]
    allowed = _GRID_ENGINES + ("sde",)
    if len(names) != 2 or any(nm not in allowed for nm in names) or names[0] == names[1]:
        raise ConfigError(f"engines: expected two distinct names from {', '.join(allowed)}, got {cfg['engines']!r}",
                          "engines")
    uses_sde = "sde" in names
    tol = _tolerance(cfg, 0.05 if uses_sde else 1e-3)
    times = np.asarray(cfg["output_times"], float) / p.omega
    if np.any(times <= 0):
        raise ConfigError("output_times: must be positive", "output_times")
    eng = _Engines(cfg, times)
    rows, cols = [], [[], [], [], []]
    for k, t in enumerate(times):
        if uses_sde:
            other = names[1] if names[0] == "sde" else names[0]
            ref = eng.density(other, k)
            d = histogram_l1(eng.density("sde", k), ref, bins=cfg["bins"],
                             range=(float(eng.grid.breakpoints[0]), float(eng.grid.breakpoints[-1])))
        else:
            d = l1_distance(eng.density(names[0], k), eng.density(names[1], k))
        ok = d <= tol
        out.check(ok)
        rows.append({"t_omega": float(t * p.omega), "l1": d, "passed": bool(ok)})
        for c, val in zip(cols, (t, d, tol, float(ok))):
            c.append(val)
    out.tables.append(("compare.csv", "compare", cols))
    out.results = {"engines": names, "state": cfg["n"], "tolerance": tol, "rows": rows}
    return out


_COMMAND_FUNCS = {
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
    "kernel": cmd_kernel,
    "control": cmd_control,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


# --------------------------------------------------------------------------
# orchestration
# --------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run(cfg: ScenarioConfig, out_dir) -> tuple[int, dict]:
    """Execute ``cfg`` and write its run directory; returns ``(exit_code, report)``."""
    out_dir = Path(out_dir)
    result = _COMMAND_FUNCS[cfg.command](cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.snapshot").write_text(cfg.to_text())
    files = ["config.snapshot"]
    for name, kind, cols in result.tables:
        write_table(out_dir / name, kind, cols)
        files.append(name)
    for name, text in result.texts.items():
        (out_dir / name).write_text(text)
        files.append(name)
    report = {
        "command": cfg.command,
        "config_hash": cfg.digest(),
        "params": params_to_mapping(cfg.params),
        "seed": cfg.seed,
        "passed": result.passed,
        "results": result.results,
        "files": files + ["report.json"],
    }
    report = _jsonable(report)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return (EXIT_OK if result.passed else EXIT_TOLERANCE), report


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", help="run directory (default: runs/<command>-<hash>)")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    common.add_argument("--grid-points", type=int, dest="grid_points")
    common.add_argument("--x-max", type=float, dest="x_max", help="half-width of the domain in sigma0")
    common.add_argument("--tolerance", type=float)
    parser = argparse.ArgumentParser(prog="nelsonfp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run the {name} scenario")
    return parser


def _load(args) -> ScenarioConfig:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc.strerror}", "config") from None
    else:
        text = ""
    try:
        mapping = parse_key_values(text)
    except FormatError as exc:
        raise ConfigError(str(exc), exc.key) from exc
    if "command" in mapping and mapping["command"] != args.command:
        raise ConfigError(f"command: config is for {mapping['command']!r}, not {args.command!r}", "command")
    if not any(k in mapping for k in ("m", "hbar", "emittance")):
        mapping = {**_DEFAULT_PARAMS, **mapping}
    mapping["command"] = args.command
    cfg = ScenarioConfig.from_text("".join(f"{k} = {v}\n" for k, v in mapping.items()))
    overrides = {k: getattr(args, k) for k in ("seed", "grid_points", "x_max", "tolerance")
                 if getattr(args, k) is not None}
    if "seed" in overrides and not 0 <= overrides["seed"] < 2**64:
        raise ConfigError("seed: must be an unsigned 64-bit integer", "seed")
    option_schema(args.command)
    return cfg.replace(**overrides) if overrides else cfg


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load(args)
        out_dir = args.out or Path("runs") / f"{cfg.command}-{cfg.digest()[:10]}"
        code, report = run(cfg, out_dir)
    except (ConfigError, FormatError, DomainError) as exc:
        key = getattr(exc, "key", None)
        print(f"configuration error{f' [{key}]' if key else ''}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FPError, SpectralError, ControlError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    status = "passed" if code == EXIT_OK else "FAILED tolerance"
    print(f"{cfg.command}: {status}; results in {out_dir}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
