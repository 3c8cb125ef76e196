"""Conservative time integration of the 1D Fokker-Planck equation.

Finite volumes on a cell-centred grid whose faces include every node of the
drift.  Interface fluxes are exponentially fitted (Scharfetter-Gummel /
Chang-Cooper type): the Peclet number of a face is the exact increment of the
drift potential across it, so the discrete operator annihilates the sampled
invariant density, stays an M-matrix, and never lets current through a node
or an outer boundary.  Time stepping is Crank-Nicolson with the step capped so
that the explicit half stays non-negative (positivity is then guaranteed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized
from scipy.special import exprel

from .core import DomainError, GridFunction, VelocityField, make_grid
from .spectral import hat_delta

__all__ = [
    "FPError",
    "FPProblem",
    "FPTrajectory",
    "fp_grid",
    "fp_operator",
    "evolve_fp",
    "chapman_kolmogorov",
    "TabulatedKernel",
    "tabulate_kernel",
    "l1_distance",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


class FPError(RuntimeError):
    """Time integration could not proceed (e.g. the stable step underflowed)."""


def fp_grid(v: VelocityField, x_min: float, x_max: float, n_points: int) -> GridFunction:
    """Cell-centred grid on ``[x_min, x_max]`` with faces at the nodes of ``v``."""
    return make_grid(v.breakpoints(x_min, x_max), n_points)


@dataclass(frozen=True, eq=False)
class FPProblem:
    """Drift, constant diffusion, grid (partitioned at nodes), initial density and output times."""

    velocity: VelocityField
    D: float
    f0: GridFunction
    output_times: Sequence[float]
    t0: float = 0.0
    dt: float | None = None

    def __post_init__(self):
        if not self.D > 0:
            raise DomainError(f"D must be positive, got {self.D!r}")
        if np.any(self.f0.values < 0):
            raise DomainError("initial density must be non-negative")
        ts = np.asarray(self.output_times, float)
        if ts.size == 0 or np.any(ts < self.t0) or np.any(np.diff(ts) < 0):
            raise DomainError("output_times must be non-decreasing and >= t0")

    @property
    def grid(self) -> GridFunction:
        return self.f0


@dataclass(frozen=True, eq=False)
class FPTrajectory:
    times: np.ndarray
    frames: tuple[GridFunction, ...]
    masses: np.ndarray            # (len(times), n_intervals)
    steps: int

    def frame(self, t: float) -> GridFunction:
        k = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[k], t, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"no frame stored at t={t}")
        return self.frames[k]

    def max_mass_drift(self) -> float:
        return float(np.max(np.abs(self.masses - self.masses[0])))


def _face_peclet(v: VelocityField, D: float, xl: np.ndarray, xr: np.ndarray, t: float) -> np.ndarray:
    """Integral of v / D between neighbouring cell centres."""
    if v.potential is not None:
        return (np.asarray(v.potential(xr, t), float) - np.asarray(v.potential(xl, t), float)) / D
    mid, half = 0.5 * (xl + xr), 0.5 * (xr - xl)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = np.asarray(v(pts.ravel(), t), float).reshape(pts.shape)
    return half * (vals @ _GL_W) / D


def _bernoulli(P):
    # B(P) = P / (e^P - 1)
    return 1.0 / exprel(P)


def fp_operator(v: VelocityField, D: float, grid: GridFunction, t: float = 0.0) -> sp.csc_matrix:
    """Sparse generator ``A`` with ``df/dt = A f`` and zero current at every piece end."""
    diag_parts, upper_parts, lower_parts = [], [], []
    for p in grid.pieces:
        n = p.x.size
        h = p.step
        d = np.zeros(n)
        up = np.zeros(max(n - 1, 0))
        lo = np.zeros(max(n - 1, 0))
        if n > 1:
            P = _face_peclet(v, D, p.x[:-1], p.x[1:], t)
            if not np.all(np.isfinite(P)):
                bad = p.x[:-1][~np.isfinite(P)][0]
                raise FPError(f"drift is not integrable near x={bad:.6g} at t={t:.6g}")
            k = D / h**2
            bp, bm = _bernoulli(P), _bernoulli(-P)
            up[:] = k * bp            # f_{i+1} -> df_i
            lo[:] = k * bm            # f_i -> df_{i+1}
            d[:-1] -= k * bm
            d[1:] -= k * bp
        diag_parts.append(d)
        upper_parts.append(np.append(up, 0.0))
        lower_parts.append(np.append(lo, 0.0))
    diag = np.concatenate(diag_parts)
    upper = np.concatenate(upper_parts)[:-1]
    lower = np.concatenate(lower_parts)[:-1]
    return sp.diags([lower, diag, upper], [-1, 0, 1], format="csc")


def _nearest_node(v: VelocityField, x: float) -> str:
    if not v.nodes:
        return "no node"
    k = int(np.argmin(np.abs(np.asarray(v.nodes) - x)))
    return f"node x={v.nodes[k]:.6g}"


def evolve_fp(problem: FPProblem, dt_min: float = 1e-12) -> FPTrajectory:
    """Crank-Nicolson integration from ``problem.f0`` to every output time.

    Coefficients of a time-dependent drift are frozen at each half step.  The
    step is the smaller of ``problem.dt`` and the positivity bound
    ``2 / max|A_ii|``, shortened to land exactly on output times.
    """
    v, D, grid = problem.velocity, problem.D, problem.f0
    w = grid.weights
    sizes = [p.x.size for p in grid.pieces]
    splits = np.cumsum(sizes)[:-1]
    f = grid.values.copy()
    t = problem.t0
    out_t, frames, masses = [], [], []

    def record(time, vals):
        out_t.append(time)
        frames.append(grid.with_values(vals))
        masses.append([float(np.dot(ww, ff)) for ww, ff in zip(np.split(w, splits), np.split(vals, splits))])

    ident = sp.identity(len(grid), format="csc")
    cache: dict = {}
    steps = 0

    def stable_step(A, when):
        amax = float(np.max(np.abs(A.diagonal())))
        bound = 2.0 / amax if amax > 0 else math.inf
        dt = bound if problem.dt is None else min(problem.dt, bound)
        if dt < dt_min:
            worst = grid.x[int(np.argmax(np.abs(A.diagonal())))]
            raise FPError(f"stable step {dt:.3e} underflows near x={worst:.6g} "
                          f"({_nearest_node(v, worst)}) at t={when:.6g}")
        return dt

    A_static = fp_operator(v, D, grid, t) if v.stationary else None
    for t_out in problem.output_times:
        span = float(t_out) - t
        if span > 0:
            A_probe = A_static if v.stationary else fp_operator(v, D, grid, t)
            dt_cap = stable_step(A_probe, t)
            n_sub = max(1, math.ceil(span / dt_cap - 1e-9))
            dt = span / n_sub
            for _ in range(n_sub):
                if v.stationary:
                    A = A_static
                    key = round(dt, 15)
                    if key not in cache:
                        cache.clear()
                        cache[key] = (factorized((ident - 0.5 * dt * A).tocsc()), (ident + 0.5 * dt * A).tocsr())
                    solve, explicit = cache[key]
                else:
                    A = fp_operator(v, D, grid, t + 0.5 * dt)
                    if 2.0 / max(float(np.max(np.abs(A.diagonal()))), 1e-300) < dt * (1 - 1e-9):
                        stable_step(A, t)  # raises if hopeless
                    solve = factorized((ident - 0.5 * dt * A).tocsc())
                    explicit = (ident + 0.5 * dt * A).tocsr()
                f = solve(explicit @ f)
                t += dt
                steps += 1
            t = float(t_out)
        record(t, f.copy())
    return FPTrajectory(np.array(out_t), tuple(frames), np.array(masses), steps)


def l1_distance(f: GridFunction, g: GridFunction) -> float:
    """``int |f - g| dx`` on a common grid."""
    if not f.same_grid(g):
        raise ValueError("l1_distance needs both functions on the same grid")
    return float(np.dot(f.weights, np.abs(f.values - g.values)))


def chapman_kolmogorov(kernel: Callable[[np.ndarray, float], np.ndarray], f0: GridFunction,
                       mass_tol: float = 1e-3) -> GridFunction:
    """``f(x) = int p(x | y) f0(y) dy`` by quadrature on ``f0``'s grid.

    ``kernel(x, y)`` returns the transition density at points ``x`` for a
    scalar source ``y``.  Sources carrying initial mass must have kernel mass
    within ``mass_tol`` of 1.
    """
    x, w = f0.x, f0.weights
    out = np.zeros(len(f0))
    for yj, wj, fj in zip(x, w, f0.values):
        if fj == 0.0:
            continue
        col = np.asarray(kernel(x, float(yj)), float)
        m = float(np.dot(w, col))
        if abs(m - 1.0) > mass_tol:
            raise ValueError(f"kernel mass {m:.6g} at source y={yj:.6g} deviates from 1 by more than {mass_tol}")
        out += wj * fj * col
    return f0.with_values(out)


@dataclass(frozen=True, eq=False)
class TabulatedKernel:
    """Transition density at one elapsed time, tabulated over a coarse set of sources.

    Between sources the density is interpolated linearly in the source
    position; sources on different inter-node intervals are never mixed.
    """

    sources: np.ndarray
    columns: np.ndarray          # (len(sources), len(grid))
    grid: GridFunction
    breakpoints: np.ndarray

    def __call__(self, x, y: float):
        x = np.asarray(x, float)
        seg = np.searchsorted(self.breakpoints, y) - 1
        same = (np.searchsorted(self.breakpoints, self.sources) - 1) == seg
        idx = np.nonzero(same)[0]
        if idx.size == 0:
            raise DomainError(f"no tabulated source on the interval of y={y}")
        s = self.sources[idx]
        cols = self.columns[idx]
        if y <= s[0]:
            col = cols[0]
        elif y >= s[-1]:
            col = cols[-1]
        else:
            j = int(np.searchsorted(s, y) - 1)
            t = (y - s[j]) / (s[j + 1] - s[j])
            col = (1 - t) * cols[j] + t * cols[j + 1]
        return np.interp(x, self.grid.x, col, left=0.0, right=0.0)


def tabulate_kernel(v: VelocityField, D: float, grid: GridFunction, sources, elapsed: float,
                    dt: float | None = None) -> TabulatedKernel:
    """Run :func:`evolve_fp` from a hat impulse at each source for ``elapsed`` time."""
    cols = []
    for y in sources:
        prob = FPProblem(v, D, hat_delta(grid, float(y)), [elapsed], 0.0, dt)
        cols.append(evolve_fp(prob).frames[-1].values)
    return TabulatedKernel(np.asarray(sources, float), np.array(cols), grid, grid.breakpoints)
