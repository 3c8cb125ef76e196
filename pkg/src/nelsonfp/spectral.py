"""Eigen-expansion of stationary Fokker-Planck evolutions.

With ``f = sqrt(h) g`` the Fokker-Planck operator of a stationary drift
becomes the self-adjoint operator ``(D g')' - q g`` on each inter-node
interval.  This module builds that operator, solves its Sturm-Liouville
problem on a cell-centred grid (symmetric tridiagonal matrix, bisection and
inverse iteration), expands initial data and evolves it in time.  For the
oscillator drifts the eigenvalues are also available as roots of Kummer-function
boundary conditions, which gives an independent route to the same numbers.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.linalg import LinAlgError, eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import rgamma

from .core import (
    UNIT_PARAMS,
    DomainError,
    GridFunction,
    Piece,
    PhysicalParams,
    VelocityField,
    ho_velocity,
    make_grid,
)
from .kummer import confluent_M

__all__ = [
    "SpectralError",
    "SelfAdjointOperator",
    "SpectralDecomposition",
    "invariant_density",
    "self_adjoint_coeffs",
    "solve_sturm_liouville",
    "expand_initial",
    "evolve_spectral",
    "hat_delta",
    "ho_interval_eigenvalues",
    "ho_decomposition",
    "ho_intervals",
]


class SpectralError(RuntimeError):
    """The eigen-solver or root finder could not produce the requested values."""


def _interval_grid(interval, n_points) -> GridFunction:
    a, b = interval
    if not (np.isfinite(a) and np.isfinite(b)):
        raise DomainError("interval must be finite here; truncate unbounded ends first")
    return make_grid([a, b], [int(n_points)])


def _truncate(interval, x_cut):
    a, b = float(interval[0]), float(interval[1])
    if not np.isfinite(a):
        if x_cut is None:
            raise DomainError("unbounded interval needs a truncation radius x_cut")
        a = -abs(x_cut)
    if not np.isfinite(b):
        if x_cut is None:
            raise DomainError("unbounded interval needs a truncation radius x_cut")
        b = abs(x_cut)
    if not a < b:
        raise DomainError(f"empty interval after truncation: [{a}, {b}]")
    return a, b


def invariant_density(v: VelocityField, D: float, interval, n_points: int = 2000,
                      x_cut: float | None = None, grid: GridFunction | None = None) -> GridFunction:
    """Zero-flux stationary density ``h ~ exp(int v / D)`` normalised to mass 1 on ``interval``.

    Uses the drift potential ``W`` when the field carries one, otherwise a
    cumulative Simpson integral of ``v / D`` on the grid.
    """
    if grid is None:
        grid = _interval_grid(_truncate(interval, x_cut), n_points)
    x = grid.x
    if v.potential is not None:
        logh = np.asarray(v.potential(x, 0.0), float) / D
    else:
        logh = cumulative_simpson(np.asarray(v(x), float) / D, x=x, initial=0.0)
    logh = logh - np.max(logh)
    h = np.exp(logh)
    h /= np.dot(grid.weights, h)
    w = grid.weights
    # mass piling into an end cell signals a non-integrable endpoint singularity
    for end in (0, -1):
        if w[end] * h[end] > 0.25:
            warnings.warn(
                f"invariant density concentrates {w[end] * h[end]:.2f} of its mass in the "
                f"end cell at x={x[end]:.4g}; the drift is likely non-integrable there",
                RuntimeWarning, stacklevel=2)
    return grid.with_values(h)


@dataclass(frozen=True, eq=False)
class SelfAdjointOperator:
    """``L g = (D g')' - q g`` on ``[a, b]`` with per-end boundary conditions.

    ``left`` / ``right`` are ``("dirichlet", 0.0)`` at nodes and truncation
    cut-offs, or ``("flux", v_end)`` for the zero-current condition
    ``2 D g' - v g = 0`` at an ordinary finite end.
    """

    a: float
    b: float
    D: float
    q: callable
    left: tuple
    right: tuple
    velocity: VelocityField | None = None

    def q_values(self, x):
        return np.asarray(self.q(np.asarray(x, float)), float)


def self_adjoint_coeffs(v: VelocityField, D: float, interval, x_cut: float | None = None) -> SelfAdjointOperator:
    """Self-adjoint form of the stationary Fokker-Planck operator for constant ``D``.

    ``q = v^2 / (4 D) + v' / 2``.  Ends that are nodes of ``v`` or infinite get
    Dirichlet conditions (the latter after truncation at ``x_cut``).
    """
    if not D > 0:
        raise DomainError(f"D must be positive, got {D!r}")
    raw_a, raw_b = float(interval[0]), float(interval[1])
    a, b = _truncate(interval, x_cut)
    nodes = np.asarray(v.nodes, float)

    def end_condition(raw, end):
        if not np.isfinite(raw):
            return ("dirichlet", 0.0)
        if nodes.size and np.min(np.abs(nodes - raw)) <= 1e-12 * max(1.0, abs(raw)):
            return ("dirichlet", 0.0)
        return ("flux", float(v(np.array([end]))[0]))

    def q(x):
        vv = np.asarray(v(x), float)
        return vv**2 / (4.0 * D) + 0.5 * np.asarray(v.derivative(x), float)

    return SelfAdjointOperator(a, b, float(D), q, end_condition(raw_a, a), end_condition(raw_b, b), v)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs of one interval plus the invariant density they imply.

    ``eigenfunctions[n]`` holds ``G_n`` on ``grid``; they are orthonormal under
    the grid weights.  ``h`` is the discrete invariant density ``G_0^2``.
    """

    interval: tuple[float, float]
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    grid: GridFunction
    h: GridFunction
    mass: float = 1.0
    extrapolated: bool = False

    def G(self, n: int) -> GridFunction:
        return self.grid.with_values(self.eigenfunctions[n])

    @property
    def n_eigs(self) -> int:
        return int(self.eigenvalues.size)

    def sign_changes(self, n: int, rel_tol: float = 1e-8) -> int:
        g = self.eigenfunctions[n]
        g = g[np.abs(g) > rel_tol * np.max(np.abs(g))]
        return int(np.count_nonzero(np.diff(np.sign(g)) != 0))

    def to_json(self) -> str:
        return json.dumps({
            "interval": [float(self.interval[0]), float(self.interval[1])],
            "eigenvalues": self.eigenvalues.tolist(),
            "mass": self.mass,
            "grid": self.grid.x.tolist(),
            "eigenfunctions": self.eigenfunctions.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "SpectralDecomposition":
        data = json.loads(text)
        x = np.asarray(data["grid"], float)
        a, b = data["interval"]
        h = (b - a) / x.size
        grid = GridFunction((Piece(a, b, x, np.zeros_like(x), np.full_like(x, h)),))
        G = np.asarray(data["eigenfunctions"], float)
        g0 = G[0] ** 2
        return cls((a, b), np.asarray(data["eigenvalues"], float), G, grid,
                   grid.with_values(g0 / np.dot(grid.weights, g0)), float(data["mass"]))


def _tridiagonal(op: SelfAdjointOperator, n_points: int):
    grid = _interval_grid((op.a, op.b), n_points)
    x = grid.x
    h = (op.b - op.a) / x.size
    D = op.D
    k = D / h**2
    diag = 2.0 * k + op.q_values(x)
    off = np.full(x.size - 1, -k)
    # ghost-point closures at the faces x = a, x = b
    kind, va = op.left
    if kind == "dirichlet":
        diag[0] += k
    else:
        diag[0] -= k * (2 * D / h - va / 2) / (2 * D / h + va / 2)
    kind, vb = op.right
    if kind == "dirichlet":
        diag[-1] += k
    else:
        diag[-1] -= k * (2 * D / h + vb / 2) / (2 * D / h - vb / 2)
    return grid, diag, off


def _solve_once(op, n_eigs, n_points):
    grid, diag, off = _tridiagonal(op, n_points)
    if n_eigs > diag.size:
        raise SpectralError(f"asked for {n_eigs} eigenpairs on a {diag.size}-point grid")
    try:
        lam, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_eigs - 1),
                                     lapack_driver="stebz")
    except (LinAlgError, ValueError) as exc:
        raise SpectralError(
            f"bisection/inverse iteration failed on [{op.a}, {op.b}] with {diag.size} points: "
            f"diag range [{diag.min():.3e}, {diag.max():.3e}]") from exc
    w = grid.weights
    G = (vecs / np.sqrt(w)[:, None]).T
    for n in range(G.shape[0]):
        g = G[n]
        first = np.argmax(np.abs(g) > 1e-3 * np.max(np.abs(g)))
        if g[first] < 0:
            G[n] = -g
    return grid, lam, G


def solve_sturm_liouville(op: SelfAdjointOperator, n_eigs: int, n_points: int = 2000,
                          extrapolate: bool = False) -> SpectralDecomposition:
    """Lowest ``n_eigs`` eigenpairs of ``-L G = lambda G`` on a cell-centred grid.

    The discrete operator is the standard 3-point symmetric stencil, so its
    eigenvalues are real and ascending and the eigenvectors orthonormal.  With
    ``extrapolate`` the eigenvalues from ``n_points`` and ``2 * n_points`` are
    Richardson-combined (error ``O(h^4)``); eigenfunctions come from the finer
    grid.
    """
    if n_eigs < 1:
        raise DomainError("n_eigs must be >= 1")
    grid, lam, G = _solve_once(op, n_eigs, n_points)
    if extrapolate:
        grid, lam_fine, G = _solve_once(op, n_eigs, 2 * n_points)
        lam = (4.0 * lam_fine - lam) / 3.0
    g0 = G[0] ** 2
    h = grid.with_values(g0 / np.dot(grid.weights, g0))
    return SpectralDecomposition((op.a, op.b), np.asarray(lam), G, grid, h, 1.0, extrapolate)


def hat_delta(grid: GridFunction, x0: float) -> GridFunction:
    """Unit-mass impulse at ``x0``: linear hat spread over the two nearest cells."""
    vals = np.zeros(len(grid))
    for p_start, p in zip(np.cumsum([0] + [q.x.size for q in grid.pieces[:-1]]), grid.pieces):
        if p.a <= x0 <= p.b:
            xs = p.x
            j = int(np.clip(np.searchsorted(xs, x0) - 1, 0, max(xs.size - 2, 0)))
            if xs.size == 1 or x0 <= xs[0]:
                vals[p_start] = 1.0 / p.weights[0]
            elif x0 >= xs[-1]:
                vals[p_start + xs.size - 1] = 1.0 / p.weights[-1]
            else:
                t = (x0 - xs[j]) / (xs[j + 1] - xs[j])
                vals[p_start + j] = (1.0 - t) / p.weights[j]
                vals[p_start + j + 1] = t / p.weights[j + 1]
            return grid.with_values(vals)
    raise DomainError(f"x0={x0} lies outside the grid")


def _piece_for(f0: GridFunction, dec: SpectralDecomposition) -> np.ndarray:
    if len(f0.pieces) == 1 and f0.pieces[0].x.size == dec.grid.x.size:
        return f0.pieces[0].values
    for p in f0.pieces:
        if p.x.size == dec.grid.x.size and np.allclose(p.x, dec.grid.x):
            return p.values
    raise ValueError("initial data has no piece on the decomposition's grid; resample first")


def expand_initial(f0: GridFunction, dec: SpectralDecomposition) -> np.ndarray:
    """Coefficients ``c_n = int f0 G_n / sqrt(h)``."""
    values = _piece_for(f0, dec)
    w = dec.grid.weights
    sqrt_h = np.sqrt(dec.h.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sqrt_h > 0, values / sqrt_h, 0.0)
    return dec.eigenfunctions @ (w * ratio)


def evolve_spectral(dec: SpectralDecomposition, c, t: float, neg_tol: float = 1e-8) -> GridFunction:
    """``f(x, t) = sqrt(h) sum_n c_n exp(-lambda_n t) G_n``.

    Warns when the truncated series dips below ``-neg_tol`` (relative to its
    maximum).
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    c = np.asarray(c, float)
    lam = dec.eigenvalues[: c.size]
    amp = c * np.exp(-np.maximum(lam, 0.0) * t)
    f = np.sqrt(dec.h.values) * (amp @ dec.eigenfunctions[: c.size])
    fmax = np.max(np.abs(f))
    if fmax > 0 and f.min() < -neg_tol * fmax:
        warnings.warn(f"truncated spectral series is negative (min {f.min():.3e}) at t={t}",
                      RuntimeWarning, stacklevel=2)
    return dec.grid.with_values(f)


# --------------------------------------------------------------------------
# harmonic-oscillator intervals
# --------------------------------------------------------------------------


def ho_intervals(n: int) -> list[tuple[float, float]]:
    """Inter-node intervals of the ``n``-th oscillator drift in units of sigma0."""
    from .core import ho_nodes

    nodes = list(ho_nodes(n, UNIT_PARAMS))
    ends = [-math.inf] + nodes + [math.inf]
    return list(zip(ends[:-1], ends[1:]))


def _kummer_pair(n: int, mu: float, x: float):
    """Even/odd solutions of the reduced eigen-equation without the common Gaussian factor."""
    z = 0.5 * x * x
    y1 = confluent_M(-(mu + n) / 2.0, 0.5, z)
    y2 = x * confluent_M(-(mu + n - 1) / 2.0, 1.5, z)
    return y1, y2


def _decay_coeffs(n: int, mu: float):
    """(A, B) with ``A y1 + B y2`` decaying as ``x -> +inf`` (Tricomi U combination)."""
    a1 = -(mu + n) / 2.0
    A = math.sqrt(math.pi) * rgamma(a1 + 0.5)
    B = -math.sqrt(2.0 * math.pi) * rgamma(a1)
    return A, B


def _condition(n: int, interval, parity: str | None):
    xa, xb = interval
    fin_a, fin_b = np.isfinite(xa), np.isfinite(xb)
    if parity is not None:
        if not (fin_a and fin_b and abs(xa + xb) < 1e-12):
            raise DomainError("parity selection needs a finite interval symmetric about 0")
        c = xb
        if parity == "even":
            return lambda mu: confluent_M(-(mu + n) / 2.0, 0.5, 0.5 * c * c)
        if parity == "odd":
            return lambda mu: confluent_M(-(mu + n - 1) / 2.0, 1.5, 0.5 * c * c)
        raise DomainError(f"parity must be 'even' or 'odd', got {parity!r}")
    if fin_a and fin_b:
        def cond(mu):
            y1a, y2a = _kummer_pair(n, mu, xa)
            y1b, y2b = _kummer_pair(n, mu, xb)
            return y1a * y2b - y1b * y2a
    elif fin_a:
        def cond(mu):
            A, B = _decay_coeffs(n, mu)
            y1, y2 = _kummer_pair(n, mu, xa)
            return (A * y1 + B * y2) / math.hypot(A, B)
    elif fin_b:
        def cond(mu):
            A, B = _decay_coeffs(n, mu)
            y1, y2 = _kummer_pair(n, mu, xb)
            return (A * y1 - B * y2) / math.hypot(A, B)
    else:
        def cond(mu):
            A, B = _decay_coeffs(n, mu)
            return A * B / (A * A + B * B)
    return cond


def ho_interval_eigenvalues(n: int, node_interval, count: int, parity: str | None = None,
                            step: float = 0.05, mu_max: float = 1e4, xtol: float = 1e-12) -> list[float]:
    """Ascending reduced eigenvalues ``mu = lambda / omega`` on one inter-node interval.

    ``node_interval`` is in units of sigma0 (``-inf``/``inf`` allowed).  The
    boundary conditions are imposed on the Kummer-function solutions: vanishing
    at finite nodes and decay at infinite ends.  ``parity`` restricts a
    symmetric interval to even or odd eigenfunctions.  The list starts at
    ``mu_0 = 0`` whenever that value belongs to the selected family.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    cond = _condition(int(n), node_interval, parity)
    roots: list[float] = []
    trace = []
    mu_lo = -0.5 + step / 3.0
    f_lo = cond(mu_lo)
    while len(roots) < count:
        mu_hi = mu_lo + step
        if mu_hi > mu_max:
            raise SpectralError(f"only {len(roots)} of {count} eigenvalues below mu={mu_max}; "
                                f"last brackets: {trace[-3:]}")
        f_hi = cond(mu_hi)
        if f_lo == 0.0:
            roots.append(mu_lo)
        elif f_lo * f_hi < 0:
            try:
                root = brentq(cond, mu_lo, mu_hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
            except (RuntimeError, ValueError) as exc:
                raise SpectralError(f"root refinement failed in [{mu_lo}, {mu_hi}]") from exc
            roots.append(root)
            trace.append((mu_lo, mu_hi))
        mu_lo, f_lo = mu_hi, f_hi
    roots = roots[:count]
    # mu_0 = 0 is exact; snap the solver noise
    return [0.0 if abs(r) < 1e-9 else float(r) for r in roots]


def ho_decomposition(n: int, interval_index: int, params: PhysicalParams, n_eigs: int = 40,
                     n_points: int = 2000, x_cut: float = 12.0, extrapolate: bool = False) -> SpectralDecomposition:
    """Decomposition of the ``n``-th oscillator drift on one inter-node interval.

    The solve runs in reduced variables (``x / sigma0``, ``omega t``); grid,
    eigenvalues and eigenfunctions are returned in physical units.  ``x_cut``
    is the truncation radius in units of sigma0.
    """
    intervals = ho_intervals(n)
    if not 0 <= interval_index < len(intervals):
        raise DomainError(f"state {n} has {len(intervals)} intervals, no index {interval_index}")
    v = ho_velocity(n, UNIT_PARAMS)
    op = self_adjoint_coeffs(v, UNIT_PARAMS.D, intervals[interval_index], x_cut=x_cut)
    red = solve_sturm_liouville(op, n_eigs, n_points, extrapolate)
    s0, om = params.sigma0, params.omega
    pieces = []
    for p in red.grid.pieces:
        pieces.append(Piece(p.a * s0, p.b * s0, p.x * s0, p.values.copy(), p.weights * s0))
    grid = GridFunction(tuple(pieces))
    G = red.eigenfunctions / math.sqrt(s0)
    h = grid.with_values(red.h.values / s0)
    return SpectralDecomposition((red.interval[0] * s0, red.interval[1] * s0), red.eigenvalues * om,
                                 G, grid, h, 1.0, extrapolate)
