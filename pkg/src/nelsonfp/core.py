"""Units, grids, harmonic-oscillator closed forms and the Hamilton-Jacobi-Madelung check.

Everything here is a pure function or an immutable container.  Positions and
times are physical; the harmonic-oscillator helpers reduce to ``x / sigma0``
internally so their accuracy does not depend on the unit system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "PhysicalParams",
    "derive_params",
    "UNIT_PARAMS",
    "Piece",
    "GridFunction",
    "make_grid",
    "VelocityField",
    "QuantumStateFV",
    "ho_eigenfunction",
    "ho_log_abs_eigenfunction",
    "ho_energy",
    "ho_nodes",
    "ho_velocity",
    "ho_potential",
    "linear_velocity",
    "velocity_from_state",
    "Residual",
    "hjm_residual",
    "d1",
    "d2",
]


class DomainError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


# --------------------------------------------------------------------------
# physical parameters
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PhysicalParams:
    """Mass, angular frequency and the action unit of a computation.

    In ``"beam"`` mode the action unit is the transverse emittance and the mass
    is fixed to 1, so that ``D = emittance / 2``.
    """

    mass: float
    omega: float
    hbar: float
    mode: str = "quantum"

    def __post_init__(self):
        for name in ("mass", "omega", "hbar"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                label = "emittance" if (name == "hbar" and self.mode == "beam") else name
                raise DomainError(f"{label} must be strictly positive, got {value!r}")
        if self.mode not in ("quantum", "beam"):
            raise DomainError(f"mode must be 'quantum' or 'beam', got {self.mode!r}")
        if self.mode == "beam" and self.mass != 1.0:
            raise DomainError("beam mode requires mass == 1")

    @property
    def D(self) -> float:
        return self.hbar / (2.0 * self.mass)

    @property
    def sigma0(self) -> float:
        return math.sqrt(self.D / self.omega)

    @property
    def emittance(self) -> float:
        if self.mode != "beam":
            raise AttributeError("emittance is only defined in beam mode")
        return self.hbar

    def energy_unit(self) -> float:
        return self.hbar * self.omega

    def to_dict(self) -> dict:
        out = {"m": self.mass, "omega": self.omega, "mode": self.mode}
        out["emittance" if self.mode == "beam" else "hbar"] = self.hbar
        return out


def derive_params(m=None, omega=1.0, hbar=None, *, emittance=None, mode="quantum"):
    """Build :class:`PhysicalParams` from user-facing quantities.

    Examples
    --------
    >>> p = derive_params(1.0, 1.0, 1.0)
    >>> p.D, p.sigma0 ** 2
    (0.5, 0.5)
    >>> derive_params(omega=1.0, emittance=1e-6, mode="beam").D
    5e-07
    """
    if mode == "quantum":
        if m is None or hbar is None:
            raise DomainError("quantum mode needs m and hbar")
        if emittance is not None:
            raise DomainError("emittance is only accepted in beam mode")
        return PhysicalParams(float(m), float(omega), float(hbar), "quantum")
    if mode == "beam":
        eps = emittance if emittance is not None else hbar
        if eps is None:
            raise DomainError("beam mode needs an emittance")
        if m not in (None, 1, 1.0):
            raise DomainError("beam mode fixes m = 1")
        return PhysicalParams(1.0, float(omega), float(eps), "beam")
    raise DomainError(f"mode must be 'quantum' or 'beam', got {mode!r}")


#: Parameters in which physical and reduced variables coincide
#: (sigma0 = 1, omega = 1, D = 1, hbar = 1).
UNIT_PARAMS = PhysicalParams(mass=0.5, omega=1.0, hbar=1.0)


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Piece:
    """Samples of a function on one interval ``[a, b]`` of a partition."""

    a: float
    b: float
    x: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.x.shape != self.values.shape or self.x.shape != self.weights.shape:
            raise ValueError("x, values and weights must have identical shapes")
        if self.x.size > 1 and np.any(np.diff(self.x) <= 0):
            raise ValueError("grid must be strictly increasing")

    @property
    def step(self) -> float:
        return float(self.x[1] - self.x[0]) if self.x.size > 1 else float(self.b - self.a)

    def mass(self) -> float:
        return float(np.dot(self.weights, self.values))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A real function sampled on a partition of the line into intervals."""

    pieces: tuple[Piece, ...]

    @classmethod
    def from_arrays(cls, breakpoints, x_list, values_list, weights_list):
        pieces = []
        for k, (x, v, w) in enumerate(zip(x_list, values_list, weights_list)):
            pieces.append(Piece(float(breakpoints[k]), float(breakpoints[k + 1]),
                                np.asarray(x, float), np.asarray(v, float), np.asarray(w, float)))
        return cls(tuple(pieces))

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([p.x for p in self.pieces])

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([p.values for p in self.pieces])

    @property
    def weights(self) -> np.ndarray:
        return np.concatenate([p.weights for p in self.pieces])

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([self.pieces[0].a] + [p.b for p in self.pieces])

    def __len__(self):
        return sum(p.x.size for p in self.pieces)

    def masses(self) -> np.ndarray:
        return np.array([p.mass() for p in self.pieces])

    def integral(self) -> float:
        return float(self.masses().sum())

    def with_values(self, values) -> "GridFunction":
        values = np.asarray(values, float)
        if values.shape != (len(self),):
            raise ValueError(f"expected {len(self)} values, got shape {values.shape}")
        out, start = [], 0
        for p in self.pieces:
            stop = start + p.x.size
            out.append(replace(p, values=values[start:stop].copy()))
            start = stop
        return GridFunction(tuple(out))

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Sample ``func`` on this grid."""
        return self.with_values(np.asarray(func(self.x), float) * np.ones(len(self)))

    def same_grid(self, other: "GridFunction", rtol=1e-12) -> bool:
        if len(self.pieces) != len(other.pieces):
            return False
        for p, q in zip(self.pieces, other.pieces):
            if p.x.shape != q.x.shape:
                return False
            scale = max(1.0, float(np.max(np.abs(p.x), initial=0.0)))
            if not np.allclose(p.x, q.x, rtol=0, atol=rtol * scale):
                return False
        return True

    def resample(self, target: "GridFunction") -> "GridFunction":
        """Piecewise-linear interpolation of ``self`` onto ``target``'s grid.

        Target points falling outside every piece of ``self`` get 0.
        """
        out = np.zeros(len(target))
        tx = target.x
        for p in self.pieces:
            mask = (tx >= p.a) & (tx <= p.b)
            if np.any(mask):
                out[mask] = np.interp(tx[mask], p.x, p.values)
        return target.with_values(out)

    def restrict(self, index: int) -> "GridFunction":
        return GridFunction((self.pieces[index],))

    def is_pdf(self, atol=1e-8) -> bool:
        return bool(np.all(self.values >= -atol) and abs(self.integral() - 1.0) <= atol)


def make_grid(breakpoints: Sequence[float], n_points: int | Sequence[int]) -> GridFunction:
    """Cell-centred uniform grid on each interval of ``breakpoints``.

    With an integer ``n_points`` the total count is shared between intervals in
    proportion to their length so that the step is (nearly) uniform.  Points sit
    half a step inside every interval end, so no sample falls on a node.
    """
    bp = np.asarray(breakpoints, float)
    if bp.ndim != 1 or bp.size < 2 or np.any(~np.isfinite(bp)):
        raise ValueError("breakpoints must be a finite increasing sequence of length >= 2")
    if np.any(np.diff(bp) <= 0):
        raise ValueError("breakpoints must be strictly increasing")
    lengths = np.diff(bp)
    if np.isscalar(n_points):
        counts = np.maximum(1, np.rint(lengths / lengths.sum() * int(n_points)).astype(int))
    else:
        counts = np.asarray(n_points, int)
        if counts.shape != lengths.shape or np.any(counts < 1):
            raise ValueError("one positive count per interval is required")
    pieces = []
    for a, b, n in zip(bp[:-1], bp[1:], counts):
        h = (b - a) / n
        x = a + (np.arange(n) + 0.5) * h
        pieces.append(Piece(float(a), float(b), x, np.zeros(n), np.full(n, h)))
    return GridFunction(tuple(pieces))


# --------------------------------------------------------------------------
# velocity fields and states
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Forward drift ``v(x, t)`` with its singular nodes.

    ``potential`` (when known) is a function ``W(x, t)`` with ``v = dW/dx``;
    ``dvdx`` is the spatial derivative.  Both are optional and are replaced by
    numerical quadrature / differentiation when absent.
    """

    func: Callable[[np.ndarray, float], np.ndarray]
    nodes: tuple[float, ...] = ()
    stationary: bool = True
    potential: Callable[[np.ndarray, float], np.ndarray] | None = None
    dvdx: Callable[[np.ndarray, float], np.ndarray] | None = None
    label: str = ""

    def __call__(self, x, t: float = 0.0):
        return self.func(np.asarray(x, float), t)

    def derivative(self, x, t: float = 0.0):
        x = np.asarray(x, float)
        if self.dvdx is not None:
            return self.dvdx(x, t)
        eps = 1e-5 * (1.0 + np.abs(x))
        return (self.func(x + eps, t) - self.func(x - eps, t)) / (2 * eps)

    def breakpoints(self, x_min: float, x_max: float) -> list[float]:
        """Partition of ``[x_min, x_max]`` at the nodes."""
        inner = [float(z) for z in sorted(self.nodes) if x_min < z < x_max]
        return [float(x_min)] + inner + [float(x_max)]


@dataclass(frozen=True, eq=False)
class QuantumStateFV:
    """Density, phase and forward velocity of a state, sampled on ``x``."""

    x: np.ndarray
    f: np.ndarray
    S: np.ndarray
    v: np.ndarray


# --------------------------------------------------------------------------
# harmonic oscillator
# --------------------------------------------------------------------------


def _hermite_scaled(n: int, xi: np.ndarray):
    """Normalised Hermite-function polynomial parts by recurrence.

    Returns ``(log_scale, p_n, p_{n-1})`` with ``psi_k(xi) = p_k * exp(log_scale - xi**2/2)``.
    The running rescaling keeps ``p`` in range for any ``n`` and ``xi``.
    """
    xi = np.asarray(xi, float)
    p_prev = np.zeros_like(xi)
    p = np.full_like(xi, math.pi ** -0.25)
    log_scale = np.zeros_like(xi)
    for k in range(1, n + 1):
        p_next = math.sqrt(2.0 / k) * xi * p - math.sqrt((k - 1) / k) * p_prev
        p_prev, p = p, p_next
        big = np.abs(p) > 1e150
        if np.any(big):
            s = np.where(big, np.abs(p), 1.0)
            p, p_prev = p / s, p_prev / s
            log_scale = log_scale + np.log(s)
    return log_scale, p, p_prev


def _check_n(n):
    if int(n) != n or n < 0:
        raise DomainError(f"quantum number must be a non-negative integer, got {n!r}")
    return int(n)


def ho_eigenfunction(n: int, x, params: PhysicalParams):
    """Harmonic-oscillator eigenfunction ``phi_n(x)``, normalised on the line.

    Far in the tails the result underflows cleanly to 0.
    """
    n = _check_n(n)
    s0 = params.sigma0
    xi = np.asarray(x, float) / (s0 * math.sqrt(2.0))
    log_scale, p, _ = _hermite_scaled(n, xi)
    with np.errstate(divide="ignore"):
        log_mag = log_scale + np.log(np.abs(p)) - 0.5 * xi**2 - 0.5 * math.log(s0 * math.sqrt(2.0))
    return np.sign(p) * np.exp(log_mag)


def ho_log_abs_eigenfunction(n: int, x, params: PhysicalParams):
    """``log|phi_n(x)|``; ``-inf`` exactly at the nodes."""
    n = _check_n(n)
    s0 = params.sigma0
    xi = np.asarray(x, float) / (s0 * math.sqrt(2.0))
    log_scale, p, _ = _hermite_scaled(n, xi)
    with np.errstate(divide="ignore"):
        return log_scale + np.log(np.abs(p)) - 0.5 * xi**2 - 0.5 * math.log(s0 * math.sqrt(2.0))


def ho_energy(n: int, params: PhysicalParams) -> float:
    n = _check_n(n)
    return params.hbar * params.omega * (n + 0.5)


def ho_nodes(n: int, params: PhysicalParams) -> tuple[float, ...]:
    """The ``n`` zeros of ``phi_n``, ascending."""
    n = _check_n(n)
    if n == 0:
        return ()
    roots, _ = np.polynomial.hermite.hermgauss(n)
    roots = np.sort(roots) * params.sigma0 * math.sqrt(2.0)
    if n % 2 == 1:
        roots[n // 2] = 0.0
    return tuple(float(r) for r in roots)


def ho_potential(x, params: PhysicalParams):
    return 0.5 * params.mass * params.omega**2 * np.asarray(x, float) ** 2


def ho_velocity(n: int, params: PhysicalParams) -> VelocityField:
    """Stationary forward velocity ``2 D phi_n' / phi_n`` of the ``n``-th state."""
    n = _check_n(n)
    s0, D = params.sigma0, params.D
    c = s0 * math.sqrt(2.0)

    def log_ratio(x):
        # phi_n'/phi_n from psi_n' = sqrt(2n) psi_{n-1} - xi psi_n
        xi = x / c
        _, p, p_prev = _hermite_scaled(n, xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = (math.sqrt(2.0 * n) * p_prev / p - xi) / c if n > 0 else -xi / c
        return r

    def v(x, t=0.0):
        return 2.0 * D * log_ratio(np.asarray(x, float))

    def dv(x, t=0.0):
        x = np.asarray(x, float)
        r = log_ratio(x)
        curv = x**2 / (4 * s0**4) - (2 * n + 1) / (2 * s0**2)
        return 2.0 * D * (curv - r**2)

    def W(x, t=0.0):
        # W = D ln(sigma0 phi_n^2); the additive constant is irrelevant
        return D * (2.0 * ho_log_abs_eigenfunction(n, x, params) + math.log(s0))

    return VelocityField(v, ho_nodes(n, params), True, W, dv, label=f"ho{n}")


def linear_velocity(A: Callable[[float], float], B: Callable[[float], float] | float,
                    stationary: bool = False) -> VelocityField:
    """Drift ``A(t) + B(t) x`` with potential ``A x + B x^2 / 2``."""
    Bf = B if callable(B) else (lambda t, _b=float(B): _b)

    def v(x, t=0.0):
        return A(t) + Bf(t) * np.asarray(x, float)

    def W(x, t=0.0):
        x = np.asarray(x, float)
        return A(t) * x + 0.5 * Bf(t) * x**2

    def dv(x, t=0.0):
        return np.full_like(np.asarray(x, float), Bf(t))

    return VelocityField(v, (), stationary, W, dv, label="linear")


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------


def _uniform_step(x: np.ndarray) -> float:
    dx = np.diff(x)
    h = float(dx.mean())
    if np.max(np.abs(dx - h)) > 1e-9 * max(abs(h), 1e-300) * max(1.0, np.max(np.abs(x)) / abs(h)):
        raise ValueError("finite differences here need a uniform grid")
    return h


def d1(y: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """First derivative: central inside, one-sided second order at the ends."""
    return np.gradient(y, h, axis=axis, edge_order=2)


def d2(y: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Second derivative: 3-point centre, 4-point one-sided second order at the ends."""
    y = np.moveaxis(np.asarray(y, float), axis, -1)
    if y.shape[-1] < 4:
        raise ValueError("need at least 4 samples for a second derivative")
    out = np.empty_like(y)
    out[..., 1:-1] = (y[..., 2:] - 2 * y[..., 1:-1] + y[..., :-2]) / h**2
    out[..., 0] = (2 * y[..., 0] - 5 * y[..., 1] + 4 * y[..., 2] - y[..., 3]) / h**2
    out[..., -1] = (2 * y[..., -1] - 5 * y[..., -2] + 4 * y[..., -3] - y[..., -4]) / h**2
    return np.moveaxis(out, -1, axis)


# --------------------------------------------------------------------------
# state -> velocity, and the HJM residual
# --------------------------------------------------------------------------


def velocity_from_state(R: GridFunction, S: GridFunction, params: PhysicalParams) -> VelocityField:
    """Forward velocity ``dS/dx / m + (hbar / 2m) d ln R^2 / dx`` of a sampled state.

    Each piece is differentiated on its own; a piece end where ``R`` tends to
    zero (last sample below 1e-6 of the piece maximum, or the interval end
    shared with a neighbour) is reported as a node.
    """
    if not R.same_grid(S):
        raise ValueError("R and S must share a grid")
    if np.any(R.values < 0):
        raise DomainError("amplitude R must be non-negative")
    xs, vs, nodes = [], [], []
    for pr, ps in zip(R.pieces, S.pieces):
        if np.any(pr.values <= 0):
            raise DomainError("amplitude R must be positive at interior samples")
        h = _uniform_step(pr.x)
        lnf = 2.0 * np.log(pr.values)
        v = d1(ps.values, h) / params.mass + params.D * d1(lnf, h)
        xs.append(pr.x)
        vs.append(v)
        rmax = pr.values.max()
        for end, val in ((pr.a, pr.values[0]), (pr.b, pr.values[-1])):
            if val < 1e-6 * rmax and np.isfinite(end):
                nodes.append(float(end))
    interior_ends = {p.b for p in R.pieces[:-1]}
    nodes = sorted(set(nodes) | interior_ends)
    bps = R.breakpoints

    def func(x, t=0.0):
        x = np.asarray(x, float)
        out = np.empty_like(x)
        for k, (px, pv) in enumerate(zip(xs, vs)):
            m = (x >= bps[k]) & (x <= bps[k + 1])
            out[m] = np.interp(x[m], px, pv)
        return out

    return VelocityField(func, tuple(nodes), True, label="sampled")


@dataclass(frozen=True, eq=False)
class Residual:
    """Pointwise HJM residual (energy units) with the samples that were skipped."""

    x: np.ndarray
    values: np.ndarray
    excluded: np.ndarray

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def l2(self) -> float:
        if self.values.size < 2:
            return self.max_abs()
        return float(np.sqrt(np.mean(self.values**2)))


def hjm_residual(x, f, S_frames, V, params: PhysicalParams, dt: float) -> Residual:
    """Residual of ``dS/dt + (dS/dx)^2 / 2m + V - (hbar^2 / 2m) R'' / R`` at the middle frame.

    Parameters
    ----------
    x : uniform grid (physical length)
    f : density at the middle time, sampled on ``x``
    S_frames : array ``(3, len(x))`` with the phase at ``t - dt, t, t + dt``
    V : potential at the middle time, sampled on ``x``
    dt : frame spacing used for the central time derivative

    Samples where ``f <= 0`` cannot host ``R''/R``; they (and their immediate
    neighbours, whose stencils touch them) are dropped and listed in
    ``excluded``.
    """
    x = np.asarray(x, float)
    f = np.asarray(f, float)
    S_frames = np.asarray(S_frames, float)
    V = np.asarray(V, float)
    if S_frames.shape != (3, x.size):
        raise ValueError("S_frames must have shape (3, len(x))")
    h = _uniform_step(x)
    bad = ~(f > 0)
    spread = bad.copy()
    spread[1:] |= bad[:-1]
    spread[:-1] |= bad[1:]
    R = np.sqrt(np.where(bad, 0.0, f))
    S = S_frames[1]
    dSdt = (S_frames[2] - S_frames[0]) / (2 * dt)
    dSdx = d1(S, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        quantum = d2(R, h) / R
    res = dSdt + dSdx**2 / (2 * params.mass) + V - params.hbar**2 / (2 * params.mass) * quantum
    keep = ~spread
    return Residual(x[keep], res[keep], x[spread])
