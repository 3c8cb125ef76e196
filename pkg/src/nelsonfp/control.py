"""Controlling potentials that turn prescribed (density, drift) pairs into quantum states.

Given a Fokker-Planck solution ``f`` driven by ``v = dW/dx`` the phase follows
as ``S = m W - (hbar/2) ln(sigma0 f) - theta(t)`` and the Hamilton-Jacobi-Madelung
equation then *defines* the potential.  Four evolutions have closed forms:
the Ornstein-Uhlenbeck kernel, the first-excited-state kernel, the decay of
``phi_1^2`` into ``phi_0^2`` under the ground-state drift, and a coherent
packet steered into the ground state by a smoothly switched drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import comb

from .core import (
    DomainError,
    PhysicalParams,
    QuantumStateFV,
    VelocityField,
    d1,
    d2,
    ho_eigenfunction,
    ho_potential,
    ho_velocity,
    hjm_residual,
    linear_velocity,
)
from .oracles import n1_transition, ou_kernel_params, ou_transition

__all__ = [
    "ControlError",
    "synthesize_phase",
    "synthesize_potential",
    "ControlledEvolution",
    "DecayModel",
    "decay_density",
    "decay_potential",
    "decay_U",
    "coherent_packet",
    "linear_drift_moments",
    "SmoothingFamily",
    "smoothing_F",
    "transition_drift",
    "packet_U",
    "packet_W",
    "packet_to_ground_potential",
    "ou_control",
    "n1_control",
    "decay_control",
    "packet_control",
    "build_scenario",
]


class ControlError(RuntimeError):
    """A controlled evolution could not be constructed."""


# --------------------------------------------------------------------------
# generic synthesis
# --------------------------------------------------------------------------


def synthesize_phase(f, W, theta, params: PhysicalParams):
    """Phase ``S = m W - (hbar / 2) ln(sigma0 f) - theta``; NaN where ``f <= 0``."""
    f = np.asarray(f, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lnf = np.where(f > 0, np.log(params.sigma0 * np.where(f > 0, f, 1.0)), np.nan)
    return params.mass * np.asarray(W, float) - 0.5 * params.hbar * lnf - np.asarray(theta, float)


def synthesize_potential(x, t, f, v, W, theta_dot, params: PhysicalParams):
    """Potential realising the sampled evolution ``(f, v)``.

    Parameters
    ----------
    x : uniform spatial grid, shape ``(nx,)``
    t : frame times, shape ``(nt,)``, ``nt >= 3`` (spacing may vary)
    f, v, W : arrays ``(nt, nx)``
    theta_dot : array ``(nt,)``

    Returns
    -------
    V : array ``(nt, nx)`` (NaN where ``f <= 0``)
    excluded : boolean mask of the NaN entries
    """
    x = np.asarray(x, float)
    t = np.asarray(t, float)
    f = np.asarray(f, float)
    v = np.asarray(v, float)
    W = np.asarray(W, float)
    if f.shape != (t.size, x.size) or v.shape != f.shape or W.shape != f.shape:
        raise ValueError("f, v and W must have shape (len(t), len(x))")
    if t.size < 3:
        raise ValueError("need at least three time frames for the time derivatives")
    hx = float(x[1] - x[0])
    excluded = ~(f > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lnf = np.log(params.sigma0 * np.where(excluded, np.nan, f))
    m, hb = params.mass, params.hbar
    dt_lnf = np.gradient(lnf, t, axis=0, edge_order=2)
    dt_W = np.gradient(W, t, axis=0, edge_order=2)
    dx_lnf = d1(lnf, hx, axis=1)
    dxx_lnf = d2(lnf, hx, axis=1)
    V = (hb**2 / (4 * m)) * dxx_lnf + 0.5 * hb * (dt_lnf + v * dx_lnf) - 0.5 * m * v**2 - m * dt_W
    V = V + np.asarray(theta_dot, float)[:, None]
    return V, excluded


@dataclass(frozen=True, eq=False)
class ControlledEvolution:
    """A prescribed ``(f, v)`` trajectory with gauge and (when known) closed-form potential.

    Every callable takes ``(x, t)`` with array ``x`` and scalar ``t`` except
    the gauge functions, which take ``t``.
    """

    kind: str
    params: PhysicalParams
    density: Callable
    velocity: VelocityField
    theta: Callable[[float], float]
    theta_dot: Callable[[float], float]
    potential: Callable | None = None
    singular_points: tuple[float, ...] = ()
    t_min: float = 0.0

    def W(self, x, t):
        return self.velocity.potential(np.asarray(x, float), t)

    def phase(self, x, t):
        return synthesize_phase(self.density(x, t), self.W(x, t), self.theta(t), self.params)

    def sample(self, x, times):
        """Arrays ``f, v, W, theta_dot`` on ``times x x``."""
        x = np.asarray(x, float)
        f = np.array([self.density(x, tt) for tt in times])
        v = np.array([self.velocity(x, tt) for tt in times])
        W = np.array([self.W(x, tt) for tt in times])
        th = np.array([self.theta_dot(tt) for tt in times])
        return f, v, W, th

    def numeric_potential(self, x, t: float, dt: float):
        """Potential from the generic synthesis on the frames ``t - dt, t, t + dt``."""
        times = np.array([t - dt, t, t + dt])
        if times[0] <= self.t_min:
            raise DomainError(f"frame t - dt = {times[0]} reaches the start of the evolution")
        f, v, W, th = self.sample(x, times)
        V, _ = synthesize_potential(x, times, f, v, W, th, self.params)
        return V[1]

    def agreement(self, x, t: float, dt: float, exclude_radius: float = 0.0, margin: int = 3) -> float:
        """Largest ``|V_numeric - V_closed| / max(|V_closed|, hbar omega)``.

        The outermost ``margin`` samples (one-sided stencils) and samples
        within ``exclude_radius`` of a singular point are skipped.
        """
        if self.potential is None:
            raise ControlError(f"{self.kind} evolution has no closed-form potential")
        x = np.asarray(x, float)
        Vn = self.numeric_potential(x, t, dt)
        Vc = np.asarray(self.potential(x, t), float)
        scale = np.maximum(np.abs(Vc), self.params.hbar * self.params.omega)
        keep = np.zeros(x.size, bool)
        keep[margin:x.size - margin] = True
        for s in self.singular_points:
            keep &= np.abs(x - s) >= exclude_radius
        keep &= np.isfinite(Vn) & np.isfinite(Vc)
        if not keep.any():
            raise ControlError("no samples left after exclusions")
        return float(np.max(np.abs(Vn - Vc)[keep] / scale[keep]))

    def residual(self, x, t: float, dt: float):
        """HJM residual of the closed-form potential at ``t``."""
        if self.potential is None:
            raise ControlError(f"{self.kind} evolution has no closed-form potential")
        S = np.array([self.phase(x, tt) for tt in (t - dt, t, t + dt)])
        return hjm_residual(x, self.density(x, t), S, self.potential(x, t), self.params, dt)


# --------------------------------------------------------------------------
# Ornstein-Uhlenbeck and first-excited-state kernels
# --------------------------------------------------------------------------


def _log_sinh(y):
    return y + math.log1p(-math.exp(-2.0 * y)) - math.log(2.0)


def ou_control(x0: float, params: PhysicalParams) -> ControlledEvolution:
    """Control of the Ornstein-Uhlenbeck kernel started at ``x0`` (``t0 = 0``)."""
    hb, om = params.hbar, params.omega

    def density(x, t):
        return ou_transition(x, t, x0, 0.0, params)

    def theta(t):
        return 0.5 * hb * _log_sinh(om * t)

    def theta_dot(t):
        return 0.5 * hb * om / math.tanh(om * t)

    def potential(x, t):
        k = ou_kernel_params(x0, t, 0.0, params)
        x = np.asarray(x, float)
        r = params.sigma0**2 / k.sigma2
        return 0.5 * hb * om * (x - k.alpha) ** 2 / k.sigma2 * r - 0.5 * params.mass * om**2 * x**2

    return ControlledEvolution("ou", params, density, ho_velocity(0, params), theta, theta_dot, potential)


def _T(y):
    """``y / tanh y`` with the removable singularity at 0."""
    y = np.asarray(y, float)
    out = np.ones_like(y)
    big = np.abs(y) > 1e-4
    out[big] = y[big] / np.tanh(y[big])
    ys = y[~big]
    out[~big] = 1.0 + ys**2 / 3.0
    return out


def n1_control(x0: float, params: PhysicalParams) -> ControlledEvolution:
    """Control of the first-excited-state kernel started at ``x0 != 0`` (``t0 = 0``)."""
    if x0 == 0:
        raise DomainError("source must not sit on the node x0 = 0")
    hb, om, m, s0 = params.hbar, params.omega, params.mass, params.sigma0
    kappa = (x0 / s0) ** 2

    def density(x, t):
        return n1_transition(x, t, x0, 0.0, params)

    def theta(t):
        u = math.exp(-2.0 * om * t)
        return hb * (2.0 * om * t + math.log1p(-u)) + 0.5 * hb * kappa / (1.0 - u) - 0.5 * hb * om * t

    def theta_dot(t):
        k = ou_kernel_params(x0, t, 0.0, params)
        r = s0**2 / k.sigma2
        return 0.5 * hb * om * (4.0 * r - 2.0 * s0**2 * k.alpha**2 / k.sigma2**2 - 1.0)

    def potential(x, t):
        k = ou_kernel_params(x0, t, 0.0, params)
        x = np.asarray(x, float)
        r = s0**2 / k.sigma2
        T = _T(x * k.alpha / k.sigma2)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (0.5 * m * om**2 * x**2 * (2.0 * r**2 - 1.0)
                   + hb * om * (1.0 - r * T)
                   - hb**2 / (4.0 * m * x**2) * (1.0 - T) ** 2)
        return np.where(x * x0 > 0, out, np.nan)

    return ControlledEvolution("n1", params, density, ho_velocity(1, params), theta, theta_dot,
                               potential, singular_points=(0.0,))


# --------------------------------------------------------------------------
# decay 1 -> 0
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayModel:
    """Weights of ``phi_0^2`` and ``phi_1^2`` along the decay (dimensionless)."""

    omega: float

    def beta2(self, t):
        return -np.expm1(-2.0 * self.omega * np.asarray(t, float))

    def gamma(self, t):
        return np.exp(-self.omega * np.asarray(t, float))

    def b2(self, t):
        return np.expm1(2.0 * self.omega * np.asarray(t, float))


def decay_density(x, t: float, params: PhysicalParams):
    """``beta^2(t) phi_0^2 + gamma^2(t) phi_1^2``."""
    if t < 0:
        raise DomainError("t must be >= 0")
    dm = DecayModel(params.omega)
    return dm.beta2(t) * ho_eigenfunction(0, x, params) ** 2 + dm.gamma(t) ** 2 * ho_eigenfunction(1, x, params) ** 2


def decay_U(x, b2):
    """``(x^4 + b^2 x^2 - b^2) / (b^2 + x^2)^2`` with ``x`` in units of sigma0."""
    x = np.asarray(x, float)
    return (x**4 + b2 * x**2 - b2) / (b2 + x**2) ** 2


def decay_potential(x, t: float, params: PhysicalParams):
    """Controlling potential of the decay; ``t = 0`` is singular at ``x = 0``."""
    if t < 0:
        raise DomainError("t must be >= 0")
    x = np.asarray(x, float)
    b2 = float(DecayModel(params.omega).b2(t))
    if b2 == 0.0 and np.any(x == 0):
        raise DomainError("decay potential is singular at (x=0, t=0)")
    with np.errstate(divide="ignore", invalid="ignore"):
        U = decay_U(x / params.sigma0, b2)
    return ho_potential(x, params) - 2.0 * params.hbar * params.omega * U


def decay_control(params: PhysicalParams) -> ControlledEvolution:
    hb, om = params.hbar, params.omega
    return ControlledEvolution(
        "decay", params,
        lambda x, t: decay_density(x, t, params),
        ho_velocity(0, params),
        lambda t: 0.5 * hb * om * t,
        lambda t: 0.5 * hb * om,
        lambda x, t: decay_potential(x, t, params),
        singular_points=(0.0,),
    )


# --------------------------------------------------------------------------
# coherent packet and the linear-drift family
# --------------------------------------------------------------------------


def coherent_packet(x, t: float, a: float, params: PhysicalParams) -> QuantumStateFV:
    """Oscillating coherent packet of initial displacement ``a``: density, phase, drift."""
    x = np.asarray(x, float)
    om, s0, hb = params.omega, params.sigma0, params.hbar
    f = ho_eigenfunction(0, x - a * math.cos(om * t), params) ** 2
    S = -hb * ((4 * a * x * math.sin(om * t) - a * a * math.sin(2 * om * t)) / (8 * s0**2) + 0.5 * om * t)
    v = a * om * (math.cos(om * t) - math.sin(om * t)) - om * x
    return QuantumStateFV(x, f, S, v)


def linear_drift_moments(A: Callable[[float], float], B: Callable[[float], float], mu0: float, nu0: float,
                         D: float, t_grid, rtol: float = 1e-12, atol: float = 1e-14):
    """Mean and variance of the Gaussian solution for the drift ``A(t) + B(t) x``.

    Integrates ``mu' = B mu + A`` and ``nu' = 2 B nu + 2 D`` with an 8th-order
    Runge-Kutta method and returns both on ``t_grid`` (which starts at the
    initial time).
    """
    t_grid = np.asarray(t_grid, float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) < 0):
        raise DomainError("t_grid must be a non-decreasing 1D array")
    if t_grid.size == 1 or t_grid[-1] == t_grid[0]:
        return np.full(t_grid.shape, float(mu0)), np.full(t_grid.shape, float(nu0))

    def rhs(t, y):
        b = B(t)
        return [b * y[0] + A(t), 2.0 * b * y[1] + 2.0 * D]

    sol = solve_ivp(rhs, (t_grid[0], t_grid[-1]), [mu0, nu0], method="DOP853", t_eval=t_grid,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise ControlError(f"moment integration failed after {sol.t.size} steps at t={sol.t[-1]:.6g}: {sol.message}")
    return sol.y[0], sol.y[1]


@dataclass(frozen=True)
class SmoothingFamily:
    """``F(t) = 1 - (1 - exp(-Omega t))^N`` with ``Omega = ln N / tau``."""

    tau: float
    N: int

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau!r}")
        if int(self.N) != self.N or self.N < 2:
            raise DomainError(f"N must be an integer >= 2 (needed for F'(0) = 0), got {self.N!r}")

    @property
    def Omega(self) -> float:
        return math.log(self.N) / self.tau

    def rates(self) -> np.ndarray:
        return self.Omega * np.arange(1, self.N + 1)

    def coefficients(self) -> np.ndarray:
        k = np.arange(1, self.N + 1)
        return (-1.0) ** (k + 1) * comb(self.N, k, exact=False)

    def F(self, t):
        t = np.asarray(t, float)
        with np.errstate(divide="ignore"):     # log1p(-1) = -inf gives F(0) = 1 exactly
            return -np.expm1(self.N * np.log1p(-np.exp(-self.Omega * t)))

    def F_sum(self, t):
        t = np.asarray(t, float)
        return np.tensordot(self.coefficients(), np.exp(-np.multiply.outer(self.rates(), t)), axes=1)

    def dF(self, t):
        t = np.asarray(t, float)
        e = np.exp(-self.Omega * t)
        return -self.N * self.Omega * e * (1.0 - e) ** (self.N - 1)

    def d2F(self, t):
        t = np.asarray(t, float)
        e = np.exp(-self.Omega * t)
        u = 1.0 - e
        return -self.N * self.Omega**2 * e * u ** (self.N - 2) * ((self.N - 1) * e - u)


def smoothing_F(t, tau: float, N: int):
    """Product form ``F(t)`` and the binomial-sum form of the same function."""
    fam = SmoothingFamily(tau, N)
    return fam.F(t), fam.F_sum(t)


def transition_drift(a: float, tau: float, N: int, params: PhysicalParams) -> VelocityField:
    """``v(x, t) = a omega (cos wt - sin wt) F(t) - omega x``."""
    fam = SmoothingFamily(tau, N)
    om = params.omega

    def A(t):
        return a * om * (math.cos(om * t) - math.sin(om * t)) * float(fam.F(t))

    return linear_velocity(A, -om)


def packet_U(t, k: int, fam: SmoothingFamily, omega: float):
    wk = k * fam.Omega
    t = np.asarray(t, float)
    s, c = np.sin(omega * t), np.cos(omega * t)
    return s + (2 * omega**2 * s - wk**2 * c) / ((wk - omega) ** 2 + omega**2)


def packet_W(k: int, fam: SmoothingFamily, omega: float) -> float:
    wk = k * fam.Omega
    return 1.0 + (2 * omega**2 - wk**2) / ((wk - omega) ** 2 + omega**2)


def packet_to_ground_potential(x, t: float, a: float, tau: float, N: int, params: PhysicalParams):
    """Closed-form potential steering the coherent packet into the ground state."""
    fam = SmoothingFamily(tau, N)
    om, m = params.omega, params.mass
    x = np.asarray(x, float)
    total = 0.0
    for k, ck in zip(range(1, N + 1), fam.coefficients()):
        wk = k * fam.Omega
        total += ck * (float(packet_U(t, k, fam, om)) * wk * math.exp(-wk * t)
                       - packet_W(k, fam, om) * om * math.exp(-om * t))
    # F(0) = 1 makes the coefficients sum to 1; the homogeneous part of the
    # centre motion contributes the extra 2 omega e^{-omega t}
    total += 2.0 * om * math.exp(-om * t)
    return ho_potential(x, params) - m * om * a * x * total


@dataclass(frozen=True, eq=False)
class _PacketPath:
    """Dense ODE solution for the packet centre ``mu`` and the gauge ``theta``."""

    sol: object
    t_end: float

    def mu(self, t):
        return float(self.sol.sol(t)[0])

    def theta(self, t):
        return float(self.sol.sol(t)[1])


def packet_control(a: float, tau: float, N: int, params: PhysicalParams, t_end: float | None = None,
                   rtol: float = 1e-12) -> ControlledEvolution:
    """Coherent packet driven to the ground state by :func:`transition_drift`.

    The centre obeys ``mu' = A(t) - omega mu`` with ``mu(0) = a``; the gauge
    ``theta' = hbar omega / 2 - m omega^2 mu^2 + m A^2 / 2`` zeroes the potential
    at the origin, matching the closed form.
    """
    SmoothingFamily(tau, N)  # validates tau and N
    om, m, hb = params.omega, params.mass, params.hbar
    drift = transition_drift(a, tau, N, params)
    A = lambda t: float(drift(np.array(0.0), t))
    if t_end is None:
        t_end = max(40.0 * tau, 40.0 / om)

    def rhs(t, y):
        At = A(t)
        return [At - om * y[0], 0.5 * hb * om - m * om**2 * y[0] ** 2 + 0.5 * m * At**2]

    sol = solve_ivp(rhs, (0.0, t_end), [a, 0.0], method="DOP853", dense_output=True, rtol=rtol, atol=1e-14)
    if not sol.success:
        raise ControlError(f"packet centre integration failed: {sol.message}")
    path = _PacketPath(sol, t_end)

    def density(x, t):
        return ho_eigenfunction(0, np.asarray(x, float) - path.mu(t), params) ** 2

    def theta_dot(t):
        mu, At = path.mu(t), A(t)
        return 0.5 * hb * om - m * om**2 * mu**2 + 0.5 * m * At**2

    return ControlledEvolution("packet", params, density, drift, path.theta, theta_dot,
                               lambda x, t: packet_to_ground_potential(x, t, a, tau, N, params),
                               t_min=0.0)


def build_scenario(kind: str, params: PhysicalParams, x0: float = 1.0, a: float = 1.0,
                   tau: float = 1.0, N: int = 4) -> ControlledEvolution:
    """Closed-form controlled evolution by name; lengths are in units of sigma0."""
    s0, om = params.sigma0, params.omega
    if kind == "ou":
        return ou_control(x0 * s0, params)
    if kind == "n1":
        return n1_control(x0 * s0, params)
    if kind == "decay":
        return decay_control(params)
    if kind == "packet":
        return packet_control(a * s0, tau / om, N, params)
    raise DomainError(f"unknown control scenario {kind!r}; expected ou, n1, decay or packet")
