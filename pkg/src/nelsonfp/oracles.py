"""Closed-form transition densities and limits for the oscillator drifts.

These are the reference values the solvers are checked against: the
Ornstein-Uhlenbeck kernel of the ground-state drift, the half-line kernel of
the first excited state, and the weighted asymptotic density that the latter
produces from arbitrary initial data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, GridFunction, PhysicalParams, ho_eigenfunction

__all__ = [
    "OUKernelParams",
    "ou_kernel_params",
    "ou_transition",
    "n1_transition",
    "gamma_factor",
    "n1_asymptotic",
]


@dataclass(frozen=True)
class OUKernelParams:
    """Mean ``alpha`` and variance ``sigma2`` of the kernel started at ``x0``."""

    x0: float
    t0: float
    elapsed: float
    alpha: float
    sigma2: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def ou_kernel_params(x0: float, t: float, t0: float, params: PhysicalParams) -> OUKernelParams:
    elapsed = t - t0
    if not elapsed > 0:
        raise DomainError(f"kernel needs t > t0, got t - t0 = {elapsed!r}")
    decay = math.exp(-params.omega * elapsed)
    sigma2 = params.sigma0**2 * -math.expm1(-2.0 * params.omega * elapsed)
    return OUKernelParams(float(x0), float(t0), elapsed, x0 * decay, sigma2)


def ou_transition(x, t: float, x0: float, t0: float, params: PhysicalParams):
    """Ornstein-Uhlenbeck transition density ``p(x, t | x0, t0)`` of the drift ``-omega x``."""
    k = ou_kernel_params(x0, t, t0, params)
    x = np.asarray(x, float)
    return np.exp(-((x - k.alpha) ** 2) / (2 * k.sigma2)) / (k.sigma * math.sqrt(2 * math.pi))


def _one_minus_exp_over(u):
    """(1 - exp(-2u)) / (2u), stable at u -> 0."""
    u = np.asarray(u, float)
    out = np.empty_like(u)
    small = np.abs(u) < 1e-6
    us = u[small]
    out[small] = 1.0 - us + (2.0 / 3.0) * us**2
    ul = u[~small]
    out[~small] = -np.expm1(-2.0 * ul) / (2.0 * ul)
    return out


def n1_transition(x, t: float, x0: float, t0: float, params: PhysicalParams):
    """Transition density of the first-excited-state drift, on the half-line of ``x0``.

    ``(x / alpha) [exp(-(x - alpha)^2 / 2 s^2) - exp(-(x + alpha)^2 / 2 s^2)] / (s sqrt(2 pi))``
    for ``x x0 > 0`` and zero elsewhere.  The difference of Gaussians is
    rewritten as ``exp(-(x - alpha)^2 / 2 s^2) (1 - exp(-2u))`` with
    ``u = x alpha / s^2`` so that neither ``alpha -> 0`` (late times) nor large
    ``u`` (early times) loses precision.
    """
    if x0 == 0:
        raise DomainError("the n=1 kernel is undefined for a source on the node x0 = 0")
    k = ou_kernel_params(x0, t, t0, params)
    x = np.asarray(x, float)
    same_side = x * x0 > 0
    xs = np.where(same_side, x, 0.0)
    u = xs * k.alpha / k.sigma2
    # (x / alpha)(1 - e^{-2u}) = (2 x^2 / s^2) * (1 - e^{-2u}) / (2u)
    ratio = 2.0 * xs**2 / k.sigma2 * _one_minus_exp_over(u)
    gauss = np.exp(-((xs - k.alpha) ** 2) / (2 * k.sigma2))
    p = ratio * gauss / (k.sigma * math.sqrt(2 * math.pi))
    return np.where(same_side, p, 0.0)


def gamma_factor(q: float, x):
    """Weight ``q`` on ``x > 0`` and ``2 - q`` on ``x < 0`` (value 1 at ``x = 0``)."""
    if not 0.0 <= q <= 2.0:
        raise DomainError(f"q must lie in [0, 2], got {q!r}")
    x = np.asarray(x, float)
    # x = 0 is measure-zero; 1/2 (q + 2 - q) keeps plots continuous at q = 1
    return np.where(x > 0, q, np.where(x < 0, 2.0 - q, 1.0))


def n1_asymptotic(f0: GridFunction, params: PhysicalParams) -> GridFunction:
    """Long-time limit ``Gamma(q; x) phi_1(x)^2`` with ``q = 2 * mass of f0 on x > 0``."""
    x, w = f0.x, f0.weights
    q = 2.0 * float(np.sum(w[x > 0] * f0.values[x > 0]))
    q = min(max(q, 0.0), 2.0)
    return f0.with_values(gamma_factor(q, x) * ho_eigenfunction(1, x, params) ** 2)
