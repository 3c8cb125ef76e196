"""Kummer's confluent hypergeometric function M(a, b; z).

Small arguments use the defining power series with compensated summation.
When the series would cancel badly (large negative ``a``) or ``z`` is large,
the value is carried outward from a small starting point by local Taylor
expansions of Kummer's equation ``z M'' + (b - z) M' - a M = 0``; their
coefficients obey a three-term recurrence, so each step is exact up to
truncation and no cancellation is inherited from the origin.
"""
from __future__ import annotations

import math

import numpy as np

from .core import DomainError

__all__ = ["confluent_M", "kummer_series"]

_SERIES_ZMAX = 30.0
_COND_MAX = 1e4
_TINY = 1e-17


def _check_b(b: float) -> None:
    if b <= 0 and float(b).is_integer():
        raise DomainError(f"b must not be a non-positive integer, got {b!r}")


def kummer_series(a: float, b: float, z: float, max_terms: int = 100000):
    """Power series of M(a, b; z) with Kahan summation.

    Returns ``(value, condition)`` where ``condition`` is the largest term
    magnitude divided by ``|value|`` (a measure of cancellation).
    """
    total, comp = 1.0, 0.0
    term, biggest = 1.0, 1.0
    quiet = 0
    for k in range(max_terms):
        if a + k == 0:
            break
        term *= (a + k) / (b + k) * z / (k + 1)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        biggest = max(biggest, abs(term))
        # past the turning point terms shrink monotonically
        if abs(term) <= _TINY * abs(total) and k + 1 > abs(a) and k + 1 > z:
            quiet += 1
            if quiet >= 2:
                break
        else:
            quiet = 0
    else:
        raise ArithmeticError(f"series for M({a}, {b}; {z}) did not converge")
    cond = biggest / abs(total) if total != 0 else math.inf
    return total, cond


def _taylor_step(a, b, z0, y, dy, s):
    """Advance (M, M') from z0 to z0 + s with the local Taylor series."""
    d_prev, d_cur = y, dy * s          # c_0 s^0, c_1 s^1
    val, der = d_prev + d_cur, dy      # der accumulates k c_k s^(k-1)
    k = 0
    quiet = 0
    while True:
        d_next = (-(k + 1) * (k + b - z0) * d_cur * s + (k + a) * d_prev * s * s) / (z0 * (k + 2) * (k + 1))
        val += d_next
        der += (k + 2) * d_next / s
        # converged for both M and s M': a component that is tiny in M now
        # may dominate later, and it is carried by the derivative
        small = (abs(d_next) <= _TINY * max(abs(val), 1e-300)
                 and abs(d_cur) <= 1e-15 * max(abs(val), 1e-300)
                 and abs((k + 2) * d_next) <= _TINY * max(abs(der * s), 1e-290))
        quiet = quiet + 1 if small else 0
        if quiet >= 2:
            break
        d_prev, d_cur = d_cur, d_next
        k += 1
        if k > 5000:
            raise ArithmeticError(f"Taylor continuation of M({a}, {b}; .) stalled at z={z0}")
    return val, der


def _continue(a: float, b: float, z: float) -> float:
    amag = abs(a) + abs(b) + 1.0
    z0 = min(z, 0.5, 2.0 / amag)
    y, _ = kummer_series(a, b, z0)
    dy = 0.0 if a == 0 else (a / b) * kummer_series(a + 1, b + 1, z0)[0]
    while z0 < z:
        s = min(z - z0, 0.5 * z0, 2.0, 2.0 * math.sqrt(z0 / amag))
        y, dy = _taylor_step(a, b, z0, y, dy, s)
        z0 += s
    return y


def _m_scalar(a: float, b: float, z: float) -> float:
    if z == 0.0:
        return 1.0
    if z < 0.0:
        # Kummer's transformation keeps the continuation on z > 0
        return math.exp(z) * _m_scalar(b - a, b, -z)
    if a == b:
        return math.exp(z)
    if a <= 0 and float(a).is_integer():
        # terminating polynomial: the series is exact but may still cancel
        val, cond = kummer_series(a, b, z)
        if cond <= _COND_MAX:
            return val
        return _continue(a, b, z)
    if z <= _SERIES_ZMAX:
        val, cond = kummer_series(a, b, z)
        if cond <= _COND_MAX:
            return val
    return _continue(a, b, z)


def confluent_M(a, b, z):
    """Kummer's function ``M(a, b; z)`` (also written 1F1).

    Accepts scalars or broadcastable arrays.  ``b`` must not be a non-positive
    integer.

    Examples
    --------
    >>> confluent_M(0.3, 1.5, 0.0)
    1.0
    >>> abs(confluent_M(1.2, 1.2, 2.0) - math.exp(2.0)) < 1e-12
    True
    """
    a_arr, b_arr, z_arr = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(z, float))
    for bv in np.unique(b_arr):
        _check_b(float(bv))
    out = np.empty(a_arr.shape)
    for idx in np.ndindex(a_arr.shape):
        out[idx] = _m_scalar(float(a_arr[idx]), float(b_arr[idx]), float(z_arr[idx]))
    if out.ndim == 0:
        return float(out)
    return out
