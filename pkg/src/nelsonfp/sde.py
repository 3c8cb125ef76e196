"""Euler-Maruyama particle ensembles for ``dx = v(x, t) dt + sqrt(2 D) dW``.

Every Gaussian increment is a pure function of ``(seed, particle, step,
sub-step, attempt)`` drawn from Philox counter-based generators keyed by the
seed (see :func:`gaussian_increments`).  Runs are therefore bit-reproducible and independent of how the
particles are batched.

Near a node of the drift the step is cut so that the drift moves a particle
by at most a quarter of its distance to the node.  A move that would still
land on the other side of a node is redrawn; the number of redraws is
reported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DomainError, GridFunction, VelocityField

__all__ = ["Ensemble", "interval_labels", "philox4x32", "gaussian_increments", "simulate", "histogram_l1"]

_MAX_REDRAWS = 32
_MAX_SUBSTEPS = 100000


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Snapshots of a particle run.

    ``positions[k]`` holds every particle at ``times[k]``; ``labels`` is the
    inter-node interval each particle started in.
    """

    times: np.ndarray
    positions: np.ndarray
    labels: np.ndarray
    nodes: tuple[float, ...]
    seed: int
    dt: float
    steps: int
    substeps: int
    rejections: int
    stuck: int

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[k], t, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"no snapshot at t={t}")
        return self.positions[k]

    def crossings(self) -> int:
        """Particles whose interval label differs from the starting one in any snapshot."""
        moved = np.zeros(self.n_particles, bool)
        for row in self.positions:
            moved |= interval_labels(row, self.nodes) != self.labels
        return int(moved.sum())


def interval_labels(x, nodes: Sequence[float]) -> np.ndarray:
    """Index of the inter-node interval containing each ``x`` (0 = left of every node)."""
    return np.searchsorted(np.sort(np.asarray(nodes, float)), np.asarray(x, float), side="right")


_PHILOX_M = (np.uint64(0xD2511F53), np.uint64(0xCD9E8D57))
_LO32 = np.uint64(0xFFFFFFFF)


def philox4x32(counter, key, rounds: int = 10):
    """Philox-4x32 block function applied elementwise.

    ``counter`` is a sequence of four uint32-compatible arrays (broadcast
    together), ``key`` a pair.  Returns four uint32 arrays.  numpy's own
    Philox bit generator is sequential; keying every element independently
    needs the bare block function.
    """
    words = np.broadcast_arrays(*counter)
    if words[0].size <= 16:
        return _philox_small(words, key, rounds)
    # 32-bit words are carried in uint64 so the products need no casts
    c0, c1, c2, c3 = (np.array(c, dtype=np.uint64) & _LO32 for c in np.broadcast_arrays(*counter))
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    shift = np.uint64(32)
    for _ in range(rounds):
        p0 = _PHILOX_M[0] * c0
        p1 = _PHILOX_M[1] * c2
        c0, c1, c2, c3 = ((p1 >> shift) ^ c1 ^ np.uint64(k0), p1 & _LO32,
                          (p0 >> shift) ^ c3 ^ np.uint64(k1), p0 & _LO32)
        k0 = (k0 + 0x9E3779B9) & 0xFFFFFFFF
        k1 = (k1 + 0xBB67AE85) & 0xFFFFFFFF
    return tuple(c.astype(np.uint32) for c in (c0, c1, c2, c3))


def _philox_small(words, key, rounds):
    # a handful of counters is cheaper in plain integers than in numpy calls
    shape = words[0].shape
    out = np.empty((4,) + shape, np.uint32)
    for idx in np.ndindex(shape):
        c0, c1, c2, c3 = (int(w[idx]) & 0xFFFFFFFF for w in words)
        k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
        for _ in range(rounds):
            p0 = 0xD2511F53 * c0
            p1 = 0xCD9E8D57 * c2
            c0, c1, c2, c3 = (p1 >> 32) ^ c1 ^ k0, p1 & 0xFFFFFFFF, (p0 >> 32) ^ c3 ^ k1, p0 & 0xFFFFFFFF
            k0 = (k0 + 0x9E3779B9) & 0xFFFFFFFF
            k1 = (k1 + 0xBB67AE85) & 0xFFFFFFFF
        out[(slice(None),) + idx] = (c0, c1, c2, c3)
    return tuple(out)


def _key(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def _box_muller(u1, u2):
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)


def gaussian_increments(seed: int, particles, step: int, sub: int = 0, attempt: int = 0) -> np.ndarray:
    """Standard normal for each particle index, a pure function of all five arguments.

    The first draw of a step (``sub == attempt == 0``) is normal number ``i``
    of the sequential Philox-4x64 stream keyed by ``seed`` with the step in
    its counter.  Refinement
    sub-steps and redraws touch few particles and key each one directly
    through :func:`philox4x32`.
    """
    key = _key(seed)
    particles = np.asarray(particles, np.int64)
    if particles.size == 0:
        return np.zeros(0)
    if particles.min() < 0 or particles.max() >= 2**32:
        raise DomainError("particle index must fit in 32 bits")
    if sub == 0 and attempt == 0:
        # the stream is sequential, so normal i does not depend on how many follow it
        top = int(particles.max()) + 1
        bitgen = np.random.Philox(key=key[0] | (key[1] << 32), counter=[0, int(step), 0, 0])
        z = np.random.Generator(bitgen).standard_normal(top)
        if particles.size != top or particles[0] != 0:
            z = z[particles]
        return z
    w = philox4x32((particles, int(step) + 1, int(sub), int(attempt)), key)
    scale = 1.0 / 9007199254740992.0
    u1 = ((w[0] >> np.uint32(5)).astype(np.float64) * 67108864.0 + (w[1] >> np.uint32(6))) * scale
    u2 = ((w[2] >> np.uint32(5)).astype(np.float64) * 67108864.0 + (w[3] >> np.uint32(6))) * scale
    return _box_muller(u1, u2)


def _crosses(x, labels, nodes):
    # ``nodes`` is sorted; landing exactly on a node counts as crossing
    if nodes.size == 0:
        return np.zeros(x.shape, bool)
    bad = np.searchsorted(nodes, x, side="right") != labels
    for z in nodes:
        bad |= x == z
    return bad


def _node_distance(x: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    if nodes.size == 0:
        return np.full(x.shape, np.inf)
    d = np.abs(x - nodes[0])
    for z in nodes[1:]:
        np.minimum(d, np.abs(x - z), out=d)
    return d


def _initial_positions(x0, n_particles: int, seed: int) -> np.ndarray:
    if callable(x0):
        rng = np.random.Generator(np.random.Philox(key=int(seed)))
        x = np.asarray(x0(rng, n_particles), float)
    else:
        x = np.asarray(x0, float)
        if x.ndim == 0:
            x = np.full(n_particles, float(x))
    if x.shape != (n_particles,):
        raise DomainError(f"initial positions must have shape ({n_particles},), got {x.shape}")
    return x


def simulate(v: VelocityField, D: float, x0, dt: float, n_particles: int, t_end: float, seed: int = 0,
             snapshot_times: Sequence[float] | None = None, t0: float = 0.0) -> Ensemble:
    """Run the ensemble from ``t0`` to ``t_end``.

    Parameters
    ----------
    v : drift; its ``nodes`` act as barriers
    D : diffusion constant
    x0 : scalar, array of ``n_particles`` positions, or ``sampler(rng, n)``
    dt : outer time step (shortened so that snapshots fall on step boundaries)
    snapshot_times : times to record (defaults to ``[t0, t_end]``)

    Returns
    -------
    Ensemble
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    if int(n_particles) < 1:
        raise DomainError(f"n_particles must be >= 1, got {n_particles!r}")
    if not D > 0:
        raise DomainError(f"D must be positive, got {D!r}")
    n_particles = int(n_particles)
    _key(seed)
    snaps = np.asarray([t0, t_end] if snapshot_times is None else snapshot_times, float)
    if np.any(np.diff(snaps) < 0) or np.any(snaps < t0) or np.any(snaps > t_end + 1e-12):
        raise DomainError("snapshot_times must be sorted and lie in [t0, t_end]")

    nodes = np.sort(np.asarray(v.nodes, float))
    x = _initial_positions(x0, n_particles, seed)
    if nodes.size and np.any(np.isin(x, nodes)):
        raise DomainError("particles must not start on a node")
    labels = interval_labels(x, nodes)
    all_ids = np.arange(n_particles)
    dt_min = dt * 1e-6
    sq = math.sqrt(2.0 * D)

    t, step = float(t0), 0
    substeps = rejections = stuck = 0
    frames = []

    def drift(xa, ta):
        # time-dependent drifts are sampled at the particle's own sub-step time
        if np.isscalar(ta):
            return np.asarray(v(xa, ta), float)
        if v.stationary:
            return np.asarray(v(xa, float(ta[0])), float)
        va = np.empty(xa.size)
        groups, inverse = np.unique(ta, return_inverse=True)
        for g, tg in enumerate(groups):
            sel = inverse == g
            va[sel] = v(xa[sel], float(tg))
        return va

    def move(xa, va, hs, lab, ids, step, sub):
        """One sub-step for particles ``ids``, redrawing increments that cross a node."""
        nonlocal rejections, stuck
        root = sq * np.sqrt(hs)
        xn = xa + va * hs + root * gaussian_increments(seed, ids, step, sub, 0)
        bad = _crosses(xn, lab, nodes)
        attempt = 1
        while attempt < _MAX_REDRAWS and bad.any():
            idx = np.nonzero(bad)[0]
            rejections += idx.size
            xn[idx] = xa[idx] + va[idx] * hs[idx] + root[idx] * gaussian_increments(
                seed, ids[idx], step, sub, attempt)
            bad[idx] = _crosses(xn[idx], lab[idx], nodes)
            attempt += 1
        if bad.any():
            # still crossing after every redraw: the particle sits out this sub-step
            rejections += int(bad.sum())
            stuck += int(bad.sum())
            xn[bad] = xa[bad]
        return xn

    def step_cap(xa, va):
        with np.errstate(divide="ignore", invalid="ignore"):
            cap = _node_distance(xa, nodes) / (4.0 * np.abs(va))
        return np.maximum(np.where(np.isnan(cap), np.inf, cap), dt_min)

    def advance(x, t, h, step):
        """One outer step of length ``h`` with node-aware sub-stepping."""
        nonlocal substeps
        # first sub-step for everyone; most particles finish the step here
        va = drift(x, t)
        hs = np.minimum(h, step_cap(x, va))
        x = move(x, va, hs, labels, all_ids, step, 0)
        substeps += x.size
        short = np.nonzero(hs < h * (1.0 - 1e-12))[0]
        if short.size == 0:
            return x
        # the rest continue on their own, each from its own elapsed time
        ids, xa, lab = short, x[short], labels[short]
        remaining = h - hs[short]
        sub = 1
        while ids.size:
            if sub > _MAX_SUBSTEPS:
                raise RuntimeError(f"sub-stepping did not finish at t={t:.6g}")
            va = drift(xa, t + (h - remaining))
            hs = np.minimum(remaining, step_cap(xa, va))
            xa = move(xa, va, hs, lab, ids, step, sub)
            remaining = remaining - hs
            substeps += ids.size
            done = remaining <= 1e-12 * h
            if done.any():
                x[ids[done]] = xa[done]
                keep = ~done
                ids, xa, lab, remaining = ids[keep], xa[keep], lab[keep], remaining[keep]
            sub += 1
        return x

    k = 0
    while k < snaps.size and snaps[k] <= t + 1e-12:
        frames.append(x.copy())
        k += 1
    while k < snaps.size:
        span = snaps[k] - t
        n = max(1, math.ceil(span / dt - 1e-9))
        h = span / n
        for _ in range(n):
            x = advance(x, t, h, step)
            t += h
            step += 1
        t = float(snaps[k])
        while k < snaps.size and snaps[k] <= t + 1e-12:
            frames.append(x.copy())
            k += 1
    return Ensemble(snaps.copy(), np.array(frames), labels, tuple(nodes.tolist()), int(seed), float(dt),
                    step, substeps, rejections, stuck)


def _bin_masses(reference, edges: np.ndarray) -> np.ndarray:
    if isinstance(reference, GridFunction):
        # cumulative mass at the edges from the cell-centred samples
        order = np.argsort(reference.x)
        xs, m = reference.x[order], (reference.weights * reference.values)[order]
        cum = np.concatenate([[0.0], np.cumsum(m)])
        lo = xs - 0.5 * reference.weights[order]
        faces = np.concatenate([lo, [xs[-1] + 0.5 * reference.weights[order][-1]]])
        return np.diff(np.interp(edges, faces, cum))
    gx, gw = np.polynomial.legendre.leggauss(8)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    pts = mid[:, None] + half[:, None] * gx[None, :]
    vals = np.asarray(reference(pts.ravel()), float).reshape(pts.shape)
    return half * (vals @ gw)


def histogram_l1(positions, reference, bins: int = 200, range: tuple[float, float] | None = None) -> float:
    """L1 distance between the normalised particle histogram and a reference density.

    ``reference`` is a callable density or a :class:`GridFunction`.  Both are
    compared as bin masses; particles outside ``range`` count fully toward the
    distance.
    """
    x = np.asarray(positions, float).ravel()
    if x.size == 0:
        raise DomainError("empty ensemble")
    if range is None:
        range = (float(x.min()), float(x.max()))
    counts, edges = np.histogram(x, bins=bins, range=range)
    emp = counts / x.size
    ref = _bin_masses(reference, edges)
    outside = 1.0 - counts.sum() / x.size
    return float(np.sum(np.abs(emp - ref)) + outside)
