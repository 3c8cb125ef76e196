import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nelsonfp.cli import _stationary_sampler
from nelsonfp.control import linear_drift_moments
from nelsonfp.core import UNIT_PARAMS, DomainError, ho_eigenfunction, ho_velocity, linear_velocity, make_grid
from nelsonfp.oracles import ou_kernel_params, ou_transition
from nelsonfp.sde import Ensemble, gaussian_increments, histogram_l1, interval_labels, philox4x32, simulate

from conftest import ODD_PARAMS

# Random123 known-answer vectors for Philox-4x32, 10 rounds
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


# --------------------------------------------------------------------------
# counter-based generator
# --------------------------------------------------------------------------


@pytest.mark.parametrize("counter, key, expected", KAT)
def test_philox_known_answers(counter, key, expected):
    out = philox4x32(counter, key)
    assert tuple(int(w) for w in out) == expected


@pytest.mark.parametrize("counter, key, expected", KAT)
def test_philox_vectorised_path_matches(counter, key, expected):
    ctr = [np.full(40, c, dtype=np.uint64) for c in counter]
    out = philox4x32(ctr, key)
    for w, e in zip(out, expected):
        assert out[0].dtype == np.uint32
        np.testing.assert_array_equal(w, e)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 2**32 - 1), min_size=4, max_size=4), st.integers(0, 2**32 - 1),
       st.integers(0, 2**32 - 1))
def test_philox_small_and_vectorised_paths_agree(ctr, k0, k1):
    small = philox4x32(ctr, (k0, k1))
    big = philox4x32([np.full(17, c, dtype=np.uint64) for c in ctr], (k0, k1))
    for s, b in zip(small, big):
        assert np.all(b == s)


def test_increments_are_pure_functions_of_their_indices():
    ids = np.arange(1000)
    a = gaussian_increments(7, ids, 3)
    np.testing.assert_array_equal(a, gaussian_increments(7, ids, 3))
    np.testing.assert_array_equal(a[[5, 999, 17]], gaussian_increments(7, [5, 999, 17], 3))
    assert not np.array_equal(a, gaussian_increments(8, ids, 3))
    assert not np.array_equal(a, gaussian_increments(7, ids, 4))
    r = gaussian_increments(7, ids, 3, sub=2, attempt=1)
    np.testing.assert_array_equal(r[[3, 400]], gaussian_increments(7, [3, 400], 3, sub=2, attempt=1))
    assert not np.array_equal(r, gaussian_increments(7, ids, 3, sub=2, attempt=2))
    assert gaussian_increments(7, [], 0).size == 0


@pytest.mark.parametrize("sub, attempt", [(0, 0), (1, 0), (0, 3)])
def test_increments_are_standard_normal(sub, attempt):
    z = gaussian_increments(2024, np.arange(200_000), 11, sub, attempt)
    assert stats.kstest(z, "norm").pvalue > 1e-3
    n = z.size
    assert abs(z.mean()) <= 4 / math.sqrt(n)
    assert abs(z.var() - 1.0) <= 4 * math.sqrt(2.0 / n)


def test_increments_uncorrelated_across_steps():
    ids = np.arange(100_000)
    r = np.corrcoef(gaussian_increments(1, ids, 0), gaussian_increments(1, ids, 1))[0, 1]
    assert abs(r) <= 4 / math.sqrt(ids.size)


def test_seed_and_index_validation():
    with pytest.raises(DomainError, match="seed"):
        gaussian_increments(-1, [0], 0)
    with pytest.raises(DomainError, match="seed"):
        gaussian_increments(2**64, [0], 0)
    with pytest.raises(DomainError, match="32 bits"):
        gaussian_increments(0, [2**32], 0)


def test_interval_labels():
    np.testing.assert_array_equal(interval_labels([-2.0, -0.5, 0.5, 2.0], (1.0, -1.0)), [0, 1, 1, 2])
    np.testing.assert_array_equal(interval_labels([3.0], ()), [0])


# --------------------------------------------------------------------------
# ensembles
# --------------------------------------------------------------------------


def test_simulation_is_deterministic_per_seed():
    v = ho_velocity(1, UNIT_PARAMS)
    a = simulate(v, UNIT_PARAMS.D, 0.5, 1e-2, 500, 0.5, seed=3)
    b = simulate(v, UNIT_PARAMS.D, 0.5, 1e-2, 500, 0.5, seed=3)
    c = simulate(v, UNIT_PARAMS.D, 0.5, 1e-2, 500, 0.5, seed=4)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions[-1], c.positions[-1])
    assert (a.rejections, a.substeps) == (b.rejections, b.substeps)


def test_particles_are_independent_of_batch_size():
    """Particle i follows the same path whatever the ensemble size."""
    v = ho_velocity(0, UNIT_PARAMS)
    small = simulate(v, UNIT_PARAMS.D, 1.0, 1e-2, 10, 1.0, seed=9)
    big = simulate(v, UNIT_PARAMS.D, 1.0, 1e-2, 1000, 1.0, seed=9)
    np.testing.assert_array_equal(small.positions, big.positions[:, :10])


def test_ou_moments_within_standard_errors(params):
    n, t = 20_000, 1.0 / params.omega
    x0 = 1.0 * params.sigma0
    ens = simulate(ho_velocity(0, params), params.D, x0, 1e-3 / params.omega, n, t, seed=11)
    x = ens.at(t)
    k = ou_kernel_params(x0, t, 0.0, params)
    se_mean = math.sqrt(k.sigma2 / n)
    se_var = k.sigma2 * math.sqrt(2.0 / (n - 1))
    assert abs(x.mean() - k.alpha) <= 4 * se_mean
    assert abs(x.var(ddof=1) - k.sigma2) <= 4 * se_var


def test_ou_histogram_matches_kernel():
    P = UNIT_PARAMS
    ens = simulate(ho_velocity(0, P), P.D, 1.0, 1e-3, 50_000, 0.5, seed=5)
    ref = lambda x: ou_transition(x, 0.5, 1.0, 0.0, P)   # noqa: E731
    assert histogram_l1(ens.at(0.5), ref, bins=100, range=(-4.0, 5.0)) <= 0.05


@pytest.mark.parametrize("n", [1, 2, 3])
def test_nodes_are_never_crossed(n):
    P = ODD_PARAMS
    v = ho_velocity(n, P)
    sampler = _stationary_sampler(n, P, 6 * P.sigma0)
    snaps = np.linspace(0, 2.0, 11) / P.omega
    ens = simulate(v, P.D, sampler, 1e-3 / P.omega, 3000, snaps[-1], seed=n, snapshot_times=snaps)
    assert ens.crossings() == 0
    assert ens.stuck <= ens.rejections


@pytest.mark.parametrize("n", [1, 2])
def test_stationary_ensemble_keeps_its_density(n):
    P = UNIT_PARAMS
    v = ho_velocity(n, P)
    ens = simulate(v, P.D, _stationary_sampler(n, P, 6.0), 1e-3, 40_000, 1.0, seed=21)
    ref = lambda x: ho_eigenfunction(n, x, P) ** 2   # noqa: E731
    assert histogram_l1(ens.at(1.0), ref, bins=80, range=(-5.0, 5.0)) <= 0.05


def test_node_sub_stepping_is_reported():
    v = ho_velocity(1, UNIT_PARAMS)
    ens = simulate(v, UNIT_PARAMS.D, 0.01, 1e-2, 200, 0.1, seed=1)
    assert ens.substeps > ens.steps * ens.n_particles
    assert np.all(ens.at(0.1) > 0)


def test_time_dependent_linear_drift_moments():
    P = UNIT_PARAMS
    A = lambda t: 0.5 * math.cos(3 * t)   # noqa: E731
    B = lambda t: -1.0 - 0.3 * t          # noqa: E731
    v = linear_velocity(A, B)
    n = 20_000
    ens = simulate(v, P.D, 0.0, 1e-3, n, 1.0, seed=17)
    mu, nu = linear_drift_moments(A, B, 0.0, 0.0, P.D, [0.0, 1.0])
    x = ens.at(1.0)
    assert abs(x.mean() - mu[-1]) <= 4 * math.sqrt(nu[-1] / n)
    assert abs(x.var(ddof=1) - nu[-1]) <= 4 * nu[-1] * math.sqrt(2.0 / (n - 1))


def test_snapshots_and_lookup():
    v = ho_velocity(0, UNIT_PARAMS)
    ens = simulate(v, UNIT_PARAMS.D, np.linspace(-1, 1, 50), 0.03, 50, 1.0, seed=0,
                   snapshot_times=[0.0, 0.1, 0.1, 1.0])
    assert isinstance(ens, Ensemble)
    assert ens.positions.shape == (4, 50)
    np.testing.assert_array_equal(ens.at(0.0), np.linspace(-1, 1, 50))
    np.testing.assert_array_equal(ens.positions[1], ens.positions[2])
    with pytest.raises(KeyError):
        ens.at(0.5)


def test_simulation_errors():
    v = ho_velocity(1, UNIT_PARAMS)
    D = UNIT_PARAMS.D
    with pytest.raises(DomainError, match="dt"):
        simulate(v, D, 1.0, 0.0, 10, 1.0)
    with pytest.raises(DomainError, match="n_particles"):
        simulate(v, D, 1.0, 0.1, 0, 1.0)
    with pytest.raises(DomainError, match="D"):
        simulate(v, -1.0, 1.0, 0.1, 10, 1.0)
    with pytest.raises(DomainError, match="node"):
        simulate(v, D, 0.0, 0.1, 10, 1.0)
    with pytest.raises(DomainError, match="snapshot"):
        simulate(v, D, 1.0, 0.1, 10, 1.0, snapshot_times=[0.5, 0.2])
    with pytest.raises(DomainError, match="shape"):
        simulate(v, D, np.ones(3), 0.1, 10, 1.0)
    with pytest.raises(DomainError, match="seed"):
        simulate(v, D, 1.0, 0.1, 10, 1.0, seed=-5)


# --------------------------------------------------------------------------
# histogram distance
# --------------------------------------------------------------------------


def test_histogram_l1_examples():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(200_000)
    pdf = stats.norm.pdf
    assert histogram_l1(x, pdf, bins=60, range=(-6.0, 6.0)) <= 0.02
    # everything outside the range counts in full
    assert histogram_l1(x + 100.0, pdf, bins=60, range=(-6.0, 6.0)) == pytest.approx(2.0, abs=1e-6)
    # a disjoint reference inside the range is at distance 2
    far = lambda y: stats.norm.pdf(y, loc=20.0)   # noqa: E731
    assert histogram_l1(x, far, bins=60, range=(-6.0, 26.0)) == pytest.approx(2.0, abs=1e-3)
    with pytest.raises(DomainError, match="empty"):
        histogram_l1([], pdf)


def test_histogram_l1_grid_reference_matches_callable():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(50_000)
    grid = make_grid([-8.0, 8.0], 4000).map(stats.norm.pdf)
    a = histogram_l1(x, grid, bins=40, range=(-4.0, 4.0))
    b = histogram_l1(x, stats.norm.pdf, bins=40, range=(-4.0, 4.0))
    assert a == pytest.approx(b, abs=1e-4)
