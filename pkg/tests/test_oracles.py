import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelsonfp.core import UNIT_PARAMS, DomainError, ho_eigenfunction, ho_velocity, make_grid
from nelsonfp.fpsolver import chapman_kolmogorov, l1_distance
from nelsonfp.oracles import (
    gamma_factor,
    n1_asymptotic,
    n1_transition,
    ou_kernel_params,
    ou_transition,
)

from conftest import ODD_PARAMS

P = ODD_PARAMS
S0, OM, D = P.sigma0, P.omega, P.D


def _line(n=40001, L=12.0):
    x = np.linspace(-L * S0, L * S0, n)
    return x, (x[-1] - x[0]) / (n - 1)


def test_kernel_params_limits():
    k = ou_kernel_params(1.5 * S0, 1e-12 / OM, 0.0, P)
    assert k.sigma2 == pytest.approx(0.0, abs=1e-10 * S0**2)
    k = ou_kernel_params(1.5 * S0, 60 / OM, 0.0, P)
    assert k.sigma2 == pytest.approx(S0**2, rel=1e-14)
    assert abs(k.alpha) < 1e-20


def test_ou_rejects_non_positive_elapsed_time():
    with pytest.raises(DomainError):
        ou_transition(0.0, 1.0, 0.3, 1.0, P)


@pytest.mark.parametrize("t", [0.05, 0.3, 1.0, 4.0])
def test_ou_normalised_with_kernel_moments(t):
    x, h = _line()
    x0 = 1.3 * S0
    p = ou_transition(x, t / OM, x0, 0.0, P)
    k = ou_kernel_params(x0, t / OM, 0.0, P)
    assert h * p.sum() == pytest.approx(1.0, abs=1e-12)
    mean = h * np.sum(x * p)
    assert mean == pytest.approx(k.alpha, abs=1e-12 * S0)
    assert h * np.sum((x - mean) ** 2 * p) == pytest.approx(k.sigma2, rel=1e-10)


def test_ou_long_time_is_ground_state_density():
    x, _ = _line(2001)
    np.testing.assert_allclose(ou_transition(x, 40 / OM, 2 * S0, 0.0, P), ho_eigenfunction(0, x, P) ** 2,
                               atol=1e-14 / S0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 4), st.floats(-2, 2))
def test_ou_solves_fokker_planck_pointwise(x, t, x0):
    # d_t p = -d_x(v p) + D p'' with v = -omega x, by central differences
    x, t, x0 = x * S0, t / OM, x0 * S0
    e, et = 1e-4 * S0, 1e-5 / OM
    p = lambda xx, tt: ou_transition(np.asarray(xx), tt, x0, 0.0, P)
    dpdt = (p(x, t + et) - p(x, t - et)) / (2 * et)
    flux = lambda xx: -OM * xx * p(xx, t)
    rhs = -(flux(x + e) - flux(x - e)) / (2 * e) + D * (p(x + e, t) - 2 * p(x, t) + p(x - e, t)) / e**2
    scale = 1.0 / (S0 * (t * OM) ** 1.5 + S0) * OM
    assert abs(dpdt - rhs) < 1e-5 * scale * 10


def test_n1_rejects_source_on_node():
    with pytest.raises(DomainError):
        n1_transition(1.0, 1.0, 0.0, 0.0, P)


@pytest.mark.parametrize("x0", [0.3, 1.0, -2.2])
@pytest.mark.parametrize("t", [0.01, 0.3, 1.0, 6.0])
def test_n1_half_line_normalisation_and_support(x0, t):
    x, h = _line()
    p = n1_transition(x, t / OM, x0 * S0, 0.0, P)
    assert np.all(p >= 0)
    assert np.all(p[x * x0 <= 0] == 0)
    assert h * p.sum() == pytest.approx(1.0, abs=1e-9)


def test_n1_parity():
    x = np.linspace(-5, 5, 101) * S0
    np.testing.assert_allclose(n1_transition(-x, 0.7 / OM, -0.9 * S0, 0.0, P),
                               n1_transition(x, 0.7 / OM, 0.9 * S0, 0.0, P), rtol=1e-14)


def test_n1_long_time_limit():
    x = np.linspace(-5, 5, 101) * S0
    expected = np.where(x > 0, 2 * ho_eigenfunction(1, x, P) ** 2, 0.0)
    np.testing.assert_allclose(n1_transition(x, 40 / OM, 0.9 * S0, 0.0, P), expected, atol=1e-14 / S0)


def test_n1_stable_at_late_and_early_times():
    x = np.array([1e-8, 0.5, 3.0]) * S0
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        late = n1_transition(x, 400 / OM, 0.5 * S0, 0.0, P)
        early = n1_transition(x, 1e-9 / OM, 0.5 * S0, 0.0, P)
    assert np.all(np.isfinite(late)) and np.all(np.isfinite(early))


@pytest.mark.parametrize("t", [1e-4, 1e-3])
def test_n1_concentrates_at_source(t):
    x0 = 1.1 * S0
    x = np.linspace(1e-6, 3 * S0, 200001)
    h = x[1] - x[0]
    p = n1_transition(x, t / OM, x0, 0.0, P)
    mean = h * np.sum(x * p)
    var = h * np.sum((x - mean) ** 2 * p)
    assert mean == pytest.approx(x0, abs=5 * t * OM * S0)
    assert var < 3 * 2 * D * t / OM


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3), st.floats(0.1, 4), st.floats(0.2, 2))
def test_n1_solves_fokker_planck_on_half_line(x, t, x0):
    x, t, x0 = x * S0, t / OM, x0 * S0
    v = ho_velocity(1, P)
    e, et = 1e-4 * S0, 1e-5 / OM
    p = lambda xx, tt: n1_transition(np.asarray(xx), tt, x0, 0.0, P)
    dpdt = (p(x, t + et) - p(x, t - et)) / (2 * et)
    flux = lambda xx: v(np.asarray(xx)) * p(xx, t)
    rhs = -(flux(x + e) - flux(x - e)) / (2 * e) + D * (p(x + e, t) - 2 * p(x, t) + p(x - e, t)) / e**2
    assert abs(dpdt - rhs) < 1e-4 * OM / S0 * (1 + 1 / (t * OM) ** 1.5)


@pytest.mark.parametrize("q, x, expected", [(1.0, -3.0, 1.0), (1.0, 2.0, 1.0), (2.0, 1.0, 2.0), (2.0, -1.0, 0.0),
                                            (0.6, -1.0, 1.4)])
def test_gamma_factor_values(q, x, expected):
    assert gamma_factor(q, x) == expected


def test_gamma_factor_domain():
    for q in (-0.1, 2.1):
        with pytest.raises(DomainError):
            gamma_factor(q, 1.0)


def test_n1_asymptotic_examples():
    g = make_grid([-10 * S0, 0.0, 10 * S0], 4000)
    even = g.map(lambda x: ho_eigenfunction(0, x, P) ** 2)
    np.testing.assert_allclose(n1_asymptotic(even, P).values, ho_eigenfunction(1, g.x, P) ** 2, rtol=1e-9)
    right = g.map(lambda x: np.where(x > 0, 2 * ho_eigenfunction(0, x, P) ** 2, 0.0))
    np.testing.assert_allclose(n1_asymptotic(right, P).values,
                               np.where(g.x > 0, 2, 0) * ho_eigenfunction(1, g.x, P) ** 2, atol=1e-9)
    skew = g.map(lambda x: np.where(x > 0, 1.4, 0.6) * ho_eigenfunction(0, x, P) ** 2)
    np.testing.assert_allclose(n1_asymptotic(skew, P).values,
                               gamma_factor(1.4, g.x) * ho_eigenfunction(1, g.x, P) ** 2, rtol=1e-9)


def _composition_l1(kernel, x0, t1, t2, L=9.0, n=1801):
    g = make_grid([-L * S0, 0.0, L * S0], n)
    f1 = g.map(lambda x: kernel(x, t1, x0))
    f2 = chapman_kolmogorov(lambda x, y: kernel(x, t2, y), f1)
    return l1_distance(f2, g.map(lambda x: kernel(x, t1 + t2, x0)))


def test_ou_semigroup_composition():
    k = lambda x, t, y: ou_transition(x, t / OM, y, 0.0, P)
    assert _composition_l1(k, 1.2 * S0, 0.4, 0.6) <= 1e-4


def test_n1_semigroup_composition():
    k = lambda x, t, y: n1_transition(x, t / OM, y, 0.0, P)
    assert _composition_l1(k, 0.8 * S0, 0.5, 0.5) <= 1e-4


def test_unit_params_reduce_to_textbook_form():
    # with sigma0 = omega = 1 the kernel variance is 1 - e^{-2t}
    k = ou_kernel_params(2.0, 0.5, 0.0, UNIT_PARAMS)
    assert k.sigma2 == pytest.approx(1 - math.exp(-1.0))
    assert k.alpha == pytest.approx(2 * math.exp(-0.5))
