from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sir_asymptotics.limits import (FluctuationLaw, ks_against_limit, levy_distance, fluctuation_covariance,
                                    limiting_sir_distribution)
from sir_asymptotics.model import SirRealization, make_power_profile
from sir_asymptotics.spectral import solve_b, stieltjes_m

D1 = make_power_profile([(1, 1)])
TWO = make_power_profile([(1, 0.5), (4, 0.5)])


def test_gaussian_coefficient_is_twice_m_prime():
    law = fluctuation_covariance(0.5, TWO, 1.0, 3.0, powers=[1, 4])
    assert law.variance_coefficient == pytest.approx(2 * stieltjes_m(-1.0, 0.5, TWO).m_prime.real)
    assert law.per_user_variance == pytest.approx(law.variance_coefficient * np.array([1, 16]))
    C = law.covariance()
    assert C[0, 1] == 0 and C[1, 0] == 0


def test_rademacher_coefficient():
    b = solve_b(1, D1, 1)
    mp = stieltjes_m(-1, 1, D1).m_prime.real
    assert fluctuation_covariance(1, D1, 1, 1.0).variance_coefficient == pytest.approx(2 * mp - 2 * b * b)


@pytest.mark.parametrize("m4", [1.0, 1.8, 3.0, 9.0])
def test_small_load_limit(m4):
    s2 = 0.7
    coef = fluctuation_covariance(1e-7, D1, s2, m4).variance_coefficient
    assert coef == pytest.approx((m4 - 1) / s2**2, rel=1e-5, abs=1e-6)


def test_rejects_impossible_fourth_moment():
    with pytest.raises(ValueError):
        fluctuation_covariance(1, D1, 1, 0.5)


@given(st.floats(0.05, 3), st.floats(0.1, 4), st.floats(0.2, 5), st.floats(1, 9))
def test_power_rescaling(c, s2, p, m4):
    a = fluctuation_covariance(c, make_power_profile([(p, 1)]), s2, m4).variance(p)
    b = fluctuation_covariance(c, D1, s2 / p, m4).variance_coefficient
    assert a == pytest.approx(b, rel=1e-8)


@given(st.floats(0.05, 3), st.floats(0.1, 4), st.sampled_from([1.0, 1.8, 3.0]))
def test_coefficient_nonnegative(c, s2, m4):
    assert fluctuation_covariance(c, TWO, s2, m4).variance_coefficient >= 0


def test_limit_distribution_atoms():
    b = solve_b(0.5, TWO, 1.0)
    assert np.ravel(limiting_sir_distribution(0.5, TWO, 1.0)) == pytest.approx([b, 0.5, 4 * b, 0.5])
    assert limiting_sir_distribution(2.0, make_power_profile([(3, 1)]), 1.0) == ((3 * solve_b(2.0, make_power_profile([(3, 1)]), 1.0), 1.0),)
    assert limiting_sir_distribution(1.0, make_power_profile([(0, 1)]), 1.0) == ((0.0, 1.0),)


@given(st.floats(0.05, 3), st.floats(0.1, 4))
def test_limit_mean_is_pushforward_mean(c, s2):
    b = solve_b(c, TWO, s2)
    G = limiting_sir_distribution(c, TWO, s2)
    assert sum(x * w for x, w in G) == pytest.approx(b * TWO.expect(lambda x: x))


def test_ks_exact_cases():
    assert ks_against_limit(np.full(10, 0.7), ((0.7, 1.0),)) == 0.0
    G = ((1.0, 0.25), (2.0, 0.75))
    assert ks_against_limit([1, 2, 2, 2], G) == 0.0
    assert ks_against_limit(SirRealization(np.array([1.0, 2, 2, 2]), 0.0, 0.0), G) == 0.0
    # all mass slightly below the atom: sup distance is 1 just before it
    assert ks_against_limit([0.999] * 4, ((1.0, 1.0),)) == 1.0
    assert ks_against_limit([1, 1, 2, 2], G) == pytest.approx(0.25)


def test_ks_against_brute_force():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 3, 50)
    G = ((0.5, 0.3), (1.5, 0.2), (2.5, 0.5))
    grid = np.sort(np.concatenate([x, [0.5, 1.5, 2.5], np.linspace(-1, 4, 20001)]))
    grid = np.concatenate([grid, grid - 1e-12])
    ecdf = np.searchsorted(np.sort(x), grid, side="right") / x.size
    gcdf = sum(w * (grid >= a) for a, w in G)
    assert ks_against_limit(x, G) == pytest.approx(np.max(np.abs(ecdf - gcdf)), abs=1e-12)


def test_levy_distance():
    assert levy_distance([1.0, 1.0], ((1.0, 1.0),)) == 0.0
    # shifting all samples by 0.01 costs exactly a horizontal 0.01
    assert levy_distance([1.01] * 8, ((1.0, 1.0),)) == pytest.approx(0.01, abs=1e-6)
    # a far-off half of the samples costs a vertical 0.5
    assert levy_distance([1.0] * 4 + [10.0] * 4, ((1.0, 1.0),)) == pytest.approx(0.5, abs=1e-6)
    # Levy never exceeds the sup distance
    rng = np.random.default_rng(1)
    x = rng.normal(1, 0.05, 200)
    assert levy_distance(x, ((1.0, 1.0),)) <= ks_against_limit(x, ((1.0, 1.0),))


def test_fluctuation_law_helpers():
    law = FluctuationLaw(2.0, (1.0, 3.0))
    assert law.variance(3.0) == 18.0
    assert law.covariance().tolist() == [[2.0, 0.0], [0.0, 18.0]]
