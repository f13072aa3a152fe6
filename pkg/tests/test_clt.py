from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sir_asymptotics.clt import (ADJUDICATED_VARIANT, CANDIDATE_VARIANTS, VARIANTS, Method, SumCltMoments,
                                 arcsine_term, bare_variance, check_profile_condition, log_sum_moments,
                                 edge_term, equal_power_moments, load_adjudication, mu_equal_power,
                                 mu_equal_power_candidates, mu_general, rho_equal_power,
                                 rho_equal_power_candidates, rho_general, sum_clt_moments, trace_mean_real_axis,
                                 trace_mean_residue, trace_variance_contour, trace_variance_residues)
from sir_asymptotics.errors import ContourError
from sir_asymptotics.model import make_power_profile
from sir_asymptotics.spectral import mp_edges, solve_b

D1 = make_power_profile([(1, 1)])
TWO = make_power_profile([(1, 0.5), (4, 0.5)])
ZERO = make_power_profile([(0, 1)])

small_profiles = st.lists(st.tuples(st.sampled_from([0.5, 1.0, 2.0, 4.0, 8.0]), st.floats(0.1, 1.0)),
                          min_size=2, max_size=3).map(make_power_profile)


def test_equal_power_candidate_values():
    r = rho_equal_power_candidates(1.0, 1.0, 1.0)
    assert r["bare"] == pytest.approx(0.08)
    assert r["power_weight"] == pytest.approx(1.28)
    assert r["resolvent_weight"] == pytest.approx(0.548328157, rel=1e-8)
    assert r["noise_scaled"] == pytest.approx(r["resolvent_weight"])  # sigma2 = p = 1
    assert rho_equal_power(1.0, 1.0, 1.0) == r[ADJUDICATED_VARIANT]
    # at sigma2 = 2 the weights separate
    r2 = rho_equal_power_candidates(0.5, 1.0, 2.0)
    assert r2["noise_scaled"] == pytest.approx(4 * r2["resolvent_weight"])


@pytest.mark.parametrize("p, s2", [(1, 1), (2, 0.5), (0.5, 3)])
def test_small_load_limit(p, s2):
    for v, val in rho_equal_power_candidates(1e-8, p, s2).items():
        assert val / 1e-8 == pytest.approx(rho_equal_power_candidates(2e-8, p, s2)[v] / 2e-8, rel=1e-6)
    for c in (1e-6, 1e-8):
        assert abs(mu_equal_power(c, p, s2)) < 10 * c


@given(st.floats(0.05, 4), st.floats(0.1, 4), st.floats(0.2, 5))
def test_power_rescaling(c, s2, p):
    a = rho_equal_power_candidates(c, p, s2)
    b = rho_equal_power_candidates(c, 1.0, s2 / p)
    for v in ("bare", "resolvent_weight", "noise_scaled"):
        assert a[v] == pytest.approx(b[v], rel=1e-10)
    assert a["power_weight"] == pytest.approx(b["power_weight"] * ((1 + p) / 2) ** 4, rel=1e-10)
    assert mu_equal_power(c, p, s2) == pytest.approx(mu_equal_power(c, 1.0, s2 / p), rel=1e-10)


@given(st.floats(0.01, 9), st.floats(0.05, 10))
def test_arcsine_term_closed_form(c, s):
    exact = 0.5 / math.sqrt((1 + c + s) ** 2 - 4 * c)
    assert arcsine_term(c, s) == pytest.approx(exact, rel=1e-11)


def test_arcsine_term_example_point():
    # c = 1, s = 1: (1/2pi) int dtheta / (3 + 2 sin theta) over a half period
    assert arcsine_term(1.0, 1.0) == pytest.approx(0.5 / math.sqrt(5), rel=1e-13)


def test_edge_term_symmetric():
    lo, hi = mp_edges(0.3)
    assert edge_term(0.3, 1.0) == pytest.approx(-0.25 / (hi + 1) - 0.25 / (lo + 1))


def test_trace_variance_equal_power_is_bare():
    for c, s in [(1, 1), (0.5, 1), (0.5, 2), (3, 0.2)]:
        v, diag = trace_variance_contour(c, D1, s)
        assert v == pytest.approx(bare_variance(c, s), rel=1e-12)
        b = solve_b(c, D1, s)
        (ma,) = diag["roots"]
        # the two roots of s m^2 + (s + c - 1) m - 1 = 0
        assert ma.real * b == pytest.approx(-1 / s, rel=1e-12)
        assert ma.real + b == pytest.approx(-(s + c - 1) / s, rel=1e-12)


@settings(max_examples=15)
@given(st.floats(0.05, 3), small_profiles, st.floats(0.2, 3))
def test_contour_matches_residues(c, H, s2):
    v, _ = trace_variance_contour(c, H, s2)
    assert v == pytest.approx(trace_variance_residues(c, H, s2), rel=1e-10, abs=1e-14)
    assert v >= 0


@pytest.mark.parametrize("scale", [0.8, 1.2])
def test_contour_radius_invariance(scale):
    for H, c, s in [(D1, 1.0, 1.0), (TWO, 0.5, 1.0), (make_power_profile([(2, 1)]), 0.3, 0.5)]:
        base = trace_variance_contour(c, H, s)[0]
        moved = trace_variance_contour(c, H, s, radius_scale=(scale, scale))[0]
        assert moved == pytest.approx(base, rel=1e-8)


def test_contour_classification_guard():
    with pytest.raises(ContourError):
        trace_variance_contour(1.0, D1, 1.0, radius_scale=(1.0, 1.8))  # outer circle swallows b
    with pytest.raises(ContourError):
        trace_variance_contour(1.0, D1, 1.0, radius_scale=(2.5, 1.0))


@settings(max_examples=6)
@given(st.floats(0.05, 3), small_profiles, st.floats(0.2, 3))
def test_real_axis_mean_matches_residue(c, H, s2):
    assert trace_mean_real_axis(c, H, s2) == pytest.approx(trace_mean_residue(c, H, s2), rel=1e-9, abs=1e-12)


def test_real_axis_mean_equal_power_closed_form():
    # E tr (SS^T + I)^{-1} - N b_N at c = 1, sigma2 = 1
    assert trace_mean_real_axis(1.0, D1, 1.0) == pytest.approx(0.0763932022500210, rel=1e-12)


def test_quadrature_stability():
    a = trace_mean_real_axis(0.5, TWO, 1.0, nodes=1024, refine=False)
    b = trace_mean_real_axis(0.5, TWO, 1.0, nodes=2048, refine=False)
    assert a == pytest.approx(b, rel=1e-6)
    r1 = rho_general(0.5, TWO, 1.0).rho
    r2 = rho_general(0.5, TWO, 1.0, radius_scale=(0.9, 0.9)).rho
    assert r1 == pytest.approx(r2, rel=1e-6)


@pytest.mark.parametrize("c, s2, p", [(0.5, 1.0, 1.0), (1.0, 1.0, 2.0), (2.0, 0.5, 0.5), (0.25, 2.0, 3.0)])
def test_route_equivalence(c, s2, p):
    H = make_power_profile([(p, 1)])
    assert rho_general(c, H, s2).rho == pytest.approx(rho_equal_power(c, p, s2), rel=1e-6)
    assert mu_general(c, H, s2) == pytest.approx(mu_equal_power(c, p, s2), rel=1e-5)
    # the unscaled weight Var/a^2 does not survive sigma2 -> sigma2/p; it picks up 1/p^2
    lit = rho_general(c, H, s2, variant="resolvent_weight").rho
    assert lit * p * p == pytest.approx(rho_equal_power(c, p, s2, "resolvent_weight"), rel=1e-6)


def test_zero_profile():
    m = sum_clt_moments(1.0, ZERO, 1.0)
    assert (m.mu, m.rho) == (0.0, 0.0)
    assert mu_general(1.0, ZERO, 1.0) == 0.0
    assert rho_general(1.0, ZERO, 1.0).rho == 0.0
    assert log_sum_moments(1.0, ZERO, 1.0, 0.0, 0.3) == (0.0, 0.3)


def test_small_load_general():
    m = sum_clt_moments(1e-6, TWO, 1.0)
    assert abs(m.mu) < 1e-4 and m.rho < 1e-4


def test_dispatch():
    assert sum_clt_moments(1.0, D1, 1.0).method is Method.CLOSED_FORM_EQUAL_POWER
    m = sum_clt_moments(0.5, TWO, 1.0)
    assert m.method is Method.CONTOUR_QUADRATURE
    assert m.rho > 0 and math.isfinite(m.mu)
    with pytest.raises(ValueError):
        sum_clt_moments(1.0, D1, 1.0, variant="nonsense")
    with pytest.raises(ValueError):
        rho_general(1.0, D1, 1.0, variant="power_weight")
    with pytest.raises(ValueError):
        SumCltMoments(0.0, -1.0, Method.CONTOUR_QUADRATURE)


def test_equal_power_diagnostics_carry_all_candidates():
    m = equal_power_moments(0.5, 1.0, 2.0)
    assert set(m.diagnostics["rho_candidates"]) == set(VARIANTS)
    assert set(m.diagnostics["mu_candidates"]) == set(VARIANTS)
    assert m.mu == mu_equal_power_candidates(0.5, 1.0, 2.0)[ADJUDICATED_VARIANT]


@given(st.floats(0.05, 4), st.floats(0.1, 4), st.floats(0.2, 5))
def test_profile_condition_holds_for_equal_power(c, s2, p):
    d = check_profile_condition(c, make_power_profile([(p, 1)]), s2)
    assert d["pass"]
    assert max(d["residuals"]) <= 1e-14 * max(1.0, p * p)


def test_profile_condition_two_atoms():
    d = check_profile_condition(0.5, TWO, 1.0)
    b = solve_b(0.5, TWO, 1.0)
    a = 0.5 / (1 + b) ** 2 + 0.5 / (1 + 4 * b) ** 2
    r1 = 0.5 / (1 + b) ** 2 + 2.0 / (1 + 4 * b) ** 2 - 2.5 * a
    assert d["residuals"][0] == pytest.approx(abs(r1), rel=1e-12)
    assert not d["pass"]
    assert check_profile_condition(1.0, ZERO, 1.0) == {"pass": True, "residuals": [0.0, 0.0]}


def test_log_sum_equal_power():
    c, s2 = 1.0, 1.0
    m = sum_clt_moments(c, D1, s2)
    mu1, rho1 = log_sum_moments(c, D1, s2, m.mu, m.rho)
    b = solve_b(c, D1, s2)
    assert rho1 == pytest.approx(m.rho / (1 + b) ** 2)
    assert mu1 == pytest.approx(0.0472135955, rel=1e-8)


@given(st.floats(0.05, 3), st.floats(0.1, 4))
def test_rho1_below_rho(c, s2):
    m = sum_clt_moments(c, D1, s2)
    _, rho1 = log_sum_moments(c, D1, s2, m.mu, m.rho)
    assert 0 <= rho1 <= m.rho


def test_adjudication_fixture():
    rec = load_adjudication()
    assert rec["selected"] == ADJUDICATED_VARIANT
    assert rec["rho_fit_everywhere"] == [ADJUDICATED_VARIANT]
    assert not set(rec["rho_fit_everywhere"]) & set(CANDIDATE_VARIANTS)
    for pt in rec["points"]:
        now = equal_power_moments(pt["c"], 1.0, pt["sigma2"]).diagnostics
        for v in VARIANTS:
            assert pt["candidates"][v]["rho"] == pytest.approx(now["rho_candidates"][v], rel=1e-12)
            assert pt["candidates"][v]["mu"] == pytest.approx(now["mu_candidates"][v], rel=1e-12)
        assert pt["candidates"][ADJUDICATED_VARIANT]["rho_fits"]
        assert pt["candidates"][ADJUDICATED_VARIANT]["mu_fits"]
