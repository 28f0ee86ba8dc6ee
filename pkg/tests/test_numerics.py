from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from binfir import numerics
from binfir.exceptions import DomainError
from binfir.numerics import (
    EXACT_ONE_SIGMA_TAIL,
    GaussianParams,
    build_table,
    default_table,
    f_correlation,
    h_correlation,
    orthant_integral,
    orthant_oracle,
    std_normal_cdf,
    truncated_gaussian_mean,
)


def kappa_to_rho(k):
    return k / math.sqrt(1.0 + k * k)


def test_normal_cdf_matches_scipy():
    for x in np.linspace(-8, 8, 41):
        assert std_normal_cdf(x) == pytest.approx(stats.norm.cdf(x), rel=1e-12, abs=1e-300)


def test_exact_tail_is_one_minus_phi_of_one():
    assert EXACT_ONE_SIGMA_TAIL == pytest.approx(stats.norm.sf(1.0), rel=1e-14)
    assert numerics.PAPER_ONE_SIGMA_TAIL == 0.1587


def test_gaussian_params_rejects_nonpositive_variance():
    with pytest.raises(DomainError):
        GaussianParams(0.0, 0.0)


def test_pdf_matches_scipy():
    p = GaussianParams(1.0, 2.0)
    for u in (-3.0, 0.0, 1.0, 4.5):
        assert numerics.gaussian_pdf(u, p) == pytest.approx(stats.norm.pdf(u, 1.0, math.sqrt(2.0)), rel=1e-12)


@pytest.mark.parametrize("c", [-5.0, 0.0, 1.0, 2.0, 6.0, 20.0, 40.0])
def test_truncated_mean_matches_scipy_truncnorm(c):
    p = GaussianParams(1.0, 1.0)
    expected = stats.truncnorm(c - 1.0, np.inf, loc=1.0, scale=1.0).mean()
    assert truncated_gaussian_mean(p, c) == pytest.approx(expected, rel=1e-9)


def test_truncated_mean_far_tail_is_finite_and_close_to_threshold():
    # E[u | u > c] ~ c + 1/c in the far tail
    p = GaussianParams(0.0, 1.0)
    val = truncated_gaussian_mean(p, 50.0)
    assert math.isfinite(val)
    assert val == pytest.approx(50.0 + 1.0 / 50.0, abs=1e-4)


def test_orthant_oracle_known_values():
    assert orthant_oracle(0.0) == 0.25
    assert orthant_oracle(1.0) == pytest.approx(0.5)
    assert orthant_oracle(-1.0) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        orthant_oracle(1.5)


@given(st.floats(-200, 200, allow_nan=False))
@settings(max_examples=80, deadline=None)
def test_quadrature_matches_oracle(k):
    assert orthant_integral(k) == pytest.approx(orthant_oracle(kappa_to_rho(k)), abs=1e-9)


def test_quadrature_against_bivariate_normal_cdf():
    # independent route: P(X>0, Y>0) = P(-X<0, -Y<0) from scipy's mvn cdf
    for rho in (-0.9, -0.3, 0.0, 0.5, 0.95):
        k = rho / math.sqrt(1 - rho * rho)
        mvn = stats.multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]])
        assert orthant_integral(k) == pytest.approx(mvn.cdf([0, 0]), abs=1e-6)


def test_f_correlation_examples():
    p = GaussianParams(1.0, 1.0)
    assert f_correlation(0.0, 1.4, p) == pytest.approx(0.25, abs=1e-12)
    assert f_correlation(2.0, 1.0, p) == 0.5
    assert f_correlation(-2.0, 1.0, p) == 0.0
    # boundary belongs to the saturated branch
    assert f_correlation(1.0, 1.0, p) == 0.5
    assert f_correlation(-1.0, 1.0, p) == 0.0
    with pytest.raises(DomainError):
        f_correlation(0.1, 0.0, p)


def test_f_paper_system_values_match_oracle():
    p = GaussianParams(1.0, 1.0)
    vy = 0.2**2 + 0.2**2 + 0.6**2 + 1.0
    for b in (0.2, -0.2, 0.6):
        rho = b / math.sqrt(vy)
        assert f_correlation(b, vy, p) == pytest.approx(orthant_oracle(rho), abs=1e-10)
        assert f_correlation(b, vy, p, default_table()) == pytest.approx(orthant_oracle(rho), abs=1e-6)


def test_h_reduces_to_f_at_true_thresholds():
    p = GaussianParams(1.0, 1.0)
    vy = 1.44
    for b in np.linspace(-1.1, 1.1, 23):
        assert h_correlation(0.6, 1.8, 1.0, 2.0, b) == pytest.approx(f_correlation(b, vy, p), abs=1e-12)


def test_h_degenerate_thresholds():
    with pytest.raises(DomainError):
        h_correlation(1.0, 1.0, 0.0, 1.0, 0.1)
    with pytest.raises(DomainError):
        h_correlation(0.0, 1.0, 2.0, 2.0, 0.1)


def test_h_is_symmetric_in_threshold_order():
    # only squared threshold gaps enter
    assert h_correlation(0.6, 1.8, 1.0, 2.0, 0.3) == pytest.approx(h_correlation(1.8, 0.6, 2.0, 1.0, 0.3))


@given(
    b=st.floats(-3, 3, allow_nan=False),
    vy=st.floats(0.05, 10),
    var_u=st.floats(0.05, 10),
)
@settings(max_examples=100, deadline=None)
def test_table_matches_oracle_everywhere(b, vy, var_u):
    p = GaussianParams(0.0, var_u)
    rho = float(np.clip(b * math.sqrt(var_u) / math.sqrt(vy), -1, 1))
    assert f_correlation(b, vy, p, default_table()) == pytest.approx(orthant_oracle(rho), abs=1e-6)


@given(st.floats(-19.9, 19.9))
@settings(max_examples=60, deadline=None)
def test_kernel_lookup_matches_python_lookup(k):
    lo, step, values = numerics.kernel_table(default_table())
    glx, glw = numerics.gl_nodes()
    got = numerics._g_lookup(k, lo, step, values, glx, glw)
    assert got == pytest.approx(numerics.table_lookup(default_table(), k), abs=1e-12)


@pytest.mark.parametrize("k", [-1e4, -300.0, -25.0, 0.0, 0.5, 3.0, 25.0, 300.0, 1e4])
def test_kernel_quadrature_fallback_matches_oracle(k):
    glx, glw = numerics.gl_nodes()
    got = numerics._g_lookup(k, 1.0, 1.0, np.zeros(0), glx, glw)
    assert got == pytest.approx(orthant_oracle(kappa_to_rho(k)), abs=1e-9)


def test_table_structure():
    table = default_table()
    assert table.is_uniform()
    assert table.lo == -20.0 and table.hi == 20.0
    assert np.all(np.diff(table.values) >= 0)
    assert not table.values.flags.writeable
    assert numerics.kernel_table(None)[2].size == 0


def test_table_validation():
    with pytest.raises(DomainError):
        build_table(points=1)
    with pytest.raises(DomainError):
        build_table(lo=1.0, hi=1.0)
    with pytest.raises(DomainError):
        numerics.CorrelationTable(np.array([0.0, 1.0]), np.array([0.3, 0.2]))
    nonuniform = numerics.CorrelationTable(np.array([0.0, 1.0, 3.0]), np.array([0.25, 0.3, 0.4]))
    with pytest.raises(DomainError):
        numerics.kernel_table(nonuniform)


def test_small_table_outside_range_falls_back():
    table = build_table(-1.0, 1.0, 21)
    assert numerics.table_lookup(table, 5.0) == pytest.approx(orthant_oracle(kappa_to_rho(5.0)), abs=1e-9)


@given(
    vy=st.floats(0.1, 10),
    var_u=st.floats(0.1, 10),
    b1=st.floats(-1, 1),
    b2=st.floats(-1, 1),
)
@settings(max_examples=100, deadline=None)
def test_f_monotone_in_b(vy, var_u, b1, b2):
    p = GaussianParams(0.0, var_u)
    bound = math.sqrt(vy / var_u)
    lo, hi = sorted((b1 * bound * 0.999, b2 * bound * 0.999))
    if hi - lo < 1e-6:
        return
    assert f_correlation(lo, vy, p) < f_correlation(hi, vy, p)


def test_cdf_derivative_is_pdf():
    h = 1e-5
    p = GaussianParams(0.0, 1.0)
    for x in np.linspace(-5, 5, 101):
        deriv = (std_normal_cdf(x + h) - std_normal_cdf(x - h)) / (2 * h)
        assert deriv == pytest.approx(numerics.gaussian_pdf(x, p), abs=1e-6)


@given(mean=st.floats(-5, 5), var=st.floats(0.01, 10), c1=st.floats(-30, 30), c2=st.floats(-30, 30))
@settings(max_examples=100, deadline=None)
def test_truncated_mean_exceeds_threshold_and_is_monotone(mean, var, c1, c2):
    p = GaussianParams(mean, var)
    lo, hi = sorted((c1, c2))
    assert truncated_gaussian_mean(p, lo) > lo
    assert truncated_gaussian_mean(p, lo) <= truncated_gaussian_mean(p, hi) + 1e-12


@given(b=st.floats(-3, 3), vy=st.floats(0.01, 10), var_u=st.floats(0.01, 10))
@settings(max_examples=100, deadline=None)
def test_f_range(b, vy, var_u):
    assert 0.0 <= f_correlation(b, vy, GaussianParams(0.0, var_u)) <= 0.5
