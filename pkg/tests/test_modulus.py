import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from api.errors import DomainError, PreconditionError, RangeError
from services.modulus import (
    BernsteinSpec,
    Modulus,
    ScalingCertificate,
    check_bernstein,
    check_scaling,
    estimate_indices,
    fit_scaling_certificate,
    invert,
    tail_bound,
    tail_integral,
)


# ===== EVALUATION =====

def test_power_eval():
    assert_allclose(Modulus.power(0.5)(0.25), 0.5, rtol=1e-15)


@pytest.mark.parametrize(
    "m",
    [
        Modulus.power(0.7),
        Modulus.power_log(0.5, 1.0),
        Modulus.power_log(0.5, 1.0, sign=-1),
        Modulus.power_log1p(0.4, 0.8),
    ],
)
def test_normalized_at_one(m):
    assert_allclose(m(1.0), 1.0, rtol=1e-14)


def test_product_eval():
    m = Modulus.product(Modulus.power(0.3), Modulus.power(0.4))
    assert_allclose(m(0.5), 0.5 ** 0.7, rtol=1e-14)
    assert_allclose(m(0.5), 0.61557, atol=1e-5)


def test_bar_and_times():
    psi = Modulus.power(0.5)
    assert_allclose(psi.bar()(0.25), 2.0, rtol=1e-14)
    assert psi.times(Modulus.power(1.2)).exact_indices() == pytest.approx((1.7, 1.7))


def test_eval_vectorized():
    r = np.array([0.25, 1.0, 4.0])
    assert_allclose(Modulus.power(0.5)(r), [0.5, 1.0, 2.0])


@pytest.mark.parametrize("r", [0.0, -1.0, float("nan")])
def test_eval_rejects_nonpositive(r):
    with pytest.raises(DomainError):
        Modulus.power(0.5)(r)


def test_eval_rejects_beyond_rmax():
    with pytest.raises(DomainError):
        Modulus.power_log(0.5)(1.5)


def test_psi_vanishes_at_zero():
    for m in (Modulus.power(0.1), Modulus.power_log(0.5), Modulus.power_log1p(0.4, 0.8)):
        assert m(2.0 ** -20) < m(2.0 ** -10)


def test_tabulated_log_log_interpolation():
    r = np.logspace(-6, 1, 50)
    m = Modulus.tabulated(r, r ** 0.5)
    assert_allclose(m(0.3), 0.3 ** 0.5, rtol=1e-10)
    with pytest.raises(DomainError):
        m(1e-7)
    with pytest.raises(DomainError):
        m(20.0)


def test_tabulated_rejects_nonpositive_samples():
    with pytest.raises(DomainError):
        Modulus.tabulated([0.1, 1.0, 2.0], [0.1, 0.0, 2.0])


# ===== INDICES =====

@pytest.mark.parametrize("alpha", [0.1, 0.5, 1.3])
@pytest.mark.parametrize("depth", [4, 20, 40])
def test_power_indices_exact(alpha, depth):
    interval = estimate_indices(Modulus.power(alpha), depth)
    assert interval.m == alpha and interval.M == alpha
    assert interval.depth == depth


def test_depth_precondition():
    with pytest.raises(PreconditionError):
        estimate_indices(Modulus.power_log(0.5), 3)


def test_power_log_indices_approach_alpha():
    psi = Modulus.power_log(0.5, 1.0)
    shallow = estimate_indices(psi, 20)
    deep = estimate_indices(psi, 40)
    assert 0.35 < shallow.m <= shallow.M < 0.5
    assert abs(deep.m - 0.5) < abs(shallow.m - 0.5)
    assert abs(deep.M - 0.5) < 0.05


def test_power_log1p_indices():
    interval = estimate_indices(Modulus.power_log1p(0.4, 0.8), 20)
    assert abs(interval.m - 1.2) < 0.05
    assert abs(interval.M - 1.2) < 0.05


def test_order_of_stable_indices():
    interval = estimate_indices(BernsteinSpec.stable(0.4).varphi, 20)
    assert_allclose([interval.m, interval.M], [0.8, 0.8], atol=1e-9)


def test_product_index_subadditivity():
    m1 = Modulus.power_log(0.5, 1.0)
    m2 = Modulus.power_log1p(0.4, 0.8)
    i1, i2 = estimate_indices(m1), estimate_indices(m2)
    ip = estimate_indices(Modulus.product(m1, m2))
    assert ip.m >= i1.m + i2.m - 1e-9
    assert ip.M <= i1.M + i2.M + 1e-9


def test_index_cache_is_write_once():
    psi = Modulus.power_log(0.5)
    assert estimate_indices(psi, 12) is estimate_indices(psi, 12)


# ===== BERNSTEIN FUNCTIONS =====

def test_varphi_identity(stable_log):
    r = np.logspace(-4, 4, 100)
    assert_allclose(stable_log.varphi(r) * stable_log.phi(r ** -2.0), 1.0, rtol=1e-12)


def test_stable_levy_density_reproduces_phi(stable_half):
    lam = 2.0

    def integrand(u):
        t = math.exp(u)
        return -math.expm1(-lam * t) * float(stable_half.levy_density(t)) * t

    value, _ = integrate.quad(integrand, -60.0, 60.0, limit=400, epsrel=1e-10)
    assert_allclose(value, stable_half.phi(lam), rtol=1e-6)


@pytest.mark.slow
def test_stable_log_levy_density_reproduces_phi(stable_log):
    lam = 3.0

    def integrand(u):
        t = math.exp(u)
        return -math.expm1(-lam * t) * float(stable_log.levy_density(t)) * t

    value, _ = integrate.quad(integrand, -27.0, 18.0, limit=400, epsrel=1e-8)
    assert_allclose(value, stable_log.phi(lam), rtol=1e-2)


def test_stable_rejects_alpha_out_of_range():
    with pytest.raises(DomainError):
        BernsteinSpec.stable(1.0)


def test_check_scaling_equality_case(stable_04):
    cert = ScalingCertificate(delta1=0.4, delta2=0.4)
    report = check_scaling(stable_04, cert, np.logspace(0, 3, 20), np.logspace(-3, 3, 20))
    assert report.holds
    assert abs(report.worst_margin) < 1e-12


def test_check_scaling_exponent_mismatch(stable_04):
    cert = ScalingCertificate(delta1=0.5, delta2=0.6)
    report = check_scaling(stable_04, cert, np.logspace(0, 3, 20), np.logspace(-3, 3, 20))
    assert not report.holds
    assert report.worst_margin < 0


def test_fitted_certificate_holds(stable_log):
    lam_grid, r_grid = np.logspace(0, 4, 40), np.logspace(-4, 4, 40)
    cert = fit_scaling_certificate(stable_log, lam_grid, r_grid, 0.29, 0.71)
    assert cert.a1 <= 1.0 <= cert.a2
    assert check_scaling(stable_log, cert, lam_grid, r_grid).holds


def test_certificate_validation():
    with pytest.raises(PreconditionError):
        ScalingCertificate(delta1=0.6, delta2=0.5)
    with pytest.raises(PreconditionError):
        ScalingCertificate(delta1=0.5, delta2=0.5, a1=1.5)


def test_bernstein_stable(stable_half):
    assert check_bernstein(stable_half, 6).alternating_signs_up_to == 6


def test_bernstein_square_fails_at_two():
    b = BernsteinSpec.custom(lambda lam: np.power(lam, 2.0))
    report = check_bernstein(b, 6)
    assert report.alternating_signs_up_to == 1
    assert report.first_violation[0] == 2


def test_bernstein_log():
    b = BernsteinSpec.custom(lambda lam: np.log1p(lam) / math.log(2.0))
    assert check_bernstein(b, 6).alternating_signs_up_to == 6


def test_bernstein_order_cap(stable_half):
    with pytest.raises(PreconditionError):
        check_bernstein(stable_half, 9)


# ===== INVERSION =====

def test_invert_square(stable_half):
    assert_allclose(invert(stable_half.phi, 2.0), 4.0, rtol=1e-12)
    assert_allclose(stable_half.phi_inverse(2.0), 4.0, rtol=1e-12)


def test_invert_fixed_point():
    assert_allclose(invert(Modulus.power_log(0.5), 1.0), 1.0, rtol=1e-12)


def test_invert_stable_log(stable_log):
    r = invert(stable_log.phi, 3.0)
    assert_allclose(stable_log.phi(r), 3.0, rtol=1e-12)


def test_invert_out_of_range():
    with pytest.raises(RangeError):
        invert(Modulus.power_log(0.5), 2.0)
    with pytest.raises(RangeError):
        invert(Modulus.power(0.5), -1.0)


@given(alpha=st.floats(0.1, 1.9), r=st.floats(1e-6, 1e3))
def test_invert_eval_roundtrip(alpha, r):
    m = Modulus.power(alpha)
    assert_allclose(invert(m, m(r)), r, rtol=1e-10)


# ===== TAIL INTEGRALS =====

@pytest.mark.parametrize("r", [0.01, 0.5, 2.0])
def test_tail_integral_linear(r):
    assert_allclose(tail_integral(Modulus.power(1.0), r), 1.0 / r, rtol=1e-7)


def test_tail_integral_power():
    assert_allclose(tail_integral(Modulus.power(0.8), 1.0), 1.25, rtol=1e-7)


def test_tail_integral_log_corrected():
    varphi = Modulus.power_log1p(0.8, 0.8)
    expected, _ = integrate.quad(lambda s: 1.0 / (s * varphi(s)), 0.5, np.inf, limit=400, epsrel=1e-10)
    assert_allclose(tail_integral(varphi, 0.5), expected, rtol=1e-5)


def test_tail_integral_requires_positive_index():
    with pytest.raises(PreconditionError):
        tail_integral(Modulus.power(-0.2), 1.0)


@pytest.mark.parametrize("r", [0.01, 0.3, 1.0, 7.0])
def test_tail_integral_below_bound(stable_04, r):
    cert = ScalingCertificate(delta1=0.4, delta2=0.4)
    assert tail_integral(stable_04.varphi, r) <= tail_bound(stable_04.varphi, r, cert) * (1.0 + 1e-6)
