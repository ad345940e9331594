import math

import numpy as np
import pytest

from voilab.analytics import (
    UnsupportedAnalyticsError,
    _fcfs_wait_integral,
    analyze,
    avg_voi_mg11,
    avg_voi_mg12,
    avg_voi_mg12star,
    closed_form_mg11_uniform_log,
    closed_form_mm12_exp,
    closed_form_report,
    residual_ccdf_mg12,
    stationary_mg11,
    stationary_mg12,
    v_tilde,
)
from voilab.model import (
    BinaryValue,
    ClassExponentialService,
    DependentService,
    DescendFunction,
    ExponentialValue,
    IndependentDeterministicService,
    IndependentExponentialService,
    MG11,
    MG12,
    MG12_STAR,
    Scenario,
    UniformValue,
    mean_service_time,
    one_minus_mgf_service,
)
from voilab.quadrature import QuadratureSpec, integrate, integrate_nested, integrate_to_inf

LIN3 = DescendFunction.linear(3.0)

# Reference constants, each verified against an independent scipy evaluation
# of the defining integral before being frozen here.
EQ_IDLE_MM = 0.3991785210827835
EQ_BUSY_MM = 0.2267551582769947
VOI_MM12 = {0.5: 0.16434123709907827, 1.0: 0.2606914547056326, 2.0: 0.3412793831929183}
EQ_BUSY_STAR_MM = {0.5: 0.19259180588276, 1.0: 0.16698767724957, 2.0: 0.13147162037614}
VOI_MG11_EXPID = 0.23950711264967015
ES_UNIFORM_LOG = 1.6376848000782074
VOI_UNIFLOG = 0.37991822772094264


def mm12(lam):
    return Scenario(lam, ExponentialValue(1.5), DependentService("identity"), LIN3, MG12)


def expid(lam, disc):
    return Scenario(lam, ExponentialValue(1.5), DependentService("identity"), LIN3, disc)


def uniflog(lam, disc=MG11):
    return Scenario(lam, UniformValue(0.0, 10.0), DependentService("log-shift", 1.0), LIN3, disc)


# ---------------------------------------------------------------------------
# v_tilde
# ---------------------------------------------------------------------------

def test_v_tilde_log_shift():
    sc = Scenario(1.0, ExponentialValue(1.5), DependentService("log-shift", 1.0), LIN3, MG11)
    assert v_tilde(sc) == pytest.approx(math.exp(3.0) - 1.0, rel=1e-12)


def test_v_tilde_identity():
    assert v_tilde(expid(1.0, MG11)) == pytest.approx(3.0)


def test_v_tilde_capped_at_upper_support():
    sc = Scenario(1.0, UniformValue(0, 10), DependentService("log-shift", 1.0), LIN3, MG11)
    assert v_tilde(sc) == 10.0


def test_v_tilde_rejects_independent_service():
    sc = Scenario(1.0, UniformValue(0, 10), IndependentExponentialService(1.5), LIN3, MG11)
    with pytest.raises(UnsupportedAnalyticsError):
        v_tilde(sc)


# ---------------------------------------------------------------------------
# Stationary probabilities
# ---------------------------------------------------------------------------

def test_stationary_mg11_symmetric_cycle():
    sc = Scenario(1.0, UniformValue(0, 10), IndependentDeterministicService(1.0), LIN3, MG11)
    p_idle, p_busy, t_cycle = stationary_mg11(sc)
    assert p_idle == pytest.approx(0.5)
    assert p_busy == pytest.approx(0.5)
    assert t_cycle == pytest.approx(2.0)


def test_stationary_mg11_empty_system_limit():
    sc = Scenario(1e-9, UniformValue(0, 10), IndependentDeterministicService(2.0), LIN3, MG11)
    p_idle, _, _ = stationary_mg11(sc)
    assert p_idle == pytest.approx(1.0, abs=1e-8)


def test_stationary_mg11_exponential_service():
    sc = Scenario(1.0, UniformValue(0, 10), IndependentExponentialService(1.5), LIN3, MG11)
    p_idle, p_busy, _ = stationary_mg11(sc)
    assert p_idle == pytest.approx(0.6, rel=1e-12)
    assert p_idle + p_busy == pytest.approx(1.0, abs=1e-12)


def test_stationary_mg12_reference_point():
    st = stationary_mg12(mm12(1.0))
    assert st.p_idle == pytest.approx(2.25 / 4.75, rel=1e-9)
    assert st.p_busy1 == pytest.approx(1.5 / 4.75, rel=1e-9)
    assert st.p_busy2 == pytest.approx(1.0 / 4.75, rel=1e-9)
    assert st.e_wait_b2 == pytest.approx(2.0 / 3.0 + 0.6 - 1.0, rel=1e-9)


def test_stationary_mg12_vanishing_buffer_at_low_rate():
    st = stationary_mg12(mm12(1e-9))
    assert st.p_busy2 <= 1e-15
    assert st.p_idle + st.p_busy == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("lam", [0.1, 0.7, 1.0, 3.3, 5.0])
def test_stationary_partitions_sum_to_one(lam):
    p_idle, p_busy, _ = stationary_mg11(
        Scenario(lam, UniformValue(0, 10), DependentService("log-shift", 1.0), LIN3, MG11)
    )
    assert p_idle + p_busy == pytest.approx(1.0, abs=1e-12)
    st = stationary_mg12(mm12(lam))
    assert st.p_idle + st.p_busy == pytest.approx(1.0, abs=1e-12)
    assert st.p_busy1 + st.p_busy2 == pytest.approx(st.p_busy, abs=1e-12)


# ---------------------------------------------------------------------------
# Residual service CCDF
# ---------------------------------------------------------------------------

def test_residual_ccdf_memoryless_service():
    sc = Scenario(1.0, UniformValue(0, 10), IndependentExponentialService(1.5), LIN3, MG12)
    assert residual_ccdf_mg12(sc, 1.0) == pytest.approx(math.exp(-1.5), rel=1e-12)


def test_residual_ccdf_one_at_zero():
    for sc in (mm12(1.0), uniflog(1.0, MG12)):
        assert residual_ccdf_mg12(sc, 0.0) == 1.0


def test_residual_ccdf_dependent_identity_matches_memoryless():
    # Exponential values through the identity map give exponential service,
    # so the quadrature route must reproduce exp(-mu w).
    sc = mm12(1.0)
    for w in (0.3, 1.0, 2.4):
        assert residual_ccdf_mg12(sc, w) == pytest.approx(math.exp(-1.5 * w), rel=1e-8)


def test_residual_ccdf_non_increasing_and_mean_bounded():
    # The CCDF values themselves carry ~1e-9 quadrature noise, so the outer
    # integral runs at a looser tolerance than the inner one.
    outer = QuadratureSpec(rel_tol=1e-6, abs_tol=1e-9)
    for sc in (uniflog(1.0, MG12), mm12(0.7)):
        grid = np.linspace(0.0, 3.0, 25)
        vals = [residual_ccdf_mg12(sc, float(w)) for w in grid]
        for a, b in zip(vals, vals[1:]):
            assert b <= a + 1e-10
        e_wait = integrate_to_inf(lambda w: residual_ccdf_mg12(sc, w), 0.0, outer)
        assert e_wait <= mean_service_time(sc) + 1e-6


def test_residual_ccdf_rejects_negative_argument():
    with pytest.raises(ValueError):
        residual_ccdf_mg12(mm12(1.0), -0.1)


# ---------------------------------------------------------------------------
# Bufferless discipline
# ---------------------------------------------------------------------------

def test_mg11_instant_service_full_triangle():
    sc = Scenario(1.0, UniformValue(0, 10), IndependentDeterministicService(0.0), LIN3, MG11)
    rep = avg_voi_mg11(sc)
    assert rep.avg_voi == pytest.approx(7.5, rel=1e-12)
    assert rep.p_idle == pytest.approx(1.0)


def test_mg11_service_beyond_deadline_collects_nothing():
    sc = Scenario(1.0, UniformValue(0, 10), IndependentDeterministicService(3.0), LIN3, MG11)
    assert avg_voi_mg11(sc).avg_voi == 0.0


def test_mg11_exponential_identity_reference():
    rep = avg_voi_mg11(expid(1.0, MG11))
    assert rep.p_idle == pytest.approx(0.6, rel=1e-9)
    assert rep.eq_idle == pytest.approx(EQ_IDLE_MM, rel=1e-9)
    assert rep.avg_voi == pytest.approx(VOI_MG11_EXPID, rel=1e-8)


def test_mg11_rejects_nonlinear_descend():
    sc = Scenario(
        1.0, UniformValue(0, 10), DependentService(), DescendFunction.power_convex(2.0, 3.0), MG11
    )
    with pytest.raises(UnsupportedAnalyticsError):
        avg_voi_mg11(sc)


# ---------------------------------------------------------------------------
# One-buffer FCFS
# ---------------------------------------------------------------------------

def test_mg12_matches_closed_form_triangle_points():
    for lam, expected in VOI_MM12.items():
        rep = avg_voi_mg12(mm12(lam))
        cf = closed_form_mm12_exp(1.5, lam, 3.0)
        assert rep.avg_voi == pytest.approx(cf.avg_voi, rel=1e-8)
        assert rep.avg_voi == pytest.approx(expected, rel=1e-8)


def test_mg12_vanishes_with_arrival_rate():
    rep = avg_voi_mg12(mm12(1e-6))
    assert rep.avg_voi == pytest.approx(0.0, abs=1e-6)
    assert rep.avg_voi > 0.0


def test_mg12_empty_region_when_service_exceeds_deadline():
    sc = Scenario(1.0, BinaryValue(5.0, 5.0, 0.5), DependentService("identity"), LIN3, MG12)
    assert avg_voi_mg12(sc).avg_voi == 0.0


def test_mg12_wait_integral_matches_literal_ccdf_route():
    # Dual route: the folded closed-form kernel against the textbook
    # integration-by-parts form int_0^d (d-w) P[W'>w] dw.  The CCDF carries
    # its own quadrature noise, so the outer level stays looser.
    loose = QuadratureSpec(rel_tol=1e-5, abs_tol=1e-8)
    for sc in (mm12(1.0), uniflog(0.8, MG12)):
        omm = one_minus_mgf_service(sc)
        for d in (0.5, 1.5, 2.9):
            literal = integrate(
                lambda w: (d - w) * residual_ccdf_mg12(sc, w), 0.0, d, loose
            )
            folded = _fcfs_wait_integral(sc, d, sc.lam, QuadratureSpec()) / omm
            assert folded == pytest.approx(literal, rel=1e-4)


def test_mg12_wrong_discipline_rejected():
    with pytest.raises(ValueError):
        avg_voi_mg12(expid(1.0, MG11))


# ---------------------------------------------------------------------------
# One-buffer LCFS with replacement
# ---------------------------------------------------------------------------

def test_mg12star_busy_area_reference_points():
    for lam, expected in EQ_BUSY_STAR_MM.items():
        rep = avg_voi_mg12star(expid(lam, MG12_STAR))
        assert rep.eq_busy == pytest.approx(expected, rel=1e-7)


def test_mg12star_beats_bufferless_on_exponential_identity():
    for lam in (0.5, 1.0, 2.0):
        star = avg_voi_mg12star(expid(lam, MG12_STAR)).avg_voi
        base = avg_voi_mg11(expid(lam, MG11)).avg_voi
        assert star > base


def test_mg12star_vanishes_with_arrival_rate():
    rep = avg_voi_mg12star(expid(1e-6, MG12_STAR))
    assert rep.avg_voi == pytest.approx(0.0, abs=1e-6)


def test_mg12star_star_shares_stationary_probabilities_with_fcfs():
    a = avg_voi_mg12(mm12(1.3))
    b = avg_voi_mg12star(expid(1.3, MG12_STAR))
    assert a.p_idle == pytest.approx(b.p_idle, rel=1e-12)
    assert a.p_busy2 == pytest.approx(b.p_busy2, rel=1e-12)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def test_uniform_log_mean_service_time_consistent_map():
    rep = closed_form_mg11_uniform_log(0.0, 10.0, 1.0, 1.0, 3.0)
    e_s = rep.t_cycle - 1.0
    assert e_s == pytest.approx(ES_UNIFORM_LOG, rel=1e-12)
    # The same mean through the quadrature route.
    assert mean_service_time(uniflog(1.0)) == pytest.approx(ES_UNIFORM_LOG, rel=1e-9)


def test_uniform_log_closed_form_agrees_with_quadrature():
    for lam in (0.1, 0.5, 1.0, 2.7, 5.0):
        cf = closed_form_mg11_uniform_log(0.0, 10.0, 1.0, lam, 3.0)
        qd = avg_voi_mg11(uniflog(lam))
        assert cf.avg_voi == pytest.approx(qd.avg_voi, rel=1e-6)
        assert cf.mgf == pytest.approx(qd.mgf, rel=1e-8)
    assert closed_form_mg11_uniform_log(0.0, 10.0, 1.0, 1.0, 3.0).avg_voi == pytest.approx(
        VOI_UNIFLOG, rel=1e-9
    )


def test_uniform_log_nonzero_lower_bound():
    cf = closed_form_mg11_uniform_log(2.0, 8.0, 0.7, 1.3, 3.0)
    sc = Scenario(1.3, UniformValue(2.0, 8.0), DependentService("log-shift", 0.7), LIN3, MG11)
    assert cf.avg_voi == pytest.approx(avg_voi_mg11(sc).avg_voi, rel=1e-6)


def test_uniform_log_empty_region_for_steep_map():
    # a chosen so the deadline threshold exp(D/a)-1 sits below v_min
    cf = closed_form_mg11_uniform_log(1.0, 10.0, 3.0 / math.log(1.5), 1.0, 3.0)
    assert cf.avg_voi == 0.0


def test_mm12_closed_form_reference_values():
    cf = closed_form_mm12_exp(1.5, 1.0, 3.0)
    assert cf.eq_idle == pytest.approx(EQ_IDLE_MM, rel=1e-12)
    assert cf.eq_busy == pytest.approx(EQ_BUSY_MM, rel=1e-9)
    assert cf.avg_voi == pytest.approx(VOI_MM12[1.0], rel=1e-12)
    assert cf.p_idle == pytest.approx(0.47368421052631576, rel=1e-12)
    assert cf.p_busy1 == pytest.approx(0.3157894736842105, rel=1e-12)


def test_mm12_closed_form_vanishing_deadline():
    assert closed_form_mm12_exp(1.5, 1.0, 1e-3).avg_voi == pytest.approx(0.0, abs=1e-6)


def test_mm12_busy_area_against_nested_quadrature():
    # Independent check of the printed busy-state closed form: evaluate the
    # defining double integral with the residual density mu e^{-mu w}.
    mu, deadline = 1.5, 3.0
    got = integrate_nested(
        lambda v, w: (v / (2 * deadline))
        * (deadline - v - w) ** 2
        * mu
        * math.exp(-mu * w)
        * mu
        * math.exp(-mu * v),
        [(0.0, deadline), (0.0, lambda v: deadline - v)],
    )
    assert got == pytest.approx(EQ_BUSY_MM, rel=1e-8)


def test_closed_form_report_dispatch():
    assert closed_form_report(mm12(1.0)).method == "closed-form"
    assert closed_form_report(uniflog(1.0)).method == "closed-form"
    assert closed_form_report(uniflog(1.0, MG12)) is None
    assert closed_form_report(expid(1.0, MG11)) is None


# ---------------------------------------------------------------------------
# Admission thinning
# ---------------------------------------------------------------------------

def _eds2(theta, deadline):
    # E[(D - S)^2, S < D] for S ~ Exp(theta); elementary antiderivative.
    return (
        deadline * deadline
        - 2.0 * deadline / theta
        + 2.0 / theta**2
        - 2.0 * math.exp(-theta * deadline) / theta**2
    )


@pytest.mark.parametrize("cls,frac,value", [(1, 0.8, 0.4), (2, 0.2, 1.33)])
def test_class_only_admission_thins_rate_and_conditions_values(cls, frac, value):
    lam = 2.0
    sc = Scenario(
        lam,
        BinaryValue(0.4, 1.33, 0.8),
        ClassExponentialService(),
        LIN3,
        MG11,
        f"class-only({cls})",
    )
    rep = avg_voi_mg11(sc)
    lam_eff = lam * frac
    e_s = value
    p_idle = 1.0 / (1.0 + lam_eff * e_s)
    expected = lam_eff * p_idle * value / (2.0 * 3.0) * _eds2(1.0 / value, 3.0)
    assert rep.avg_voi == pytest.approx(expected, rel=1e-8)
    assert rep.p_idle == pytest.approx(p_idle, rel=1e-12)


def test_serve_all_class_service_mixture():
    sc = Scenario(1.0, BinaryValue(0.4, 1.33, 0.8), ClassExponentialService(), LIN3, MG11)
    rep = avg_voi_mg11(sc)
    eqi = 0.8 * 0.4 / 6.0 * _eds2(2.5, 3.0) + 0.2 * 1.33 / 6.0 * _eds2(1.0 / 1.33, 3.0)
    p_idle = 1.0 / (1.0 + 0.586)
    assert rep.avg_voi == pytest.approx(p_idle * eqi, rel=1e-8)


def test_independent_service_factorizes():
    # With service independent of value, the idle-state area is
    # E[V]/(2D) * E[(D-S)^2, S<D].
    sc = Scenario(1.0, ExponentialValue(1.5), IndependentExponentialService(1.5), LIN3, MG11)
    rep = avg_voi_mg11(sc)
    expected_eqi = (1.0 / 1.5) / 6.0 * _eds2(1.5, 3.0)
    assert rep.eq_idle == pytest.approx(expected_eqi, rel=1e-8)


def test_analyze_dispatch():
    assert analyze(expid(1.0, MG11)).avg_voi == pytest.approx(VOI_MG11_EXPID, rel=1e-8)
    assert analyze(mm12(1.0)).avg_voi == pytest.approx(VOI_MM12[1.0], rel=1e-8)
    assert analyze(expid(1.0, MG12_STAR)).avg_voi > VOI_MG11_EXPID
