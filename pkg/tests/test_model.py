import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

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
    Packet,
    Scenario,
    UniformValue,
    mean_service_time,
    mgf_service,
    q_area,
    service_time,
    value_at,
)
from voilab.sim import rng_stream

LIN3 = DescendFunction.linear(3.0)


def descend_strategy():
    kinds = st.sampled_from(["linear", "power-concave", "power-convex"])
    return st.builds(
        DescendFunction,
        kinds,
        st.floats(0.5, 10.0),
        st.floats(1.0, 4.0),
    )


# ---------------------------------------------------------------------------
# value_at
# ---------------------------------------------------------------------------

def test_value_at_linear_midpoint():
    assert value_at(LIN3, 10.0, 1.5) == pytest.approx(5.0)


def test_value_at_boundary_zero():
    assert value_at(LIN3, 10.0, 3.0) == 0.0
    assert value_at(LIN3, 10.0, 100.0) == 0.0


def test_value_at_power_convex():
    d = DescendFunction.power_convex(2.0, 3.0)
    assert value_at(d, 8.0, 1.5) == pytest.approx(2.0)


def test_value_at_rejects_negative_inputs():
    with pytest.raises(ValueError):
        value_at(LIN3, -1.0, 0.5)
    with pytest.raises(ValueError):
        value_at(LIN3, 1.0, -0.5)


@settings(max_examples=60, deadline=None)
@given(descend_strategy(), st.floats(0.0, 50.0))
def test_value_at_non_increasing_and_vanishing(descend, v0):
    taus = np.linspace(0.0, 1.5 * descend.deadline, 40)
    vals = [value_at(descend, v0, float(t)) for t in taus]
    assert vals[0] == pytest.approx(v0)
    for a, b in zip(vals, vals[1:]):
        assert b <= a + 1e-12
    assert all(v == 0.0 for v, t in zip(vals, taus) if t >= descend.deadline)
    assert value_at(descend, 0.0, float(taus[3])) == 0.0


# ---------------------------------------------------------------------------
# q_area
# ---------------------------------------------------------------------------

def test_q_area_full_triangle():
    assert q_area(LIN3, 10.0, 0.0) == pytest.approx(15.0)


def test_q_area_ultimate_staleness():
    assert q_area(LIN3, 10.0, 3.0) == 0.0


def test_q_area_midpoint():
    assert q_area(LIN3, 10.0, 1.5) == pytest.approx(3.75)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 20.0), st.floats(0.5, 8.0), st.floats(0.0, 1.0))
def test_q_area_linear_quadrature_matches_closed_form(v0, deadline, frac):
    descend = DescendFunction.linear(deadline)
    t_sys = frac * deadline
    closed = q_area(descend, v0, t_sys)
    quad = q_area(descend, v0, t_sys, method="quadrature")
    assert quad == pytest.approx(closed, rel=1e-10, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(descend_strategy(), st.floats(0.1, 20.0))
def test_q_area_decreases_with_system_time(descend, v0):
    grid = np.linspace(0.0, descend.deadline, 12)
    areas = [q_area(descend, v0, float(t)) for t in grid]
    for a, b in zip(areas, areas[1:]):
        assert b <= a + 1e-9
    # full-area consistency: zero system time integrates the whole curve
    from voilab.quadrature import integrate

    full = integrate(lambda tau: value_at(descend, v0, tau), 0.0, descend.deadline)
    assert areas[0] == pytest.approx(full, rel=1e-8, abs=1e-10)


# ---------------------------------------------------------------------------
# service_time
# ---------------------------------------------------------------------------

def test_service_time_log_shift_inverse_point():
    svc = DependentService("log-shift", 1.0)
    assert service_time(svc, math.e - 1.0) == pytest.approx(1.0)
    assert svc.g_inv(svc.g(4.2)) == pytest.approx(4.2)


def test_service_time_identity():
    assert service_time(DependentService("identity"), 2.0) == 2.0


def test_service_time_class_exponential_monte_carlo():
    # Sample-mean oracle: 10^6 draws of an exponential with mean 0.4 must
    # land within three standard errors of 0.4.
    rng = rng_stream(99, 2)
    n = 1_000_000
    draws = rng.standard_exponential(n) * 0.4
    se = draws.std(ddof=1) / math.sqrt(n)
    assert abs(draws.mean() - 0.4) <= 3.0 * se
    one = service_time(ClassExponentialService(), 0.4, cls=1, rng=rng_stream(7, 2))
    assert one >= 0.0


def test_service_time_class_exponential_requires_class():
    with pytest.raises(ValueError):
        service_time(ClassExponentialService(), 0.4, cls=None, rng=rng_stream(7, 2))


def test_service_time_random_models_require_rng():
    with pytest.raises(ValueError):
        service_time(IndependentExponentialService(1.5), 1.0)


# ---------------------------------------------------------------------------
# mgf_service
# ---------------------------------------------------------------------------

def _scenario(service, dist=None, lam=1.0):
    return Scenario(lam, dist or UniformValue(0.0, 10.0), service, LIN3, MG11)


def test_mgf_exponential_closed_form():
    sc = _scenario(IndependentExponentialService(1.5))
    assert mgf_service(sc) == pytest.approx(0.6)


def test_mgf_deterministic_point_mass():
    sc = _scenario(IndependentDeterministicService(2.0))
    assert mgf_service(sc) == pytest.approx(math.exp(-2.0), rel=1e-12)


def test_mgf_dependent_log_uniform_vs_dense_grid_oracle():
    # Independent oracle: trapezoid rule on a 10^6-point grid of
    # exp(-lam a log(1+v)) / (v_max - v_min).
    sc = _scenario(DependentService("log-shift", 1.0))
    v = np.linspace(0.0, 10.0, 1_000_001)
    oracle = float(np.trapz(np.exp(-np.log1p(v)) / 10.0, v))
    assert mgf_service(sc) == pytest.approx(oracle, abs=1e-8)


def test_mgf_binary_atoms():
    dist = BinaryValue(0.4, 1.33, 0.8)
    sc = _scenario(DependentService("identity"), dist)
    expected = 0.8 * math.exp(-0.4) + 0.2 * math.exp(-1.33)
    assert mgf_service(sc) == pytest.approx(expected, rel=1e-12)
    sc2 = _scenario(ClassExponentialService(), dist)
    expected2 = 0.8 / 1.4 + 0.2 / 2.33
    assert mgf_service(sc2) == pytest.approx(expected2, rel=1e-12)


def test_mgf_in_unit_interval_and_non_increasing():
    scenarios = [
        _scenario(IndependentExponentialService(1.5)),
        _scenario(IndependentDeterministicService(0.7)),
        _scenario(DependentService("log-shift", 1.0)),
        _scenario(DependentService("identity"), ExponentialValue(1.5)),
        _scenario(ClassExponentialService(), BinaryValue(0.4, 1.33, 0.8)),
    ]
    lams = [0.05, 0.2, 0.7, 1.3, 2.9, 5.0]
    for sc in scenarios:
        vals = [mgf_service(sc, lam) for lam in lams]
        assert all(0.0 < v <= 1.0 for v in vals)
        for a, b in zip(vals, vals[1:]):
            assert b <= a + 1e-12


def test_mean_service_time_uniform_log():
    sc = _scenario(DependentService("log-shift", 1.0))
    # exact: (11 ln 11 - 10) / 10
    assert mean_service_time(sc) == pytest.approx(1.6376848000782074, rel=1e-9)


def test_mean_service_time_class_exponential():
    sc = _scenario(ClassExponentialService(), BinaryValue(0.4, 1.33, 0.8))
    assert mean_service_time(sc) == pytest.approx(0.8 * 0.4 + 0.2 * 1.33, rel=1e-12)


# ---------------------------------------------------------------------------
# Scenario / Packet validation
# ---------------------------------------------------------------------------

def test_scenario_class_only_needs_binary_values():
    with pytest.raises(ValueError):
        Scenario(1.0, UniformValue(0, 10), DependentService(), LIN3, MG11, "class-only(1)")


def test_scenario_class_service_needs_binary_values():
    with pytest.raises(ValueError):
        Scenario(1.0, ExponentialValue(1.5), ClassExponentialService(), LIN3, MG11)


def test_scenario_rejects_unknown_discipline():
    with pytest.raises(ValueError):
        Scenario(1.0, UniformValue(0, 10), DependentService(), LIN3, "M/GI/1/3")


def test_scenario_rejects_nonpositive_rate():
    with pytest.raises(ValueError):
        Scenario(0.0, UniformValue(0, 10), DependentService(), LIN3, MG12)


def test_packet_reception_after_service():
    with pytest.raises(ValueError):
        Packet(id=0, t_gen=1.0, v0=2.0, s=1.0, t_recv=1.5)
    ok = Packet(id=0, t_gen=1.0, v0=2.0, s=1.0, t_recv=2.5, q_area=0.3)
    assert ok.t_recv == 2.5


def test_packet_discarded_collects_nothing():
    with pytest.raises(ValueError):
        Packet(id=0, t_gen=0.0, v0=1.0, s=0.5, discarded=True, q_area=0.1)


def test_binary_sampling_matches_class_probability():
    dist = BinaryValue(0.4, 1.33, 0.8)
    values, classes = dist.sample(rng_stream(5, 1), 200_000)
    frac1 = float(np.mean(classes == 1))
    assert abs(frac1 - 0.8) <= 3.0 * math.sqrt(0.8 * 0.2 / 200_000)
    assert set(np.unique(values)) == {0.4, 1.33}
    assert np.all(values[classes == 1] == 0.4)


def test_value_dist_means():
    assert UniformValue(0, 10).mean() == 5.0
    assert ExponentialValue(1.5).mean() == pytest.approx(1.0 / 1.5)
    assert BinaryValue(0.4, 1.33, 0.8).mean() == pytest.approx(0.586)
