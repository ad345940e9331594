"""Renewal-reward evaluation of the time-average value collected at the receiver.

Each discipline's average VoI is assembled from three pieces: stationary
server-state probabilities over a renewal cycle, the expected collected area
of a packet that arrives in idle state, and the expected area of a packet
that arrives in busy state (zero for the bufferless discipline).  Generic
scenarios go through adaptive quadrature; the two classic parameter families
(uniform value with log service, exponential value with identity service)
also have closed forms.

Class-filtered admission is handled by Poisson thinning: the queue sees rate
lam * P[class admitted] and the value distribution conditioned on admission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .model import (
    BinaryValue,
    ClassExponentialService,
    DependentService,
    DescendFunction,
    ExponentialValue,
    IndependentDeterministicService,
    IndependentExponentialService,
    Scenario,
    UniformValue,
    MG11,
    MG12,
    MG12_STAR,
    admitted_atoms,
    effective_lambda,
    mean_service_time,
    mgf_service,
    one_minus_mgf_service,
)
from .quadrature import DEFAULT_SPEC, QuadratureSpec, integrate


class UnsupportedAnalyticsError(ValueError):
    """The requested analytic evaluation is outside the covered family
    (e.g. a non-linear descend law, which only the simulator handles)."""


@dataclass(frozen=True)
class AnalyticReport:
    """Stationary probabilities and expected-area decomposition of one scenario."""

    p_idle: float
    p_busy: float
    p_busy1: float
    p_busy2: float
    t_cycle: float
    mgf: float
    eq_idle: float
    eq_busy: float
    eq: float
    avg_voi: float
    method: str


class BufferedStationary(NamedTuple):
    p_idle: float
    p_busy: float
    p_busy1: float
    p_busy2: float
    t_cycle: float
    e_wait_b2: float


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _require_linear(descend: DescendFunction) -> None:
    if descend.kind != "linear":
        raise UnsupportedAnalyticsError(
            "analytic VoI covers the linear descend law only; use the simulator"
        )


def _require_discipline(scenario: Scenario, discipline: str) -> None:
    if scenario.discipline != discipline:
        raise ValueError(f"scenario discipline is {scenario.discipline!r}, expected {discipline!r}")


def _mean_admitted_value(scenario: Scenario) -> float:
    atoms = admitted_atoms(scenario)
    if atoms is not None:
        return sum(pr * v for v, pr, _ in atoms)
    return scenario.value_dist.mean()


def v_tilde(scenario: Scenario) -> float:
    """Largest initial value whose mapped service still beats the deadline.

    Only meaningful for value-dependent service; capped at the upper end of a
    bounded value support.
    """
    svc = scenario.service
    if not isinstance(svc, DependentService):
        raise UnsupportedAnalyticsError(
            "value threshold is defined for value-dependent service only"
        )
    vt = svc.g_inv(scenario.descend.deadline)
    dist = scenario.value_dist
    if isinstance(dist, (UniformValue, BinaryValue)):
        vt = min(vt, dist.support()[1])
    return vt


def _expect_service(scenario: Scenario, fn: Callable[[float], float], spec: QuadratureSpec) -> float:
    """E[fn(S)] over the admitted service distribution."""
    svc = scenario.service
    if isinstance(svc, IndependentDeterministicService):
        return fn(svc.s0)
    if isinstance(svc, IndependentExponentialService):
        hi = -math.log(1e-12) / svc.rate
        return integrate(lambda s: svc.rate * math.exp(-svc.rate * s) * fn(s), 0.0, hi, spec)
    atoms = admitted_atoms(scenario)
    if isinstance(svc, ClassExponentialService):
        assert atoms is not None
        total = 0.0
        for v, pr, _ in atoms:
            hi = -math.log(1e-12) * v
            total += pr * integrate(
                lambda s: math.exp(-s / v) / v * fn(s), 0.0, hi, spec
            )
        return total
    assert isinstance(svc, DependentService)
    if atoms is not None:
        return sum(pr * fn(svc.g(v)) for v, pr, _ in atoms)
    lo, hi = scenario.value_dist.support()
    return integrate(lambda v: scenario.value_dist.pdf(v) * fn(svc.g(v)), lo, hi, spec)


def _expect_value_kappa(
    scenario: Scenario, kappa: Callable[[float], float], spec: QuadratureSpec
) -> float:
    """E[V * kappa(D - S) * 1{S < D}] over the admitted joint value/service law.

    All conditional expected areas share this shape; the bufferless idle case
    uses kappa(d) = d**2, the buffered cases fold the waiting time into kappa.
    """
    descend_d = scenario.descend.deadline
    svc = scenario.service
    atoms = admitted_atoms(scenario)
    if isinstance(svc, DependentService):
        if atoms is not None:
            return sum(
                pr * v * kappa(descend_d - svc.g(v))
                for v, pr, _ in atoms
                if svc.g(v) < descend_d
            )
        lo, hi = scenario.value_dist.support()
        hi = min(hi, svc.g_inv(descend_d))
        if hi <= lo:
            return 0.0
        return integrate(
            lambda v: scenario.value_dist.pdf(v) * v * kappa(descend_d - svc.g(v)),
            lo,
            hi,
            spec,
        )
    if isinstance(svc, IndependentDeterministicService):
        if svc.s0 >= descend_d:
            return 0.0
        return _mean_admitted_value(scenario) * kappa(descend_d - svc.s0)
    if isinstance(svc, IndependentExponentialService):
        rate = svc.rate
        tail = integrate(
            lambda s: rate * math.exp(-rate * s) * kappa(descend_d - s), 0.0, descend_d, spec
        )
        return _mean_admitted_value(scenario) * tail
    assert isinstance(svc, ClassExponentialService) and atoms is not None
    total = 0.0
    for v, pr, _ in atoms:
        total += pr * v * integrate(
            lambda s: math.exp(-s / v) / v * kappa(descend_d - s), 0.0, descend_d, spec
        )
    return total


def _expm1_quad(x: float) -> float:
    """(expm1(-x) + x) / x**2, the O(x^2) remainder of exp(-x), without
    cancellation: series below x = 0.01, direct evaluation above."""
    if x < 1e-2:
        return 0.5 - x / 6.0 + x * x / 24.0 - x**3 / 120.0 + x**4 / 720.0
    return (math.expm1(-x) + x) / (x * x)


def _wait_kernel(s: float, d: float, lam: float) -> float:
    """Closed form of int_0^min(d,s) (d - w) * (1 - exp(-lam (s - w))) dw.

    The whole expression is O(lam) as lam -> 0, so it is regrouped around
    expm1 remainders; every factor keeps full relative accuracy for any lam.
    """
    m = d if d < s else s
    if m <= 0.0:
        return 0.0
    decay = lam * (s - m)
    c = m * m * (_expm1_quad(lam * m) * (1.0 + lam * d) - 0.5)
    return (d * m - 0.5 * m * m) * (-math.expm1(-decay)) + math.exp(-decay) * c


def _fcfs_wait_integral(scenario: Scenario, rem: float, lam: float, spec: QuadratureSpec) -> float:
    """(1 - MGF) * int_0^rem (rem - w) P[W' > w] dw, i.e. E_S[_wait_kernel(S, rem)].

    Folding the residual CCDF over the service law keeps a single quadrature
    level; the kernel has a kink at S = rem, so integrations split there.
    """
    svc = scenario.service
    if isinstance(svc, IndependentDeterministicService):
        return _wait_kernel(svc.s0, rem, lam)
    if isinstance(svc, IndependentExponentialService):
        th = svc.rate
        # Memoryless service: P[W'>w] (1-MGF) = exp(-th w) lam/(th+lam).
        return lam / (th + lam) * (rem / th - (1.0 - math.exp(-th * rem)) / th**2)
    atoms = admitted_atoms(scenario)
    if isinstance(svc, ClassExponentialService):
        assert atoms is not None
        return sum(
            pr * lam * v / (1.0 + lam * v) * (rem * v - v * v * (1.0 - math.exp(-rem / v)))
            for v, pr, _ in atoms
        )
    assert isinstance(svc, DependentService)
    if atoms is not None:
        return sum(pr * _wait_kernel(svc.g(v), rem, lam) for v, pr, _ in atoms)
    dist = scenario.value_dist
    lo, hi = dist.support()
    cut = min(max(svc.g_inv(rem), lo), hi)
    total = 0.0
    for a, b in ((lo, cut), (cut, hi)):
        if b > a:
            total += integrate(
                lambda u: dist.pdf(u) * _wait_kernel(svc.g(u), rem, lam), a, b, spec
            )
    return total


def _service_ccdf(scenario: Scenario) -> tuple[Callable[[float], float], tuple[float, ...]]:
    """CCDF of the admitted service time plus its jump/kink abscissae."""
    svc = scenario.service
    if isinstance(svc, IndependentExponentialService):
        return (lambda w: math.exp(-svc.rate * w)), ()
    if isinstance(svc, IndependentDeterministicService):
        s0 = svc.s0
        return (lambda w: 1.0 if w < s0 else 0.0), (s0,)
    atoms = admitted_atoms(scenario)
    if isinstance(svc, ClassExponentialService):
        assert atoms is not None
        frozen = tuple(atoms)
        return (lambda w: sum(pr * math.exp(-w / v) for v, pr, _ in frozen)), ()
    assert isinstance(svc, DependentService)
    if atoms is not None:
        frozen = tuple(atoms)
        return (
            lambda w: sum(pr for v, pr, _ in frozen if svc.g(v) > w),
            tuple(sorted(svc.g(v) for v, _, _ in frozen)),
        )
    dist = scenario.value_dist
    lo, hi = dist.support()
    return (lambda w: 1.0 - dist.cdf(svc.g_inv(w))), (svc.g(lo), svc.g(hi))


# ---------------------------------------------------------------------------
# Stationary probabilities
# ---------------------------------------------------------------------------

def stationary_mg11(scenario: Scenario) -> tuple[float, float, float]:
    """(p_idle, p_busy, t_cycle) for the bufferless discipline."""
    lam = effective_lambda(scenario)
    e_s = mean_service_time(scenario)
    t_cycle = 1.0 / lam + e_s
    return 1.0 / (lam * t_cycle), e_s / t_cycle, t_cycle


def stationary_mg12(scenario: Scenario) -> BufferedStationary:
    """Server-state probabilities for the one-buffer disciplines.

    The renewal cycle is an idle gap plus a busy stretch of geometrically
    many services (the stretch ends with the first service that sees no
    arrival, which happens with probability MGF_S(lam)).  The buffer is
    occupied from the first arrival of each service to that service's end,
    giving the B2 fraction through the expected buffer wait.
    """
    lam = effective_lambda(scenario)
    e_s = mean_service_time(scenario)
    mgf = mgf_service(scenario)
    omm = one_minus_mgf_service(scenario)
    t_cycle = 1.0 / lam + e_s / mgf
    p_idle = 1.0 / (lam * t_cycle)
    p_busy = e_s / (t_cycle * mgf)
    e_wait_b2 = e_s - omm / lam
    p_busy2 = p_busy * e_wait_b2 / e_s if e_s > 0.0 else 0.0
    return BufferedStationary(p_idle, p_busy, p_busy - p_busy2, p_busy2, t_cycle, e_wait_b2)


def residual_ccdf_mg12(scenario: Scenario, w: float) -> float:
    """P[W' > w]: residual service seen by the first busy-period arrival.

    W' = S - X conditioned on X < S with X exponential(lam); exactly
    exp(-rate * w) for independent exponential service, quadrature otherwise.
    """
    if w < 0.0:
        raise ValueError("residual time must be >= 0")
    if w == 0.0:
        return 1.0
    svc = scenario.service
    lam = effective_lambda(scenario)
    if isinstance(svc, IndependentExponentialService):
        return math.exp(-svc.rate * w)
    omm = one_minus_mgf_service(scenario)
    if omm <= 0.0:
        raise ValueError("no busy-state arrivals exist under this service law")
    if isinstance(svc, IndependentDeterministicService):
        num = -math.expm1(-lam * (svc.s0 - w)) if svc.s0 > w else 0.0
        return num / omm
    atoms = admitted_atoms(scenario)
    if isinstance(svc, ClassExponentialService):
        assert atoms is not None
        num = sum(
            pr * math.exp(-w / v) * lam * v / (1.0 + lam * v) for v, pr, _ in atoms
        )
        return num / omm
    assert isinstance(svc, DependentService)
    if atoms is not None:
        num = sum(
            -pr * math.expm1(-lam * (svc.g(v) - w)) for v, pr, _ in atoms if svc.g(v) > w
        )
        return num / omm
    dist = scenario.value_dist
    lo, hi = dist.support()
    lo = max(lo, svc.g_inv(w))
    if lo >= hi:
        return 0.0
    num = integrate(
        lambda v: -dist.pdf(v) * math.expm1(-lam * (svc.g(v) - w)), lo, hi, DEFAULT_SPEC
    )
    return num / omm


# ---------------------------------------------------------------------------
# Average VoI per discipline
# ---------------------------------------------------------------------------

def _eq_idle(scenario: Scenario, spec: QuadratureSpec) -> float:
    """E[Q | arrival in idle]: the packet waits only for its own service."""
    d = scenario.descend.deadline
    return _expect_value_kappa(scenario, lambda rem: rem * rem, spec) / (2.0 * d)


def avg_voi_mg11(scenario: Scenario) -> AnalyticReport:
    """Average VoI for the bufferless discipline: only idle arrivals count."""
    _require_linear(scenario.descend)
    _require_discipline(scenario, MG11)
    lam = effective_lambda(scenario)
    p_idle, p_busy, t_cycle = stationary_mg11(scenario)
    eqi = _eq_idle(scenario, DEFAULT_SPEC)
    eq = p_idle * eqi
    return AnalyticReport(
        p_idle=p_idle,
        p_busy=p_busy,
        p_busy1=p_busy,
        p_busy2=0.0,
        t_cycle=t_cycle,
        mgf=mgf_service(scenario),
        eq_idle=eqi,
        eq_busy=0.0,
        eq=eq,
        avg_voi=lam * eq,
        method="quadrature",
    )


def avg_voi_mg12(scenario: Scenario) -> AnalyticReport:
    """Average VoI for the FCFS one-buffer discipline.

    A busy arrival collects area only when it finds the buffer empty; its
    system time adds the residual W' of the in-progress service.  E[(d-W')^2,
    W'<d] is reduced by parts to d^2 - 2 int_0^d (d-w) P[W'>w] dw and the
    CCDF integral is folded over the service law with a closed-form kernel,
    so no density of W' is ever differentiated numerically.
    """
    _require_linear(scenario.descend)
    _require_discipline(scenario, MG12)
    lam = effective_lambda(scenario)
    st = stationary_mg12(scenario)
    level = DEFAULT_SPEC.split(2)
    eqi = _eq_idle(scenario, DEFAULT_SPEC)
    omm = one_minus_mgf_service(scenario)
    if omm > 0.0 and st.p_busy1 > 0.0:

        def kappa(rem: float) -> float:
            t = _fcfs_wait_integral(scenario, rem, lam, level) / omm
            return max(rem * rem - 2.0 * t, 0.0)

        eqb = _expect_value_kappa(scenario, kappa, level) / (2.0 * scenario.descend.deadline)
    else:
        eqb = 0.0
    eq = st.p_idle * eqi + st.p_busy1 * eqb
    return AnalyticReport(
        p_idle=st.p_idle,
        p_busy=st.p_busy,
        p_busy1=st.p_busy1,
        p_busy2=st.p_busy2,
        t_cycle=st.t_cycle,
        mgf=mgf_service(scenario),
        eq_idle=eqi,
        eq_busy=eqb,
        eq=eq,
        avg_voi=lam * eq,
        method="quadrature",
    )


def avg_voi_mg12star(scenario: Scenario) -> AnalyticReport:
    """Average VoI for the LCFS-with-replacement one-buffer discipline.

    Every busy arrival enters the buffer (replacing any occupant) and is
    delivered iff no further arrival lands during the residual service W,
    which contributes the factor exp(-lam w).  W follows the stationary
    residual-service density (1 - F_S(w)) / E[S] over busy periods.
    """
    _require_linear(scenario.descend)
    _require_discipline(scenario, MG12_STAR)
    lam = effective_lambda(scenario)
    st = stationary_mg12(scenario)
    level = DEFAULT_SPEC.split(2)
    eqi = _eq_idle(scenario, DEFAULT_SPEC)
    e_s = mean_service_time(scenario)
    if e_s > 0.0 and st.p_busy > 0.0:
        ccdf, breaks = _service_ccdf(scenario)

        def kappa(rem: float) -> float:
            cuts = sorted({0.0, rem, *(b for b in breaks if 0.0 < b < rem)})
            total = 0.0
            for a, b in zip(cuts, cuts[1:]):
                total += integrate(
                    lambda w: (rem - w) ** 2 * math.exp(-lam * w) * ccdf(w), a, b, level
                )
            return total / e_s

        eqb = _expect_value_kappa(scenario, kappa, level) / (2.0 * scenario.descend.deadline)
    else:
        eqb = 0.0
    eq = st.p_idle * eqi + st.p_busy * eqb
    return AnalyticReport(
        p_idle=st.p_idle,
        p_busy=st.p_busy,
        p_busy1=st.p_busy1,
        p_busy2=st.p_busy2,
        t_cycle=st.t_cycle,
        mgf=mgf_service(scenario),
        eq_idle=eqi,
        eq_busy=eqb,
        eq=eq,
        avg_voi=lam * eq,
        method="quadrature",
    )


def analyze(scenario: Scenario) -> AnalyticReport:
    """Dispatch to the discipline's quadrature evaluation."""
    if scenario.discipline == MG11:
        return avg_voi_mg11(scenario)
    if scenario.discipline == MG12:
        return avg_voi_mg12(scenario)
    return avg_voi_mg12star(scenario)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def _log1p_sq_antiderivatives(v: float) -> tuple[float, float]:
    """(int v log(1+v) dv, int v log(1+v)^2 dv), both vanishing at v = 0."""
    lg = math.log1p(v)
    phi1 = 0.5 * (v * v - 1.0) * lg - 0.25 * v * v + 0.5 * v
    phi2 = 0.5 * (v * v - 1.0) * lg * lg - 0.5 * (v * v - 2.0 * v - 3.0) * lg + 0.25 * v * v - 1.5 * v
    return phi1, phi2


def closed_form_mg11_uniform_log(
    v_min: float, v_max: float, a: float, lam: float, deadline: float
) -> AnalyticReport:
    """Bufferless average VoI for Uniform(v_min, v_max) values and the
    logarithmic service map a*log(1+v), fully in closed form.

    The service map is applied consistently everywhere, i.e.
    E[S] = a/u * ((v_max+1) log(v_max+1) - (v_min+1) log(v_min+1)) - a
    (the exact integral of a*log(1+v)), and the area integral uses exact
    antiderivatives of v log(1+v) and v log(1+v)^2.
    """
    if not (0.0 <= v_min < v_max and a > 0.0 and lam > 0.0 and deadline > 0.0):
        raise ValueError("invalid closed-form parameters")
    u = v_max - v_min
    e_s = (a / u) * (
        (v_max + 1.0) * math.log1p(v_max) - (v_min + 1.0) * math.log1p(v_min)
    ) - a
    t_cycle = 1.0 / lam + e_s
    p_idle = 1.0 / (lam * t_cycle)
    p_busy = e_s / t_cycle
    v_up = min(math.expm1(deadline / a), v_max)
    if v_up <= v_min:
        eqi = 0.0
    else:

        def big_f(v: float) -> float:
            phi1, phi2 = _log1p_sq_antiderivatives(v)
            return deadline * deadline * 0.5 * v * v - 2.0 * a * deadline * phi1 + a * a * phi2

        eqi = (big_f(v_up) - big_f(v_min)) / (2.0 * deadline * u)
    # MGF_S(lam) = E[(1+V)^(-a lam)] also has an elementary antiderivative.
    if abs(a * lam - 1.0) < 1e-12:
        mgf = (math.log1p(v_max) - math.log1p(v_min)) / u
    else:
        e = 1.0 - a * lam
        mgf = ((1.0 + v_max) ** e - (1.0 + v_min) ** e) / (e * u)
    eq = p_idle * eqi
    return AnalyticReport(
        p_idle=p_idle,
        p_busy=p_busy,
        p_busy1=p_busy,
        p_busy2=0.0,
        t_cycle=t_cycle,
        mgf=mgf,
        eq_idle=eqi,
        eq_busy=0.0,
        eq=eq,
        avg_voi=lam * eq,
        method="closed-form",
    )


def closed_form_mm12_exp(mu: float, lam: float, deadline: float) -> AnalyticReport:
    """FCFS one-buffer average VoI for exponential(mu) values served through
    the identity map (so service is exponential(mu) too), in closed form."""
    if not (mu > 0.0 and lam > 0.0 and deadline > 0.0):
        raise ValueError("invalid closed-form parameters")
    d = deadline
    dm = d * mu
    emu = math.exp(-dm)
    eqi = (dm * dm - 4.0 * dm + 6.0 - emu * (2.0 * dm + 6.0)) / (2.0 * d * mu**3)
    eqb = (12.0 + dm * dm - 6.0 * dm - emu * (6.0 * dm + dm * dm + 12.0)) / (2.0 * d * mu**3)
    denom = lam * lam + lam * mu + mu * mu
    p_idle = mu * mu / denom
    p_busy1 = lam * mu / denom
    p_busy2 = lam * lam / denom
    p_busy = p_busy1 + p_busy2
    eq = eqi * p_idle + eqb * p_busy1
    return AnalyticReport(
        p_idle=p_idle,
        p_busy=p_busy,
        p_busy1=p_busy1,
        p_busy2=p_busy2,
        t_cycle=1.0 / lam + (mu + lam) / (mu * mu),
        mgf=mu / (mu + lam),
        eq_idle=eqi,
        eq_busy=eqb,
        eq=eq,
        avg_voi=lam * eq,
        method="closed-form",
    )


def closed_form_report(scenario: Scenario) -> AnalyticReport | None:
    """Closed form matching the scenario, or None when outside both families."""
    if scenario.descend.kind != "linear" or scenario.admission != "serve-all":
        return None
    svc = scenario.service
    dist = scenario.value_dist
    if (
        scenario.discipline == MG11
        and isinstance(svc, DependentService)
        and svc.map_kind == "log-shift"
        and isinstance(dist, UniformValue)
    ):
        return closed_form_mg11_uniform_log(
            dist.v_min, dist.v_max, svc.a, scenario.lam, scenario.descend.deadline
        )
    if (
        scenario.discipline == MG12
        and isinstance(svc, DependentService)
        and svc.map_kind == "identity"
        and isinstance(dist, ExponentialValue)
    ):
        return closed_form_mm12_exp(dist.rate, scenario.lam, scenario.descend.deadline)
    return None
