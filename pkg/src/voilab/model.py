"""Domain types and pointwise value/service computations.

Everything here is immutable and pure given an explicit RNG handle, so the
analytic and simulation engines can share one vocabulary: a packet's value
starts at a random ``v0``, decays to zero over a deterministic deadline, and
its service requirement is either a deterministic map of the value, an
independent draw, or (for two-class traffic) an exponential whose mean is the
class value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .quadrature import DEFAULT_SPEC, QuadratureSpec, integrate

# Queueing disciplines: no buffer / one-slot FCFS / one-slot LCFS with replacement.
MG11 = "M/GI/1/1"
MG12 = "M/GI/1/2"
MG12_STAR = "M/GI/1/2*"
DISCIPLINES = (MG11, MG12, MG12_STAR)

SERVE_ALL = "serve-all"
CLASS_ONLY_1 = "class-only(1)"
CLASS_ONLY_2 = "class-only(2)"
ADMISSIONS = (SERVE_ALL, CLASS_ONLY_1, CLASS_ONLY_2)

# Densities with unbounded support are truncated at this tail mass for
# numerical expectations; the truncation error sits far below quadrature
# tolerances (see quadrature.QuadratureSpec defaults).
EXP_TAIL_EPS = 1e-12


# ---------------------------------------------------------------------------
# Value decay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DescendFunction:
    """Decay law of a packet's value over [0, deadline].

    ``linear``        : v0 * (1 - tau/D)
    ``power-concave`` : v0 * (1 - (tau/D)**shape)   (concave for shape > 1)
    ``power-convex``  : v0 * (1 - tau/D)**shape     (convex for shape > 1)

    Both power families reduce to the linear law at shape = 1 and satisfy
    value(v0, 0) = v0 and value(v0, D) = 0.
    """

    kind: str
    deadline: float
    shape: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "power-concave", "power-convex"):
            raise ValueError(f"unknown descend kind {self.kind!r}")
        if not (self.deadline > 0.0):
            raise ValueError("deadline must be > 0")
        if not (self.shape >= 1.0):
            raise ValueError("shape exponent must be >= 1")

    @classmethod
    def linear(cls, deadline: float) -> "DescendFunction":
        return cls("linear", deadline)

    @classmethod
    def power_concave(cls, shape: float, deadline: float) -> "DescendFunction":
        return cls("power-concave", deadline, shape)

    @classmethod
    def power_convex(cls, shape: float, deadline: float) -> "DescendFunction":
        return cls("power-convex", deadline, shape)


def value_at(descend: DescendFunction, v0: float, tau: float) -> float:
    """Remaining value of a packet ``tau`` time units after generation."""
    if v0 < 0.0:
        raise ValueError("initial value must be >= 0")
    if tau < 0.0:
        raise ValueError("elapsed time must be >= 0")
    d = descend.deadline
    if tau >= d:
        return 0.0
    x = tau / d
    if descend.kind == "linear":
        return v0 * (1.0 - x)
    if descend.kind == "power-concave":
        return v0 * (1.0 - x**descend.shape)
    return v0 * (1.0 - x) ** descend.shape


def q_area(
    descend: DescendFunction,
    v0: float,
    t_sys: float,
    method: str = "auto",
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> float:
    """Value area a packet delivers: integral of value_at from t_sys to D.

    ``t_sys`` is the packet's total generation-to-reception time.  For the
    linear law this is the triangle tail v0/(2D) * (D - t_sys)**2; the power
    laws are evaluated by quadrature (``method="quadrature"`` forces that
    path for the linear law too).
    """
    if v0 < 0.0:
        raise ValueError("initial value must be >= 0")
    if t_sys < 0.0:
        raise ValueError("system time must be >= 0")
    d = descend.deadline
    if t_sys >= d:
        return 0.0
    if descend.kind == "linear" and method == "auto":
        return v0 / (2.0 * d) * (d - t_sys) ** 2
    return integrate(lambda tau: value_at(descend, v0, tau), t_sys, d, spec)


def q_area_batch(descend: DescendFunction, v0: np.ndarray, t_sys: np.ndarray) -> np.ndarray:
    """Vectorized q_area; the linear law gets the closed form, power laws
    fall back to per-element quadrature (intended for modest batch sizes)."""
    t = np.asarray(t_sys, dtype=float)
    v = np.asarray(v0, dtype=float)
    d = descend.deadline
    if descend.kind == "linear":
        rem = np.clip(d - t, 0.0, None)
        return v / (2.0 * d) * rem * rem
    return np.array([q_area(descend, float(vi), float(ti)) for vi, ti in zip(v, t)])


# ---------------------------------------------------------------------------
# Initial-value distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformValue:
    v_min: float
    v_max: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.v_min < self.v_max):
            raise ValueError("require 0 <= v_min < v_max")

    def mean(self) -> float:
        return 0.5 * (self.v_min + self.v_max)

    def support(self) -> tuple[float, float]:
        return (self.v_min, self.v_max)

    def pdf(self, v: float) -> float:
        return 1.0 / (self.v_max - self.v_min) if self.v_min <= v <= self.v_max else 0.0

    def cdf(self, v: float) -> float:
        if v <= self.v_min:
            return 0.0
        if v >= self.v_max:
            return 1.0
        return (v - self.v_min) / (self.v_max - self.v_min)

    def sample(self, rng: np.random.Generator, n: int):
        return rng.uniform(self.v_min, self.v_max, n), None


@dataclass(frozen=True)
class ExponentialValue:
    rate: float

    def __post_init__(self) -> None:
        if not (self.rate > 0.0):
            raise ValueError("rate must be > 0")

    def mean(self) -> float:
        return 1.0 / self.rate

    def support(self) -> tuple[float, float]:
        # Finite truncation point for numerical integration (tail mass EXP_TAIL_EPS).
        return (0.0, -math.log(EXP_TAIL_EPS) / self.rate)

    def pdf(self, v: float) -> float:
        return self.rate * math.exp(-self.rate * v) if v >= 0.0 else 0.0

    def cdf(self, v: float) -> float:
        return -math.expm1(-self.rate * v) if v > 0.0 else 0.0

    def sample(self, rng: np.random.Generator, n: int):
        return rng.exponential(1.0 / self.rate, n), None


@dataclass(frozen=True)
class BinaryValue:
    """Two-class traffic: class 1 has value v1 w.p. p, class 2 has v2 w.p. 1-p."""

    v1: float
    v2: float
    p: float

    def __post_init__(self) -> None:
        if not (self.v1 > 0.0 and self.v2 > 0.0):
            raise ValueError("class values must be > 0")
        if not (0.0 < self.p < 1.0):
            raise ValueError("class-1 probability must lie in (0, 1)")

    def mean(self) -> float:
        return self.p * self.v1 + (1.0 - self.p) * self.v2

    def support(self) -> tuple[float, float]:
        return (min(self.v1, self.v2), max(self.v1, self.v2))

    def cdf(self, v: float) -> float:
        return sum(pr for val, pr, _ in self.atoms() if val <= v)

    def atoms(self) -> tuple[tuple[float, float, int], ...]:
        return ((self.v1, self.p, 1), (self.v2, 1.0 - self.p, 2))

    def sample(self, rng: np.random.Generator, n: int):
        classes = np.where(rng.random(n) < self.p, 1, 2).astype(np.int8)
        values = np.where(classes == 1, self.v1, self.v2)
        return values, classes


InitialValueDist = Union[UniformValue, ExponentialValue, BinaryValue]


# ---------------------------------------------------------------------------
# Service models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DependentService:
    """Deterministic service map S = g(V): identity or a*log(1+v)."""

    map_kind: str = "identity"
    a: float = 1.0

    def __post_init__(self) -> None:
        if self.map_kind not in ("identity", "log-shift"):
            raise ValueError(f"unknown service map {self.map_kind!r}")
        if self.map_kind == "log-shift" and not (self.a > 0.0):
            raise ValueError("log-shift scale must be > 0")

    def g(self, v: float) -> float:
        if self.map_kind == "identity":
            return v
        return self.a * math.log1p(v)

    def g_inv(self, s: float) -> float:
        if self.map_kind == "identity":
            return s
        return math.expm1(s / self.a)

    def g_array(self, v: np.ndarray) -> np.ndarray:
        if self.map_kind == "identity":
            return np.asarray(v, dtype=float)
        return self.a * np.log1p(v)


@dataclass(frozen=True)
class IndependentExponentialService:
    rate: float

    def __post_init__(self) -> None:
        if not (self.rate > 0.0):
            raise ValueError("service rate must be > 0")


@dataclass(frozen=True)
class IndependentDeterministicService:
    s0: float

    def __post_init__(self) -> None:
        if self.s0 < 0.0:
            raise ValueError("service time must be >= 0")


@dataclass(frozen=True)
class ClassExponentialService:
    """Exponential service whose mean equals the packet's class value
    (binary traffic only)."""


ServiceModel = Union[
    DependentService,
    IndependentExponentialService,
    IndependentDeterministicService,
    ClassExponentialService,
]


def service_time(
    service: ServiceModel,
    v0: float,
    cls: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """One service requirement for a packet with initial value ``v0``."""
    if v0 < 0.0:
        raise ValueError("initial value must be >= 0")
    if isinstance(service, DependentService):
        return service.g(v0)
    if isinstance(service, IndependentDeterministicService):
        return service.s0
    if rng is None:
        raise ValueError("random service models need an RNG handle")
    if isinstance(service, IndependentExponentialService):
        return float(rng.exponential(1.0 / service.rate))
    if cls not in (1, 2):
        raise ValueError("class-conditional service requires a packet class")
    return float(rng.exponential(v0))


def sample_service_times(
    service: ServiceModel,
    values: np.ndarray,
    classes: Optional[np.ndarray],
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    """Vectorized service_time for a whole packet stream."""
    n = len(values)
    if isinstance(service, DependentService):
        return service.g_array(values)
    if isinstance(service, IndependentDeterministicService):
        return np.full(n, service.s0)
    if rng is None:
        raise ValueError("random service models need an RNG handle")
    if isinstance(service, IndependentExponentialService):
        return rng.exponential(1.0 / service.rate, n)
    if classes is None:
        raise ValueError("class-conditional service requires packet classes")
    return rng.standard_exponential(n) * values


# ---------------------------------------------------------------------------
# Scenario and packets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """One complete experiment description."""

    lam: float
    value_dist: InitialValueDist
    service: ServiceModel
    descend: DescendFunction
    discipline: str = MG11
    admission: str = SERVE_ALL

    def __post_init__(self) -> None:
        if not (self.lam > 0.0):
            raise ValueError("arrival rate must be > 0")
        if self.discipline not in DISCIPLINES:
            raise ValueError(f"unknown discipline {self.discipline!r}")
        if self.admission not in ADMISSIONS:
            raise ValueError(f"unknown admission policy {self.admission!r}")
        binary = isinstance(self.value_dist, BinaryValue)
        if self.admission != SERVE_ALL and not binary:
            raise ValueError("class-only admission requires a binary value distribution")
        if isinstance(self.service, ClassExponentialService) and not binary:
            raise ValueError("class-conditional service requires a binary value distribution")

    def admitted_class(self) -> Optional[int]:
        if self.admission == CLASS_ONLY_1:
            return 1
        if self.admission == CLASS_ONLY_2:
            return 2
        return None


def admitted_fraction(scenario: Scenario) -> float:
    """Probability that an arriving packet passes the admission filter."""
    cls = scenario.admitted_class()
    if cls is None:
        return 1.0
    assert isinstance(scenario.value_dist, BinaryValue)
    return scenario.value_dist.p if cls == 1 else 1.0 - scenario.value_dist.p


def effective_lambda(scenario: Scenario) -> float:
    """Arrival rate of the admitted (thinned) Poisson stream."""
    return scenario.lam * admitted_fraction(scenario)


def admitted_atoms(scenario: Scenario) -> Optional[tuple[tuple[float, float, int], ...]]:
    """Value atoms seen by the queue, renormalized after class filtering.

    Returns None for continuous value distributions.
    """
    dist = scenario.value_dist
    if not isinstance(dist, BinaryValue):
        return None
    keep = scenario.admitted_class()
    atoms = dist.atoms()
    if keep is not None:
        atoms = tuple((v, 1.0, c) for v, _, c in atoms if c == keep)
    return atoms


@dataclass(frozen=True)
class Packet:
    """One status update as generated (and possibly delivered)."""

    id: int
    t_gen: float
    v0: float
    s: float
    cls: Optional[int] = None
    t_recv: Optional[float] = None
    discarded: bool = False
    q_area: float = 0.0

    def __post_init__(self) -> None:
        if self.t_recv is not None and self.t_recv < self.t_gen + self.s - 1e-9:
            raise ValueError("reception cannot precede generation + service")
        if self.discarded and self.q_area != 0.0:
            raise ValueError("discarded packets collect no area")


# ---------------------------------------------------------------------------
# Service transform
# ---------------------------------------------------------------------------

def mean_service_time(scenario: Scenario) -> float:
    """E[S] of the service requirement seen by the queue (after admission)."""
    svc = scenario.service
    if isinstance(svc, IndependentExponentialService):
        return 1.0 / svc.rate
    if isinstance(svc, IndependentDeterministicService):
        return svc.s0
    atoms = admitted_atoms(scenario)
    if isinstance(svc, ClassExponentialService):
        assert atoms is not None
        return sum(pr * v for v, pr, _ in atoms)
    assert isinstance(svc, DependentService)
    if atoms is not None:
        return sum(pr * svc.g(v) for v, pr, _ in atoms)
    lo, hi = scenario.value_dist.support()
    return integrate(lambda v: svc.g(v) * scenario.value_dist.pdf(v), lo, hi)


def mgf_service(scenario: Scenario, lam: Optional[float] = None) -> float:
    """E[exp(-lam * S)] of the admitted service distribution.

    Defaults to the scenario's (thinned) arrival rate, which is the transform
    the buffered disciplines' stationary probabilities need.
    """
    if lam is None:
        lam = effective_lambda(scenario)
    if lam < 0.0:
        raise ValueError("transform argument must be >= 0")
    svc = scenario.service
    if isinstance(svc, IndependentExponentialService):
        return svc.rate / (svc.rate + lam)
    if isinstance(svc, IndependentDeterministicService):
        return math.exp(-lam * svc.s0)
    atoms = admitted_atoms(scenario)
    if isinstance(svc, ClassExponentialService):
        assert atoms is not None
        return sum(pr / (1.0 + lam * v) for v, pr, _ in atoms)
    assert isinstance(svc, DependentService)
    if atoms is not None:
        return sum(pr * math.exp(-lam * svc.g(v)) for v, pr, _ in atoms)
    lo, hi = scenario.value_dist.support()
    return integrate(lambda v: math.exp(-lam * svc.g(v)) * scenario.value_dist.pdf(v), lo, hi)


def one_minus_mgf_service(scenario: Scenario, lam: Optional[float] = None) -> float:
    """1 - MGF_S(lam) evaluated without cancellation for small lam."""
    if lam is None:
        lam = effective_lambda(scenario)
    svc = scenario.service
    if isinstance(svc, IndependentExponentialService):
        return lam / (svc.rate + lam)
    if isinstance(svc, IndependentDeterministicService):
        return -math.expm1(-lam * svc.s0)
    atoms = admitted_atoms(scenario)
    if isinstance(svc, ClassExponentialService):
        assert atoms is not None
        return sum(pr * lam * v / (1.0 + lam * v) for v, pr, _ in atoms)
    assert isinstance(svc, DependentService)
    if atoms is not None:
        return sum(-pr * math.expm1(-lam * svc.g(v)) for v, pr, _ in atoms)
    lo, hi = scenario.value_dist.support()
    return integrate(
        lambda v: -math.expm1(-lam * svc.g(v)) * scenario.value_dist.pdf(v), lo, hi
    )
