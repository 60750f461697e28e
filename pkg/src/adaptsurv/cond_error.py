"""Conditional error pathway for extending follow-up to more events.

The pre-planned test rejects when the pooled standardised logrank at the
d12-th event exceeds z_{1-alpha}.  Its conditional null rejection probability
given the first-stage score is carried over to the extended analysis at
d12* events through the cutoff b*.  The resulting decision coincides with the
inverse-normal combination test using data-dependent weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import combo_test as ct
from .numerics import norm_quantile, norm_sf


class AllInformationUsed(ValueError):
    """All pre-planned events are first-stage events; nothing left to condition on."""


# decisions within this distance of the boundary (standardised scale) are
# treated as ties when comparing the two pathways
BOUNDARY_BAND = 1e-12


@dataclass(frozen=True)
class JointNullModel:
    """Null law of (S1(t), S12(t) - S1(t)): independent normals, variances D/4."""

    d1_t: float
    d12_t: float

    def __post_init__(self):
        if not 0 <= self.d1_t <= self.d12_t:
            raise ValueError("need 0 <= D1 <= D12")

    @property
    def variances(self) -> tuple[float, float]:
        return self.d1_t / 4.0, (self.d12_t - self.d1_t) / 4.0


@dataclass(frozen=True)
class ConditionalErrorRecord:
    ce: float
    c_star: float
    b_star: float


def _increment_cutoff(p1: float, d1_t12: float, d12: float, alpha: float) -> float:
    # cutoff for the standardised increment; the conditional error is its normal tail
    if d1_t12 >= d12:
        raise AllInformationUsed(f"D1(T12)={d1_t12} leaves no second-stage information")
    if d1_t12 == 0:
        return ct.z_from_p(alpha)
    rest = d12 - d1_t12
    return (ct.z_from_p(alpha) * math.sqrt(d12 / rest)
            - ct.z_from_p(p1) * math.sqrt(d1_t12 / rest))


def conditional_error(p1: float, d1_t12: float, d12: float, alpha: float) -> float:
    """P_H0(pooled test rejects | first-stage p-value p1 at T12)."""
    if d1_t12 == 0 and d1_t12 < d12:
        return float(alpha)
    return float(norm_sf(_increment_cutoff(p1, d1_t12, d12, alpha)))


def conditional_error_from_score(s1: float, d1_t12: float, d12: float, alpha: float) -> float:
    return conditional_error(ct.p1_first_stage(s1, d1_t12), d1_t12, d12, alpha)


def cutoff_c_star(ce: float) -> float:
    """Cutoff for the standardised second-stage increment."""
    if not 0.0 < ce < 1.0:
        raise ValueError(f"conditional error must be in (0, 1), got {ce}")
    return -norm_quantile(ce)


def cutoff_b_star(c_star: float, s1_star: float, d1_star: float, d12_star: float) -> float:
    """Cutoff for the pooled statistic 2*S12/sqrt(d12*) equivalent to c* on the increment."""
    if d12_star <= d1_star:
        raise ct.DegenerateIncrement(f"d12*={d12_star} must exceed D1(T12*)={d1_star}")
    return (2.0 * s1_star + c_star * math.sqrt(d12_star - d1_star)) / math.sqrt(d12_star)


def psi_decision(s12_star: float, d12_star: float, b_star: float) -> bool:
    if d12_star < 1:
        raise ct.ZeroEvents("d12* must be >= 1")
    return bool(2.0 * s12_star / math.sqrt(d12_star) >= b_star)


def psi_extended(s2_plus: float, d2_plus: float, b_star: float) -> bool:
    """Second-stage test on all post-interim patients (extended recruitment).

    Under H0, 2*S2+/sqrt(D2+) is standard normal and independent of the
    first-stage data, so ``b_star`` should be ``cutoff_c_star(ce)``.
    """
    return bool(ct.standardized(s2_plus, d2_plus) >= b_star)


def extended_b_star(ce: float) -> float:
    return cutoff_c_star(ce)


def ce_record(s1: float, d1_t12: float, d12: float, s1_star: float, d1_star: float,
              d12_star: float, alpha: float) -> ConditionalErrorRecord:
    p1 = ct.p1_first_stage(s1, d1_t12)
    # c* taken straight from the closed form stays finite when the error rounds to 0 or 1
    c = _increment_cutoff(p1, d1_t12, d12, alpha)
    ce = conditional_error(p1, d1_t12, d12, alpha)
    return ConditionalErrorRecord(ce, c, cutoff_b_star(c, s1_star, d1_star, d12_star))


@dataclass(frozen=True)
class EquivalenceOutcome:
    psi: bool
    combination: bool
    margin: float  # distance of Z from its cutoff

    @property
    def agree(self) -> bool:
        return self.psi == self.combination or abs(self.margin) <= BOUNDARY_BAND


def compare_pathways(s1: float, d1_t12: float, d12: float, s1_star: float, d1_star: float,
                     s12_star: float, d12_star: float, alpha: float) -> EquivalenceOutcome:
    """Evaluate the psi decision and the combination decision on the same data."""
    rec = ce_record(s1, d1_t12, d12, s1_star, d1_star, d12_star, alpha)
    psi = psi_decision(s12_star, d12_star, rec.b_star)
    w = ct.irle_weights(d1_t12, d12)
    p = ct.StagePValues(ct.p1_first_stage(s1, d1_t12),
                        ct.p2_increment(s12_star, s1_star, d12_star, d1_star))
    cutoff = ct.z_from_p(alpha)
    res = ct.decide(ct.combine(w, p), cutoff)
    return EquivalenceOutcome(psi, res.reject, res.z - cutoff)


def equivalence_check(s1: float, d1_t12: float, d12: float, s1_star: float, d1_star: float,
                      s12_star: float, d12_star: float, alpha: float) -> bool:
    """True when the two pathways agree (ties at the boundary excepted)."""
    return compare_pathways(s1, d1_t12, d12, s1_star, d1_star, s12_star, d12_star, alpha).agree
