"""Final-analysis decisions from snapshot values or from a patient-level dataset."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from . import combo_test as ct
from . import cond_error as ce
from .surv_core import SurvivalData, calendar_time_of_event_count, events_by, snapshot
from .wiener_bound import DEFAULT_KNOTS, corrected_kstar


@dataclass(frozen=True)
class AnalysisResult:
    w1: float
    w2: float
    p1: float
    p2: float
    z: float
    z_cutoff: float
    reject_combination: bool
    conditional_error: float
    c_star: float
    b_star: float
    pooled_z: float
    reject_psi: bool
    u1: float
    k_star: float
    z_star: float
    reject_corrected: bool
    ignored_events: int

    def as_dict(self) -> dict:
        return asdict(self)


def analyze_snapshots(s1: float, d1: int, d12: int, s1_star: float, d1_star: int,
                      s12_star: float, d12_star: int, alpha: float, *, u1: float | None = None,
                      k_star: float | None = None, knots: int = DEFAULT_KNOTS) -> AnalysisResult:
    """Decisions after extending follow-up from d12 to d12_star pooled events.

    ``s1, d1``: first-stage score and events at T12; ``s1_star, d1_star,
    s12_star``: first-stage and pooled scores at T12*.  The corrected test
    needs ``k_star`` or the information fraction ``u1`` to compute it.
    """
    w = ct.irle_weights(d1, d12)
    p1 = ct.p1_first_stage(s1, d1)
    p2 = ct.p2_increment(s12_star, s1_star, d12_star, d1_star)
    z_alpha = ct.z_from_p(alpha)
    comb = ct.decide(ct.combine(w, ct.StagePValues(p1, p2)), z_alpha)
    rec = ce.ce_record(s1, d1, d12, s1_star, d1_star, d12_star, alpha)
    pooled = 2.0 * s12_star / math.sqrt(d12_star)
    if k_star is None:
        if u1 is None:
            raise ValueError("need u1 or k_star for the corrected test")
        k_star = corrected_kstar(w.w1, u1, alpha, knots)
    z_star = ct.z_star_naive(w, s1_star, d1_star, p2)
    return AnalysisResult(
        w1=w.w1, w2=w.w2, p1=p1, p2=p2, z=comb.z, z_cutoff=z_alpha,
        reject_combination=comb.reject, conditional_error=rec.ce, c_star=rec.c_star,
        b_star=rec.b_star, pooled_z=pooled, reject_psi=ce.psi_decision(s12_star, d12_star, rec.b_star),
        u1=float("nan") if u1 is None else u1, k_star=k_star, z_star=z_star,
        reject_corrected=ct.decide(z_star, k_star).reject, ignored_events=int(d1_star - d1),
    )


def analyze_dataset(data: SurvivalData, d12: int, d12_star: int, alpha: float, *,
                    t_max: float | None = None, k_star: float | None = None,
                    knots: int = DEFAULT_KNOTS) -> AnalysisResult:
    """Locate T12 and T12* by pooled event counts and analyse as above.

    Without ``t_max`` the first-stage information at Tmax is taken as the number
    of first-stage patients (complete follow-up).
    """
    first = data.stage_subset(1)
    t12 = calendar_time_of_event_count(data, d12)
    t12_star = calendar_time_of_event_count(data, d12_star)
    a = snapshot(first, t12)
    b = snapshot(first, t12_star)
    pooled = snapshot(data, t12_star)
    d1_max = events_by(first, t_max) if t_max is not None else len(first)
    u1 = min(1.0, a.d_events / d1_max) if d1_max else 1.0
    return analyze_snapshots(a.score, a.d_events, d12, b.score, b.d_events, pooled.score,
                             d12_star, alpha, u1=u1, k_star=k_star, knots=knots)
