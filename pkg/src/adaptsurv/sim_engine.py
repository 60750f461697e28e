"""Trial simulator, event-number planning and Monte Carlo operating characteristics."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Union

import numpy as np

from . import combo_test as ct
from . import cond_error as ce
from .numerics import derive_rng, find_root, gl_nodes, norm_quantile, sample_uniform
from .surv_core import (
    InsufficientEvents,
    SurvivalData,
    calendar_time_of_event_count,
    events_by,
    logrank_many,
    snapshot,
)
from .wiener_bound import corrected_kstar


# --- hazard models ------------------------------------------------------------

@dataclass(frozen=True)
class Exponential:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("exponential rate must be positive")

    def cum_hazard(self, tau):
        return self.lam * np.asarray(tau, dtype=float)

    def inverse_cum_hazard(self, h):
        return np.asarray(h, dtype=float) / self.lam


@dataclass(frozen=True)
class DivergingControl:
    """Hazard 1/(1/base - slope*tau) up to ``limit``, frozen at its limit value after."""

    base: float = 0.04
    slope: float = 0.6
    limit: float = 30.0

    def __post_init__(self):
        if self.base <= 0 or self.slope < 0 or self.limit <= 0:
            raise ValueError("need base > 0, slope >= 0, limit > 0")
        if 1.0 / self.base - self.slope * self.limit <= 0:
            raise ValueError("hazard must stay finite on (0, limit)")

    @property
    def _h_limit(self) -> float:
        return 1.0 / (1.0 / self.base - self.slope * self.limit)

    @property
    def _cum_limit(self) -> float:
        return float(self._cum_inner(self.limit))

    def _cum_inner(self, tau):
        a, s = 1.0 / self.base, self.slope
        if s == 0:
            return tau / a
        return np.log(a / (a - s * tau)) / s

    def cum_hazard(self, tau):
        tau = np.asarray(tau, dtype=float)
        inner = self._cum_inner(np.minimum(tau, self.limit))
        return inner + np.maximum(tau - self.limit, 0.0) * self._h_limit

    def inverse_cum_hazard(self, h):
        h = np.asarray(h, dtype=float)
        a, s = 1.0 / self.base, self.slope
        inner = h * a if s == 0 else (a / s) * (1.0 - np.exp(-s * np.minimum(h, self._cum_limit)))
        return np.where(h <= self._cum_limit, inner,
                        self.limit + (h - self._cum_limit) / self._h_limit)


HazardModel = Union[Exponential, DivergingControl]


def survival_fn(h: HazardModel, tau):
    return np.exp(-h.cum_hazard(np.maximum(tau, 0.0)))


def sample_survival(h: HazardModel, rng: np.random.Generator, size=None):
    """Inverse cumulative-hazard sampling: tau = H^{-1}(-log U)."""
    return h.inverse_cum_hazard(-np.log(sample_uniform(rng, size)))


# --- design objects -------------------------------------------------------------

@dataclass(frozen=True)
class NoChange:
    pass


@dataclass(frozen=True)
class IncreaseEvents:
    d12_star: int


@dataclass(frozen=True)
class AdversarialMaxStop:
    """Stop first-stage follow-up where its standardised logrank peaks in [T1, Tmax]."""


AdaptiveRule = Union[NoChange, IncreaseEvents, AdversarialMaxStop]


class EventRequirement(NamedTuple):
    events: int  # rounded up to an even integer
    exact: float


def required_events(alpha: float, beta: float, theta_r: float) -> EventRequirement:
    """Events for a one-sided level-alpha logrank test with power 1-beta at theta_R (1:1)."""
    if not (0 < alpha < 1 and 0 < beta < 1) or not theta_r > 0:
        raise ValueError("need 0 < alpha, beta < 1 and theta_R > 0")
    exact = 4.0 * ((norm_quantile(1 - alpha) + norm_quantile(1 - beta)) / theta_r) ** 2
    return EventRequirement(2 * math.ceil(exact / 2.0 - 1e-12), exact)


@dataclass(frozen=True)
class DesignSpec:
    alpha: float
    beta: float
    theta_r: float
    d12: int
    weight_rule: str = "irle"  # "irle" or "jenkins"
    jenkins_d1: int | None = None
    jenkins_d2: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if not 0 < self.beta < 1:
            raise ValueError("beta must be in (0, 1)")
        if not self.theta_r > 0:
            raise ValueError("theta_R must be positive")
        if self.d12 < 2:
            raise ValueError("d12 must be >= 2")
        if self.weight_rule not in ("irle", "jenkins"):
            raise ValueError("weight_rule must be 'irle' or 'jenkins'")
        if self.weight_rule == "jenkins":
            if not self.jenkins_d1 or not self.jenkins_d2 or self.jenkins_d1 < 1 or self.jenkins_d2 < 1:
                raise ValueError("jenkins weights need jenkins_d1 >= 1 and jenkins_d2 >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    control: HazardModel
    experimental: HazardModel
    accrual_rate: float
    accrual_months: float
    followup_months: float
    design: DesignSpec
    interim_month: float | None = None
    interim_events: int | None = None
    rule: AdaptiveRule = field(default_factory=NoChange)

    def __post_init__(self):
        if not (self.accrual_rate > 0 and self.accrual_months > 0 and self.followup_months >= 0):
            raise ValueError("accrual rate/months must be positive, follow-up nonnegative")
        if (self.interim_month is None) == (self.interim_events is None):
            raise ValueError("give exactly one of interim_month / interim_events")
        if self.interim_month is not None and not 0 < self.interim_month < self.t_max:
            raise ValueError("interim must fall inside (0, Tmax)")
        if self.interim_events is not None and self.interim_events < 1:
            raise ValueError("interim_events must be >= 1")
        if isinstance(self.rule, IncreaseEvents) and self.rule.d12_star <= self.design.d12:
            raise ValueError("d12_star must exceed d12")

    @property
    def t_max(self) -> float:
        return self.accrual_months + self.followup_months

    @property
    def n_patients(self) -> int:
        return int(round(self.accrual_rate * self.accrual_months))


# --- accrual and simulation ----------------------------------------------------

def accrual_entries(rate: float, months: float, rng: np.random.Generator) -> np.ndarray:
    """Deterministic monthly quotas, each placed uniformly within its month."""
    n_months = int(math.ceil(months - 1e-12))
    cum = np.round(rate * np.minimum(np.arange(n_months + 1), months)).astype(int)
    quotas = np.diff(cum)
    month = np.repeat(np.arange(n_months), quotas)
    span = np.minimum(1.0, months - month)
    return np.sort(month + span * sample_uniform(rng, month.size))


def block_allocation(n: int, rng: np.random.Generator) -> np.ndarray:
    """1:1 allocation in permuted blocks of two; True means control."""
    flips = rng.random((n + 1) // 2) < 0.5
    ctl = np.empty(2 * flips.size, dtype=bool)
    ctl[0::2], ctl[1::2] = flips, ~flips
    return ctl[:n]


def simulate_trial(sc: ScenarioConfig, rng: np.random.Generator) -> SurvivalData:
    entry = accrual_entries(sc.accrual_rate, sc.accrual_months, rng)
    control = block_allocation(entry.size, rng)
    u = sample_uniform(rng, entry.size)
    hc = -np.log(u)
    surv = np.where(control, sc.control.inverse_cum_hazard(hc), sc.experimental.inverse_cum_hazard(hc))
    surv = np.maximum(surv, np.finfo(float).tiny)
    if sc.interim_month is not None:
        t_int = sc.interim_month
    else:
        events = np.sort(entry + surv)
        if events.size < sc.interim_events:
            raise InsufficientEvents("interim event count never reached")
        t_int = events[sc.interim_events - 1]
    stage = np.where(entry < t_int, 1, 2)
    return SurvivalData(entry, surv, control, stage)


# --- expected events -------------------------------------------------------------

def _expected_by(sc: ScenarioConfig, t: float, entry_hi: float, nodes: int = 64) -> float:
    """Expected events by calendar t among patients entering before ``entry_hi``."""
    hi = min(t, entry_hi, sc.accrual_months)
    if hi <= 0:
        return 0.0
    e, w = gl_nodes(0.0, hi, nodes)
    half = 0.5 * sc.accrual_rate
    total = 0.0
    for model in (sc.control, sc.experimental):
        total += half * float(np.dot(w, 1.0 - survival_fn(model, t - e)))
    return total


def expected_events(sc: ScenarioConfig, t: float, stage: int | None = None) -> float:
    """Expected number of events by calendar time ``t`` (optionally one stage only)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if stage is None:
        return _expected_by(sc, t, math.inf)
    t_int = expected_interim_time(sc)
    if stage == 1:
        return _expected_by(sc, t, t_int)
    return _expected_by(sc, t, math.inf) - _expected_by(sc, t, t_int)


def expected_time_of_events(sc: ScenarioConfig, d: float, stage: int | None = None) -> float:
    hi = sc.t_max
    while expected_events(sc, hi, stage) < d:
        hi *= 2
        if hi > 1e5:
            raise InsufficientEvents(f"expected events never reach {d}")
    return find_root(lambda t: expected_events(sc, t, stage) - d, 0.0, hi, 1e-8)


def expected_interim_time(sc: ScenarioConfig) -> float:
    if sc.interim_month is not None:
        return sc.interim_month
    return expected_time_of_events(sc, sc.interim_events)


class PlanningValues(NamedTuple):
    t1: float
    d1_t1: float
    d1_tmax: float
    w1: float
    u1: float


def planning_values(sc: ScenarioConfig) -> PlanningValues:
    """Expected first-stage information at T1 and Tmax, and the implied (w1, u1)."""
    d = sc.design
    if d.weight_rule == "jenkins":
        t1 = expected_time_of_events(sc, d.jenkins_d1, stage=1)
        d1_t1 = float(d.jenkins_d1)
        w1 = ct.jenkins_weights(d.jenkins_d1, d.jenkins_d2).w1
    else:
        t1 = expected_time_of_events(sc, d.d12)
        d1_t1 = expected_events(sc, t1, stage=1)
        w1 = math.sqrt(d1_t1 / d.d12)
    d1_tmax = expected_events(sc, max(sc.t_max, t1), stage=1)
    return PlanningValues(t1, d1_t1, d1_tmax, w1, min(1.0, d1_t1 / d1_tmax))


def planned_kstar(sc: ScenarioConfig) -> float:
    pv = planning_values(sc)
    return corrected_kstar(pv.w1, pv.u1, sc.design.alpha)


# --- one adaptive trial -----------------------------------------------------------

@dataclass
class TrialRecord:
    t1: float
    d1_t1: int
    s1_t1: float
    w1: float
    p1: float
    t_final: float
    d12_final: int
    d1_final: int
    s1_final: float
    s12_final: float
    p2: float
    z: float
    reject_combination: bool
    reject_psi: bool | None
    t_star: float
    d1_tstar: int
    s1_tstar: float
    z_star: float
    reject_naive: bool
    reject_corrected: bool
    d1_tmax: int
    u1: float
    deficit: float
    d1_t12: int


def run_adaptive(sc: ScenarioConfig, rng: np.random.Generator, rule: AdaptiveRule | None = None,
                 k_star: float | None = None) -> TrialRecord:
    """Simulate one trial and apply the combination, naive Z* and corrected tests."""
    rule = sc.rule if rule is None else rule
    d = sc.design
    if k_star is None:
        k_star = planned_kstar(sc)
    z_alpha = ct.z_from_p(d.alpha)
    data = simulate_trial(sc, rng)
    first, second = data.stage_subset(1), data.stage_subset(2)

    t12 = calendar_time_of_event_count(data, d.d12)
    d12_star = rule.d12_star if isinstance(rule, IncreaseEvents) else d.d12
    t12_star = calendar_time_of_event_count(data, d12_star)

    if d.weight_rule == "jenkins":
        t1 = calendar_time_of_event_count(first, d.jenkins_d1)
        w = ct.jenkins_weights(d.jenkins_d1, d.jenkins_d2)
    else:
        t1 = t12
    snap1 = snapshot(first, t1)
    if d.weight_rule == "irle":
        w = ct.irle_weights(snap1.d_events, d.d12)
    d1_t12 = events_by(first, t12)
    p1 = ct.p1_first_stage(snap1.score, snap1.d_events)

    fin1 = snapshot(first, t12_star)
    fin12 = snapshot(data, t12_star)
    reject_psi = None
    if d.weight_rule == "jenkins":
        d2_target = d.jenkins_d2 if not isinstance(rule, IncreaseEvents) else rule.d12_star - d.jenkins_d1
        t2 = calendar_time_of_event_count(second, d2_target)
        snap2 = snapshot(second, t2)
        p2 = ct.p2_second_stage(snap2.score, snap2.d_events)
    else:
        p2 = ct.p2_increment(fin12.score, fin1.score, d12_star, fin1.d_events)
        reject_psi = ce.compare_pathways(snap1.score, snap1.d_events, d.d12, fin1.score,
                                         fin1.d_events, fin12.score, d12_star, d.alpha).psi
    z = ct.combine(w, ct.StagePValues(p1, p2))

    if isinstance(rule, AdversarialMaxStop):
        ev = first.event_calendar_times
        scan = np.concatenate(([t1], ev[(ev > t1) & (ev <= sc.t_max)]))
        dd, ss = logrank_many(first.entry, first.surv, first.control, scan)
        std = 2.0 * ss / np.sqrt(dd)
        i = int(np.argmax(std))
        t_star, d1_tstar, s1_tstar = float(scan[i]), int(dd[i]), float(ss[i])
    else:
        t_star, d1_tstar, s1_tstar = t12_star, fin1.d_events, fin1.score
    z_star = ct.z_star_naive(w, s1_tstar, d1_tstar, p2)

    d1_tmax = events_by(first, max(sc.t_max, t1))
    return TrialRecord(
        t1=t1, d1_t1=snap1.d_events, s1_t1=snap1.score, w1=w.w1, p1=p1,
        t_final=t12_star, d12_final=d12_star, d1_final=fin1.d_events, s1_final=fin1.score,
        s12_final=fin12.score, p2=p2, z=z, reject_combination=z > z_alpha, reject_psi=reject_psi,
        t_star=t_star, d1_tstar=d1_tstar, s1_tstar=s1_tstar, z_star=z_star,
        reject_naive=z_star > z_alpha, reject_corrected=z_star > k_star,
        d1_tmax=d1_tmax, u1=snap1.d_events / d1_tmax if d1_tmax else 1.0,
        deficit=(d12_star - d.d12) - (fin1.d_events - d1_t12), d1_t12=d1_t12,
    )


# --- operating characteristics ----------------------------------------------------

@dataclass
class RateEstimate:
    rate: float
    se: float


@dataclass
class SimSummary:
    replications: int
    k_star: float
    combination: RateEstimate
    naive: RateEstimate
    corrected: RateEstimate
    psi_agreement: float | None
    mean_d1_t1: float
    mean_d1_tmax: float
    mean_d12: float
    mean_w1: float
    mean_u1: float
    mean_deficit: float

    def rows(self) -> list[dict]:
        """One row per test variant (the summary CSV layout)."""
        out = []
        for name in ("combination", "naive", "corrected"):
            est = getattr(self, name)
            out.append({"test": name, "reject_rate": est.rate, "se": est.se,
                        "replications": self.replications, "k_star": self.k_star,
                        "mean_d1_t1": self.mean_d1_t1, "mean_d1_tmax": self.mean_d1_tmax,
                        "mean_d12": self.mean_d12, "mean_w1": self.mean_w1,
                        "mean_u1": self.mean_u1, "mean_deficit": self.mean_deficit})
        return out


def _rate(flags) -> RateEstimate:
    f = np.asarray(flags, dtype=float)
    p = float(f.mean())
    return RateEstimate(p, math.sqrt(p * (1 - p) / f.size))


def _run_chunk(args):
    sc, rule, seed, k_star, indices = args
    return [run_adaptive(sc, derive_rng(seed, i), rule, k_star) for i in indices]


def simulate_many(sc: ScenarioConfig, n_reps: int, seed: int, rule: AdaptiveRule | None = None,
                  k_star: float | None = None, workers: int = 1) -> list[TrialRecord]:
    """Replication i always uses child stream i of ``seed``; order is by index."""
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    rule = sc.rule if rule is None else rule
    if k_star is None:
        k_star = planned_kstar(sc)
    if workers <= 1:
        return _run_chunk((sc, rule, seed, k_star, range(n_reps)))
    chunks = [range(i, min(i + 250, n_reps)) for i in range(0, n_reps, 250)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_run_chunk, [(sc, rule, seed, k_star, c) for c in chunks])
        return [rec for part in parts for rec in part]


def summarize(records: list[TrialRecord], k_star: float) -> SimSummary:
    psi = [r.reject_psi == r.reject_combination for r in records if r.reject_psi is not None]
    return SimSummary(
        replications=len(records),
        k_star=k_star,
        combination=_rate([r.reject_combination for r in records]),
        naive=_rate([r.reject_naive for r in records]),
        corrected=_rate([r.reject_corrected for r in records]),
        psi_agreement=float(np.mean(psi)) if psi else None,
        mean_d1_t1=float(np.mean([r.d1_t1 for r in records])),
        mean_d1_tmax=float(np.mean([r.d1_tmax for r in records])),
        mean_d12=float(np.mean([r.d12_final for r in records])),
        mean_w1=float(np.mean([r.w1 for r in records])),
        mean_u1=float(np.mean([r.u1 for r in records])),
        mean_deficit=float(np.mean([r.deficit for r in records])),
    )


def operating_characteristics(sc: ScenarioConfig, rule: AdaptiveRule | None, n_reps: int, seed: int,
                              k_star: float | None = None, workers: int = 1) -> SimSummary:
    if k_star is None:
        k_star = planned_kstar(sc)
    return summarize(simulate_many(sc, n_reps, seed, rule, k_star, workers), k_star)


def record_dict(rec: TrialRecord) -> dict:
    return asdict(rec)
