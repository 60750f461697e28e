"""Survival data, administrative censoring and the logrank score process.

Times are in months.  ``entry`` is calendar time of randomisation, ``surv``
the latent survival time measured from entry.  At calendar time ``t`` a
subject is observed for ``t - entry`` months; the event is seen iff
``surv <= t - entry``.  Risk sets run on the time-since-entry scale.

The score is observed minus expected deaths on the control arm, so a
positive score favours the experimental arm.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class Arm(str, Enum):
    CONTROL = "C"
    EXPERIMENTAL = "E"


class InsufficientEvents(RuntimeError):
    """Fewer events can ever occur than the requested count."""


class ZeroInformation(ValueError):
    pass


@dataclass(frozen=True)
class SubjectRecord:
    entry: float
    surv: float
    arm: Arm
    stage: int  # 1 if recruited before the interim look, else 2

    def __post_init__(self):
        if self.entry < 0:
            raise ValueError("entry must be >= 0")
        if not self.surv > 0:
            raise ValueError("survival time must be > 0")
        if self.stage not in (1, 2):
            raise ValueError("stage must be 1 or 2")


@dataclass(frozen=True)
class Snapshot:
    calendar_time: float
    d_events: int
    score: float


@dataclass(frozen=True)
class KmCurve:
    times: np.ndarray
    survival: np.ndarray

    def at(self, tau: float) -> float:
        """Right-continuous step value at time-since-entry ``tau``."""
        i = np.searchsorted(self.times, tau, side="right")
        return float(self.survival[i - 1]) if i > 0 else 1.0


class SurvivalData:
    """Column store of subject records (what the simulator and CSV reader produce)."""

    def __init__(self, entry, surv, control, stage):
        self.entry = np.asarray(entry, dtype=float)
        self.surv = np.asarray(surv, dtype=float)
        self.control = np.asarray(control, dtype=bool)
        self.stage = np.asarray(stage, dtype=np.int8)
        n = self.entry.size
        if not (self.surv.size == self.control.size == self.stage.size == n):
            raise ValueError("column lengths differ")
        if n and (self.entry.min() < 0 or self.surv.min() <= 0):
            raise ValueError("need entry >= 0 and surv > 0")

    @classmethod
    def from_records(cls, records: Iterable[SubjectRecord]) -> "SurvivalData":
        recs = list(records)
        return cls([r.entry for r in recs], [r.surv for r in recs],
                   [Arm(r.arm) is Arm.CONTROL for r in recs], [r.stage for r in recs])

    def records(self) -> list[SubjectRecord]:
        return [SubjectRecord(float(e), float(s), Arm.CONTROL if c else Arm.EXPERIMENTAL, int(g))
                for e, s, c, g in zip(self.entry, self.surv, self.control, self.stage)]

    def __len__(self):
        return self.entry.size

    def subset(self, mask) -> "SurvivalData":
        mask = np.asarray(mask, dtype=bool)
        return SurvivalData(self.entry[mask], self.surv[mask], self.control[mask], self.stage[mask])

    def stage_subset(self, stage: int) -> "SurvivalData":
        return self.subset(self.stage == stage)

    def swap_arms(self) -> "SurvivalData":
        return SurvivalData(self.entry, self.surv, ~self.control, self.stage)

    @property
    def event_calendar_times(self) -> np.ndarray:
        return np.sort(self.entry + self.surv)


def _censor_times(data: SurvivalData, t: float, extra_censor: Mapping[int, float] | None) -> np.ndarray:
    cut = np.full(len(data), float(t))
    if extra_censor:
        for stage, when in extra_censor.items():
            sel = data.stage == stage
            cut[sel] = np.minimum(cut[sel], when)
    return cut


def logrank_many(entry, surv, control, cutoffs) -> tuple[np.ndarray, np.ndarray]:
    """Event counts and logrank scores for several administrative cutoffs.

    ``cutoffs`` has shape (K,) (one calendar time per analysis, shared by all
    subjects) or (K, n) (per-subject calendar censoring).  Returns arrays of
    shape (K,).  Tied times are handled: every subject whose follow-up reaches
    an event time is in that risk set.
    """
    entry = np.asarray(entry, dtype=float)
    surv = np.asarray(surv, dtype=float)
    control = np.asarray(control, dtype=bool)
    cut = np.asarray(cutoffs, dtype=float)
    if cut.ndim == 1:
        cut = cut[:, None]
    n = entry.size
    k = cut.shape[0]
    if n == 0:
        return np.zeros(k, dtype=int), np.zeros(k)
    follow = cut - entry[None, :]
    recruited = follow > 0
    # compare on the calendar scale so counts agree with event_calendar_times
    event = recruited & (entry[None, :] + surv[None, :] <= cut)
    # not yet recruited -> -1, below every positive event time
    obs = np.where(event, surv[None, :], np.where(recruited, follow, -1.0))

    order = np.argsort(obs, axis=1, kind="stable")
    sv = np.take_along_axis(obs, order, axis=1)
    ev = np.take_along_axis(event, order, axis=1)
    ctl = control[order]
    pos = np.broadcast_to(np.arange(n), (k, n))
    new_group = np.ones((k, n), dtype=bool)
    new_group[:, 1:] = sv[:, 1:] != sv[:, :-1]
    first = np.maximum.accumulate(np.where(new_group, pos, 0), axis=1)
    at_risk = n - first
    ctl_from = np.cumsum(ctl[:, ::-1], axis=1)[:, ::-1]
    ctl_at_risk = np.take_along_axis(ctl_from, first, axis=1)
    contrib = np.where(ev, ctl - ctl_at_risk / at_risk, 0.0)
    return ev.sum(axis=1), contrib.sum(axis=1)


def snapshot(data: SurvivalData, t: float, extra_censor: Mapping[int, float] | None = None) -> Snapshot:
    """Logrank score and event count at calendar time ``t``.

    ``extra_censor`` maps a stage label to an earlier calendar censoring time
    for that stage (e.g. first-stage patients censored at T12 while
    second-stage patients are followed to T12*).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if len(data) == 0:
        return Snapshot(float(t), 0, 0.0)
    cut = _censor_times(data, t, extra_censor)
    d, s = logrank_many(data.entry, data.surv, data.control, cut[None, :])
    score = float(s[0]) if d[0] else 0.0
    return Snapshot(float(t), int(d[0]), score)


def score_process(data: SurvivalData, times) -> tuple[np.ndarray, np.ndarray]:
    """(D(t), S(t)) at each calendar time in ``times``."""
    return logrank_many(data.entry, data.surv, data.control, np.asarray(times, dtype=float))


def events_by(data: SurvivalData, t: float) -> int:
    return int(np.count_nonzero(data.entry + data.surv <= t))


def calendar_time_of_event_count(data: SurvivalData, d: int) -> float:
    """Calendar time of the d-th event (first time the event count reaches d)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    times = data.event_calendar_times
    if times.size < d:
        raise InsufficientEvents(f"only {times.size} events can occur, {d} requested")
    return float(times[d - 1])


def information_time(first_stage: SurvivalData, t: float, t_max: float) -> float:
    """u = D1(t) / D1(t_max)."""
    if t > t_max:
        raise ValueError("t must not exceed t_max")
    total = events_by(first_stage, t_max)
    if total == 0:
        raise ZeroInformation("no first-stage events by t_max")
    return events_by(first_stage, t) / total


def km_curve(data: SurvivalData, t: float, arm: Arm | str,
             extra_censor: Mapping[int, float] | None = None) -> KmCurve:
    """Product-limit estimate for one arm under administrative censoring at ``t``."""
    control = Arm(arm) is Arm.CONTROL
    sel = data.control == control
    cut = _censor_times(data, t, extra_censor)[sel]
    entry, surv = data.entry[sel], data.surv[sel]
    follow = cut - entry
    keep = follow > 0
    event = (entry + surv <= cut)[keep]
    obs = np.where(entry + surv <= cut, surv, follow)[keep]
    times = np.unique(obs[event])
    s = 1.0
    steps_t, steps_s = [0.0], [1.0]
    for tau in times:
        n_risk = np.count_nonzero(obs >= tau)
        d = np.count_nonzero(event & (obs == tau))
        s *= 1.0 - d / n_risk
        steps_t.append(float(tau))
        steps_s.append(s)
    return KmCurve(np.array(steps_t), np.array(steps_s))


# --- CSV ------------------------------------------------------------------------

DATASET_HEADER = ("entry", "surv", "arm", "stage")


class DatasetError(ValueError):
    pass


def read_dataset(path: str | Path) -> SurvivalData:
    """Read ``entry,surv,arm,stage`` rows (arm C/E, stage 1/2)."""
    entry, surv, ctl, stage = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DATASET_HEADER:
            raise DatasetError(f"{path}: header must be {','.join(DATASET_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DatasetError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                e, s = float(row[0]), float(row[1])
                a, g = row[2].strip().upper(), int(row[3])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            if a not in ("C", "E") or g not in (1, 2) or e < 0 or s <= 0:
                raise DatasetError(f"{path}:{lineno}: invalid record {row}")
            entry.append(e)
            surv.append(s)
            ctl.append(a == "C")
            stage.append(g)
    return SurvivalData(entry, surv, ctl, stage)


def write_dataset(data: SurvivalData, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for e, s, c, g in zip(data.entry, data.surv, data.control, data.stage):
            w.writerow([repr(float(e)), repr(float(s)), "C" if c else "E", int(g)])
