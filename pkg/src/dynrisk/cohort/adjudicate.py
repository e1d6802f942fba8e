"""Rule-based shock onset adjudication from raw monitoring streams.

Onset is the earliest time at which either

* a hypotension window (SBP < 90 mmHg sustained for 30 minutes) is in
  progress while at least one hypoperfusion criterion is active, or
* a pharmacologic agent or mechanical circulatory support is started to
  hold SBP above 90 mmHg.

Hypoperfusion criteria: urine output < 0.5 cc/kg/hr for 6 hours, serum
creatinine up 1.5-fold or 0.3 mg/dl from baseline, serum lactate > 2 mmol/L.

Interval conventions (all times in hours):

* A hypotension run is a maximal sequence of consecutive SBP readings below
  90. Its duration is measured between readings, so the window is met from
  the first reading at least 0.5 h after the run's first reading until the
  run's last reading.
* A lab criterion holds from an abnormal reading until the next reading of
  the same lab.
* Each urine reading covers the hour ending at its timestamp; a run of low
  readings satisfies the criterion once it spans 6 hours, until the next
  reading at or above threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .records import CARDIOGENIC, NO_SHOCK, NONCARDIOGENIC, RawStream

SBP_LIMIT = 90.0
HYPOTENSION_HOURS = 0.5
URINE_LIMIT = 0.5
OLIGURIA_HOURS = 6.0
LACTATE_LIMIT = 2.0
CREATININE_FOLD = 1.5
CREATININE_DELTA = 0.3

HYPOTENSION_PLUS_HYPOPERFUSION = "hypotension_plus_hypoperfusion"
SUPPORT_INITIATION = "support_initiation"

_TOL = 1e-9


@dataclass
class AdjudicationResult:
    label: str
    onset_time: float | None = None
    onset_hour: int | None = None
    triggering_rule: str | None = None
    audit: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"label": self.label, "onset_time": self.onset_time, "onset_hour": self.onset_hour,
                "triggering_rule": self.triggering_rule, "audit": self.audit}


def hypotension_windows(stream: RawStream) -> list[tuple[float, float]]:
    """Closed intervals [met_from, last_low_reading] of sustained hypotension."""
    t, v = stream.channel("sbp")
    out = []
    i = 0
    while i < len(t):
        if v[i] >= SBP_LIMIT:
            i += 1
            continue
        j = i
        while j + 1 < len(t) and v[j + 1] < SBP_LIMIT:
            j += 1
        start = t[i]
        for k in range(i, j + 1):
            if t[k] - start >= HYPOTENSION_HOURS - _TOL:
                out.append((float(t[k]), float(t[j])))
                break
        i = j + 1
    return out


def _lab_intervals(t: np.ndarray, abnormal: np.ndarray) -> list[tuple[float, float]]:
    out = []
    for i in np.flatnonzero(abnormal):
        end = float(t[i + 1]) if i + 1 < len(t) else math.inf
        out.append((float(t[i]), end))
    return out


def lactate_intervals(stream: RawStream) -> list[tuple[float, float]]:
    t, v = stream.channel("lactate")
    return _lab_intervals(t, v > LACTATE_LIMIT)


def creatinine_intervals(stream: RawStream) -> tuple[list[tuple[float, float]], dict]:
    t, v = stream.channel("creatinine")
    note = {}
    if t.size == 0:
        return [], note
    if stream.creatinine_baseline is not None:
        base = stream.creatinine_baseline
        abnormal = (v >= CREATININE_FOLD * base - _TOL) | (v - base >= CREATININE_DELTA - _TOL)
        note = {"baseline": base, "baseline_source": "provided"}
    else:
        # Without a prior baseline only the absolute rise from the first value applies.
        base = float(v[0])
        abnormal = v - base >= CREATININE_DELTA - _TOL
        note = {"baseline": base, "baseline_source": "first_observed_value",
                "rule": "absolute 0.3 mg/dl rise only"}
    return _lab_intervals(t, abnormal), note


def oliguria_intervals(stream: RawStream) -> list[tuple[float, float]]:
    t, v = stream.channel("urine_output")
    out = []
    i = 0
    while i < len(t):
        if v[i] >= URINE_LIMIT:
            i += 1
            continue
        j = i
        while j + 1 < len(t) and v[j + 1] < URINE_LIMIT:
            j += 1
        first = t[i]
        for k in range(i, j + 1):
            if t[k] - first + 1.0 >= OLIGURIA_HOURS - _TOL:
                end = float(t[j + 1]) if j + 1 < len(t) else math.inf
                out.append((float(t[k]), end))
                break
        i = j + 1
    return out


def _earliest_overlap(windows, active) -> float | None:
    """Earliest t with t in some closed window [a, b] and some half-open [c, d)."""
    best = None
    for a, b in windows:
        for c, d in active:
            t = max(a, c)
            if t <= b and t < d and (best is None or t < best):
                best = t
    return best


def adjudicate(stream: RawStream) -> AdjudicationResult:
    if stream.is_empty:
        raise ValueError(f"{stream.patient_id}: empty stream cannot be adjudicated")

    audit: list[dict] = []
    windows = hypotension_windows(stream)
    for a, b in windows:
        audit.append({"criterion": "sbp_below_90_for_30min", "time": a, "until": b})

    lact = lactate_intervals(stream)
    creat, creat_note = creatinine_intervals(stream)
    olig = oliguria_intervals(stream)
    if creat_note.get("baseline_source") == "first_observed_value":
        audit.append({"criterion": "creatinine_baseline_missing", "time": None, **creat_note})
    for name, ivs in (("lactate_above_2", lact), ("creatinine_rise", creat), ("urine_below_0.5_for_6h", olig)):
        for c, d in ivs:
            audit.append({"criterion": name, "time": c, "until": None if math.isinf(d) else d})

    hypoperfusion = lact + creat + olig
    t_pressure = _earliest_overlap(windows, hypoperfusion)
    support = [e for e in stream.support if e.for_blood_pressure]
    for e in support:
        audit.append({"criterion": "support_initiation", "time": e.time, "kind": e.kind, "agent": e.agent})
    t_support = support[0].time if support else None

    candidates = [(t, rule) for t, rule in ((t_pressure, HYPOTENSION_PLUS_HYPOPERFUSION),
                                            (t_support, SUPPORT_INITIATION)) if t is not None]
    if not candidates:
        return AdjudicationResult(NO_SHOCK, audit=audit)
    onset, rule = min(candidates, key=lambda c: c[0])
    label = NONCARDIOGENIC if stream.etiology == "noncardiogenic" else CARDIOGENIC
    return AdjudicationResult(label, float(onset), int(math.floor(onset + _TOL)), rule, audit)
