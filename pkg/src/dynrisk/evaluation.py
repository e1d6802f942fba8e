"""Patient-level discrimination and alarm metrics.

A stay's summary score is the maximum of its hourly trajectory, which is
what an hourly alarm with a fixed threshold reacts to. Alarms fire when a
score reaches the threshold (``score >= t``); pass ``strict=True`` for
``score > t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .reporting import write_csv, write_json

FIXED_AGE_EDGES = (59.0, 70.0, 80.0)


def _check_pairs(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d and the same length")
    if np.isnan(s).any():
        raise ValueError("scores contain NaN")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise ValueError(f"AUROC needs both classes; got {n_pos} positives and {len(y) - n_pos} negatives")
    return s, y


def concordance_counts(scores, labels) -> tuple[int, int]:
    """Twice the concordant pair count (ties score 1) and the pair count."""
    s, y = _check_pairs(scores, labels)
    neg = np.sort(s[~y])
    pos = s[y]
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    twice = int(np.sum(2 * below + (upto - below)))
    return twice, len(pos) * len(neg)


def auroc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties 1/2."""
    twice, pairs = concordance_counts(scores, labels)
    return twice / (2 * pairs)


@dataclass
class RocPoint:
    fpr: float
    tpr: float
    threshold: float


def roc_curve(scores, labels) -> list[RocPoint]:
    """ROC vertices from (0, 0) to (1, 1), one per distinct score.

    The threshold of a vertex is the lowest score flagged at that point;
    the first vertex uses +inf (nothing flagged).
    """
    s, y = _check_pairs(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    P, N = int(y.sum()), int((~y).sum())
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    pts = [RocPoint(0.0, 0.0, math.inf)]
    pts += [RocPoint(int(f) / N, int(t) / P, float(s[i])) for f, t, i in zip(fp, tp, last)]
    return pts


def roc_area(points: Sequence[RocPoint]) -> float:
    """Trapezoid area under a list of ROC vertices."""
    area = 0.0
    for a, b in zip(points[:-1], points[1:]):
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2
    return area


def _flags(s, threshold, strict):
    return s > threshold if strict else s >= threshold


@dataclass
class OperatingPoint:
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    recall: float
    specificity: float | None
    alarm_rate: float
    ppv: float | None
    ppv_absent_reason: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def operating_point(scores, labels, threshold: float, strict: bool = False) -> OperatingPoint:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    flag = _flags(s, threshold, strict)
    tp, fp = int(np.sum(flag & y)), int(np.sum(flag & ~y))
    fn, tn = int(np.sum(~flag & y)), int(np.sum(~flag & ~y))
    recall = tp / (tp + fn) if tp + fn else math.nan
    spec = tn / (tn + fp) if tn + fp else None
    if tp + fp == 0:
        ppv, reason = None, "no alarms at this threshold"
    else:
        ppv, reason = tp / (tp + fp), None
    return OperatingPoint(float(threshold), tp, fp, tn, fn, recall, spec, (tp + fp) / len(s), ppv, reason)


def pr_curve(scores, labels) -> list[OperatingPoint]:
    """Operating points at every distinct score, highest threshold first."""
    s = np.asarray(scores, dtype=np.float64)
    return [operating_point(s, labels, t) for t in np.unique(s)[::-1]]


def threshold_for_sensitivity(scores, labels, target: float, strict: bool = False) -> float:
    """Highest threshold whose recall is at least ``target``.

    With ``m = ceil(target * P)`` positives needed, this is the m-th highest
    positive score: every higher threshold catches fewer than m positives.
    Under ``strict`` alarms the supremum is not attained, so the next float
    below that score is returned.
    """
    if not 0 < target <= 1:
        raise ValueError("target sensitivity must lie in (0, 1]")
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    pos = np.sort(s[y])[::-1]
    if pos.size == 0:
        raise ValueError("no positives: sensitivity is undefined")
    m = max(1, math.ceil(target * pos.size - 1e-9))
    t = float(pos[m - 1])
    return float(np.nextafter(t, -np.inf)) if strict else t


def first_alarm_hour(scores, threshold: float, strict: bool = False) -> int | None:
    hits = np.flatnonzero(_flags(np.asarray(scores, dtype=np.float64), threshold, strict))
    return int(hits[0]) if hits.size else None


@dataclass
class LeadTimeSummary:
    mean_hours: float | None
    median_hours: float | None
    leads: list[int]
    detected: int
    missed: int
    absent_reason: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def lead_time(events: Sequence[tuple[int | None, int]]) -> LeadTimeSummary:
    """Hours from first alarm to onset over positives ``(first_alarm_hour, onset_hour)``.

    Stays whose alarm never fires at or before onset count as misses.
    """
    leads, missed = [], 0
    for alarm, onset in events:
        if alarm is None or alarm > onset:
            missed += 1
        else:
            leads.append(int(onset - alarm))
    if not leads:
        return LeadTimeSummary(None, None, [], 0, missed, "no positive stay alarmed before onset")
    arr = np.asarray(leads, dtype=np.float64)
    return LeadTimeSummary(float(arr.mean()), float(np.median(arr)), leads, len(leads), missed)


# subgroups ------------------------------------------------------------------

def age_quartile_edges(ages) -> tuple[float, float, float]:
    q = np.quantile(np.asarray(ages, dtype=np.float64), [0.25, 0.5, 0.75])
    return tuple(float(v) for v in q)


def age_group(age: float, edges) -> str:
    a, b, c = edges
    if age < a:
        return f"age<{a:g}"
    if age < b:
        return f"{a:g}<=age<{b:g}"
    if age < c:
        return f"{b:g}<=age<{c:g}"
    return f"age>={c:g}"


def age_group_order(edges) -> list[str]:
    a, b, c = edges
    return [f"age<{a:g}", f"{a:g}<=age<{b:g}", f"{b:g}<=age<{c:g}", f"age>={c:g}"]


@dataclass
class GroupResult:
    group: str
    n: int
    positives: int
    auroc: float | None
    absent_reason: str | None = None


def subgroup_auroc(scores, labels, groups: Sequence[str], order: Sequence[str] | None = None) -> list[GroupResult]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    g = np.asarray(groups)
    names = list(order) if order is not None else sorted(set(g.tolist()))
    out = []
    for name in names:
        sel = g == name
        n, p = int(sel.sum()), int(y[sel].sum())
        if p == 0 or p == n:
            why = "no stays" if n == 0 else ("no positives" if p == 0 else "no negatives")
            out.append(GroupResult(name, n, p, None, why))
        else:
            out.append(GroupResult(name, n, p, auroc(s[sel], y[sel])))
    return out


def combine_folds(per_fold: Sequence[Sequence[GroupResult]]) -> list[dict]:
    """Mean and across-fold standard deviation of each group's AUROC."""
    names = []
    for fold in per_fold:
        for r in fold:
            if r.group not in names:
                names.append(r.group)
    rows = []
    for name in names:
        vals = [r.auroc for fold in per_fold for r in fold if r.group == name and r.auroc is not None]
        n = sum(r.n for fold in per_fold for r in fold if r.group == name)
        pos = sum(r.positives for fold in per_fold for r in fold if r.group == name)
        rows.append({
            "group": name, "n": n, "positives": pos, "folds": len(vals),
            "auroc_mean": float(np.mean(vals)) if vals else None,
            "auroc_sd": float(np.std(vals, ddof=1)) if len(vals) > 1 else None,
            "absent_reason": None if vals else "group lacks one class in every fold",
        })
    return rows


# report -----------------------------------------------------------------------

@dataclass
class PatientOutcomePair:
    patient_id: str
    summary_score: float
    label: int
    first_alarm_hour: int | None = None
    onset_hour: int | None = None
    attributes: dict = field(default_factory=dict)


def outcome_pairs(trajectories, records, threshold: float | None = None, strict: bool = False):
    by_id = {r.patient_id: r for r in records}
    out = []
    for tr in trajectories:
        rec = by_id[tr.patient_id]
        alarm = first_alarm_hour(tr.scores, threshold, strict) if threshold is not None else None
        out.append(PatientOutcomePair(tr.patient_id, float(tr.scores.max()), int(rec.label), alarm,
                                      rec.onset_hour if rec.label else None,
                                      {"age": rec.age, "sex": rec.sex}))
    return out


def evaluate(pairs: Sequence[PatientOutcomePair], trajectories, sensitivity: float = 0.8,
             strict: bool = False, threshold: float | None = None, age_edges=None) -> dict:
    """Metrics report for one evaluated set.

    The alarm threshold defaults to the one reaching ``sensitivity``.
    """
    s = np.array([p.summary_score for p in pairs])
    y = np.array([p.label for p in pairs])
    thr = threshold if threshold is not None else threshold_for_sensitivity(s, y, sensitivity, strict)
    by_id = {t.patient_id: t for t in trajectories}
    events = [(first_alarm_hour(by_id[p.patient_id].scores, thr, strict), p.onset_hour)
              for p in pairs if p.label]
    edges = tuple(age_edges) if age_edges is not None else age_quartile_edges([p.attributes["age"] for p in pairs])
    ages = subgroup_auroc(s, y, [age_group(p.attributes["age"], edges) for p in pairs], age_group_order(edges))
    sexes = subgroup_auroc(s, y, [p.attributes["sex"] for p in pairs])
    return {
        "n": len(pairs), "positives": int(y.sum()),
        "auroc": auroc(s, y),
        "alarm_rule": "score > threshold" if strict else "score >= threshold",
        "target_sensitivity": sensitivity if threshold is None else None,
        "threshold": thr,
        "operating_point": operating_point(s, y, thr, strict).to_dict(),
        "lead_time": lead_time(events).to_dict(),
        "age_edges": list(edges),
        "subgroups": {"age": [g.__dict__ for g in ages], "sex": [g.__dict__ for g in sexes]},
        "pr_curve": [[op.threshold, op.recall, op.ppv] for op in pr_curve(s, y)],
    }


def write_roc_csv(path, points: Sequence[RocPoint]):
    write_csv(path, ["fpr", "tpr", "threshold"], [(p.fpr, p.tpr, p.threshold) for p in points])


def read_roc_csv(path) -> list[RocPoint]:
    from .reporting import read_csv
    return [RocPoint(float(r["fpr"]), float(r["tpr"]), float(r["threshold"])) for r in read_csv(path)]


def write_subgroup_csv(path, rows: Sequence[dict]):
    header = ["grouping", "group", "n", "positives", "folds", "auroc_mean", "auroc_sd", "absent_reason"]
    write_csv(path, header, [[r.get(h) for h in header] for r in rows])


def write_metrics_json(path, report: dict):
    write_json(path, report)
