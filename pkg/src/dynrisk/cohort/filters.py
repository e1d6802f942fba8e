"""Cohort inclusion/exclusion rules."""

from __future__ import annotations

from .records import NO_SHOCK, SURVIVED, PatientRecord

MIN_AGE = 18
MAX_AGE = 89
MIN_HOSPITAL_STAY_HOURS = 24.0
EARLY_SHOCK_HOURS = 4

CRITERIA = ("age_below_18", "age_above_89", "hospital_stay_below_24h", "shock_within_4h")


def exclusion_reason(record: PatientRecord) -> str | None:
    """First failed criterion for a record, or None if it is retained."""
    if record.age < MIN_AGE:
        return "age_below_18"
    if record.age > MAX_AGE:
        return "age_above_89"
    if record.hospital_stay_hours < MIN_HOSPITAL_STAY_HOURS:
        return "hospital_stay_below_24h"
    had_shock = record.outcome not in (NO_SHOCK, SURVIVED)
    if had_shock and record.onset_hour is not None and record.onset_hour < EARLY_SHOCK_HOURS:
        return "shock_within_4h"
    return None


def apply_exclusions(records: list[PatientRecord]) -> tuple[list[PatientRecord], dict]:
    """Drop ineligible stays and count removals per criterion.

    A record failing several criteria is counted once, under the first one
    in ``CRITERIA`` order.
    """
    kept, counts = [], {c: 0 for c in CRITERIA}
    for r in records:
        reason = exclusion_reason(r)
        if reason is None:
            kept.append(r)
        else:
            counts[reason] += 1
    outcomes: dict[str, int] = {}
    for r in kept:
        outcomes[r.outcome] = outcomes.get(r.outcome, 0) + 1
    report = {
        "schema_version": 1,
        "initial": len(records),
        "excluded": counts,
        "excluded_total": len(records) - len(kept),
        "final": len(kept),
        "final_outcomes": dict(sorted(outcomes.items())),
    }
    return kept, report
