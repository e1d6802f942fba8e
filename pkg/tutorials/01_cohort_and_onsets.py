"""Simulate a small cohort, look at one stay, and re-adjudicate its raw streams."""

import numpy as np

from dynrisk.cohort import adjudicate, apply_exclusions, generate_cohort, reduced_schema

schema = reduced_schema()
pairs = generate_cohort(200, 0.2, seed=3, schema=schema)
records, report = apply_exclusions([r for _, r in pairs])
print("kept", report["final"], "of", report["initial"], "excluded:", report["excluded"])

stream, rec = next((s, r) for s, r in pairs if r.label)
res = adjudicate(stream)
print(rec.patient_id, "outcome", rec.outcome, "onset hour", rec.onset_hour)
print("adjudicated:", res.label, res.onset_hour, res.triggering_rule)
for entry in res.audit:
    print("  ", entry)

# hours 0..observed_time; NaN where a feature was not measured
observed = np.mean(~np.isnan(rec.series), axis=1)
names = schema.time_varying_names
for name, frac in sorted(zip(names, observed), key=lambda p: -p[1])[:8]:
    print(f"{name:>20s} observed in {frac:.0%} of hours")
