import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynrisk.cohort import (
    CARDIOGENIC, NO_SHOCK, GeneratorConfig, PatientRecord, RawStream, SupportEvent, adjudicate,
    apply_exclusions, exclusion_reason, fit_preprocessor, full_schema, generate_cohort, load_cohort,
    preprocess, read_streams_csv, reduced_schema, save_cohort, small_schema, write_streams_csv,
)

from adjudication_cases import CASES, EXCLUDED


# schema ------------------------------------------------------------------------

def test_full_schema_counts():
    s = full_schema()
    assert (len(s.features), s.time_varying_count, s.static_count) == (194, 182, 12)
    assert s.channel_count == 2 * 182 + 12 == 376


def test_reduced_schema_counts_and_subset():
    full, red = full_schema(), reduced_schema()
    assert (len(red.features), red.time_varying_count) == (70, 58)
    assert set(red.names) <= set(full.names)
    assert all(f.maskable for f in red.features)


def test_schema_roundtrip_and_fingerprint():
    s = full_schema()
    back = type(s).from_dict(s.to_dict())
    assert back == s and back.fingerprint == s.fingerprint


# records -----------------------------------------------------------------------

def record(pid="r", series=None, static=(), outcome=NO_SHOCK, age=65.0, stay=72.0, onset=None):
    series = np.zeros((1, 5)) if series is None else np.asarray(series, float)
    return PatientRecord(pid, np.asarray(static, float), series, outcome, series.shape[1] - 1, age, "F", stay, onset)


def test_record_rejects_bad_shapes():
    with pytest.raises(ValueError):
        PatientRecord("x", np.zeros(0), np.zeros((2, 3)), NO_SHOCK, 3, 60.0, "M", 50.0)
    with pytest.raises(ValueError):
        PatientRecord("x", np.zeros(0), np.zeros((2, 3)), CARDIOGENIC, 2, 60.0, "M", 50.0, onset_hour=1)


def test_stream_rejects_unordered_timestamps():
    with pytest.raises(ValueError):
        RawStream("x", {"sbp": (np.array([1.0, 1.0]), np.array([80.0, 80.0]))})
    with pytest.raises(ValueError):
        RawStream("x", {"sbp": (np.array([-1.0]), np.array([80.0]))})


# adjudication ------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(CASES))
def test_adjudication_fixture(name):
    s, (label, hour, rule) = CASES[name]
    res = adjudicate(s)
    assert (res.label, res.onset_hour, res.triggering_rule) == (label, hour, rule)
    assert (res.onset_hour is None) == (res.label == NO_SHOCK)


def test_early_onset_fixture_is_excluded():
    for name in EXCLUDED:
        s, _ = CASES[name]
        res = adjudicate(s)
        r = record(series=np.zeros((1, res.onset_hour + 1)), outcome=res.label, onset=res.onset_hour)
        assert exclusion_reason(r) == "shock_within_4h"


def test_audit_lists_both_criteria_with_times():
    s, _ = CASES["hypotension_with_lactate"]
    audit = adjudicate(s).audit
    kinds = {a["criterion"]: a["time"] for a in audit}
    assert kinds["sbp_below_90_for_30min"] == 10.5
    assert kinds["lactate_above_2"] == 10.0


def test_missing_baseline_is_logged():
    s, _ = CASES["creatinine_no_baseline_absolute"]
    audit = adjudicate(s).audit
    assert any(a["criterion"] == "creatinine_baseline_missing" for a in audit)


def test_empty_stream_rejected():
    with pytest.raises(ValueError):
        adjudicate(RawStream("empty"))


# brute-force oracle: scan every event time and test the rules directly

def _latest(t, v, at):
    i = np.searchsorted(t, at + 1e-9) - 1
    return None if i < 0 else i


def _hypotensive(s, at):
    t, v = s.channel("sbp")
    i = _latest(t, v, at)
    if i is None or v[i] >= 90:
        return False
    start = i
    while start > 0 and v[start - 1] < 90:
        start -= 1
    end = i
    while end + 1 < len(t) and v[end + 1] < 90:
        end += 1
    # the window closes at the run's last low reading
    met = [t[k] for k in range(start, end + 1) if t[k] - t[start] >= 0.5 - 1e-9]
    return bool(met) and met[0] <= at + 1e-9 and at <= t[end] + 1e-9


def _hypoperfused(s, at):
    t, v = s.channel("lactate")
    i = _latest(t, v, at)
    if i is not None and v[i] > 2:
        return True
    t, v = s.channel("creatinine")
    i = _latest(t, v, at)
    if i is not None:
        base = s.creatinine_baseline
        if base is None:
            if v[i] - v[0] >= 0.3 - 1e-9:
                return True
        elif v[i] >= 1.5 * base - 1e-9 or v[i] - base >= 0.3 - 1e-9:
            return True
    t, v = s.channel("urine_output")
    i = _latest(t, v, at)
    if i is not None and v[i] < 0.5:
        start = i
        while start > 0 and v[start - 1] < 0.5:
            start -= 1
        if t[i] - t[start] + 1 >= 6 - 1e-9:
            return True
    return False


def brute_force_onset(s):
    times = sorted({float(x) for t, _ in s.channels.values() for x in t} | {e.time for e in s.support})
    for at in times:
        if any(e.for_blood_pressure and e.time <= at for e in s.support):
            return math.floor(at + 1e-9)
        if _hypotensive(s, at) and _hypoperfused(s, at):
            return math.floor(at + 1e-9)
    return None


def random_stream(seed, with_lactate=True):
    r = np.random.default_rng(seed)
    grid = lambda n, step: np.round(np.cumsum(r.choice([step / 2, step, 2 * step], size=n)), 4)
    chans = {"sbp": (grid(60, 0.25), r.choice([80.0, 88.0, 95.0, 120.0], size=60, p=[0.3, 0.2, 0.2, 0.3]))}
    if with_lactate:
        chans["lactate"] = (grid(4, 3.0), r.choice([1.0, 2.0, 2.5], size=4))
    chans["creatinine"] = (grid(3, 4.0), r.choice([0.9, 1.1, 1.4], size=3))
    chans["urine_output"] = (grid(12, 1.0), r.choice([0.3, 0.9], size=12, p=[0.7, 0.3]))
    support = [SupportEvent(float(r.uniform(0, 15)), "pharmacologic", "dopamine")] if r.random() < 0.2 else []
    base = float(r.choice([0.8, 1.0])) if r.random() < 0.5 else None
    return RawStream(f"rand{seed}", chans, support, base, "cardiogenic")


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_onset_is_earliest_qualifying_time(seed):
    s = random_stream(seed)
    assert adjudicate(s).onset_hour == brute_force_onset(s)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10**6), lact_seed=st.integers(0, 10**6))
def test_added_hypoperfusion_never_delays_onset(seed, lact_seed):
    s = random_stream(seed, with_lactate=False)
    before = adjudicate(s)
    r = np.random.default_rng(lact_seed)
    t = np.round(np.sort(r.uniform(0, 15, size=3)), 3)
    chans = dict(s.channels)
    chans["lactate"] = (np.unique(t), r.uniform(2.1, 5.0, size=len(np.unique(t))))
    after = adjudicate(RawStream(s.patient_id, chans, s.support, s.creatinine_baseline, s.etiology))
    if before.label != NO_SHOCK:
        assert after.label != NO_SHOCK
        assert after.onset_time <= before.onset_time


# exclusions --------------------------------------------------------------------

def test_exclusion_examples():
    assert exclusion_reason(record(series=np.zeros((1, 4)), outcome=CARDIOGENIC, onset=3)) == "shock_within_4h"
    assert exclusion_reason(record(age=90.0)) == "age_above_89"
    assert exclusion_reason(record(age=17.5)) == "age_below_18"
    assert exclusion_reason(record(stay=20.0)) == "hospital_stay_below_24h"
    assert exclusion_reason(record(series=np.zeros((1, 31)), outcome=CARDIOGENIC, onset=30)) is None
    assert exclusion_reason(record(age=89.0, stay=24.0)) is None


def test_exclusion_report_counts():
    rs = [record("a", age=90.0), record("b", stay=5.0), record("c"), record("d", age=10.0, stay=5.0)]
    kept, report = apply_exclusions(rs)
    assert [r.patient_id for r in kept] == ["c"]
    assert report["excluded"] == {"age_below_18": 1, "age_above_89": 1, "hospital_stay_below_24h": 1,
                                  "shock_within_4h": 0}
    assert report["final"] == 1 and report["initial"] == 4
    assert apply_exclusions([])[1]["final"] == 0


# generator ---------------------------------------------------------------------

SMALL = small_schema(["heart_rate", "sbp", "lactate", "creatinine", "urine_output", "resp_rate"], ["age", "lvef"])


def test_generator_is_deterministic():
    a = generate_cohort(30, 0.2, 5, SMALL)
    b = generate_cohort(30, 0.2, 5, SMALL)
    assert all(ra == rb for (_, ra), (_, rb) in zip(a, b))
    assert all(sa.rows() == sb.rows() for (sa, _), (sb, _) in zip(a, b))
    c = generate_cohort(30, 0.2, 6, SMALL)
    assert any(ra != rc for (_, ra), (_, rc) in zip(a, c))


def test_zero_positive_rate_gives_no_events():
    pairs = generate_cohort(40, 0.0, 1, SMALL, GeneratorConfig(noncardiogenic_rate=0.0))
    assert all(r.label == 0 for _, r in pairs)
    assert all(adjudicate(s).label == r.outcome for s, r in pairs)


@pytest.mark.parametrize("size,rate", [(10, 0.05), (1, 0.5), (10, 1.0)])
def test_generator_rejects_degenerate_specs(size, rate):
    with pytest.raises(ValueError):
        generate_cohort(size, rate, 0, SMALL)


def test_generator_matches_adjudicator():
    pairs = generate_cohort(400, 0.2, 8, SMALL)
    agree = 0
    for s, r in pairs:
        res = adjudicate(s)
        onset_ok = (res.onset_hour is None and r.onset_hour is None) or (
            res.onset_hour is not None and r.onset_hour is not None and abs(res.onset_hour - r.onset_hour) <= 1)
        agree += res.label == r.outcome and onset_ok
    assert agree / len(pairs) >= 0.99
    assert any(r.label for _, r in pairs)


def test_positive_count_near_cohort_shape():
    # binomial(1500, 0.136): mean 204, sd about 13
    pairs = generate_cohort(1500, 0.136, 0, small_schema(["heart_rate"]))
    n_pos = sum(r.label for _, r in pairs)
    assert abs(n_pos - 204) <= 4 * math.sqrt(1500 * 0.136 * 0.864)


def test_positive_stays_end_at_onset():
    for _, r in generate_cohort(60, 0.3, 2, SMALL):
        if r.outcome == CARDIOGENIC:
            assert r.onset_hour == r.observed_time


# preprocessing -----------------------------------------------------------------

def test_standardization_example():
    schema = small_schema(["x"])
    rs = [record("a", series=[[1.0, np.nan]]), record("b", series=[[3.0]])]
    st_ = fit_preprocessor(rs, schema)
    assert st_.tv_mean[0] == 2.0 and st_.tv_std[0] == 1.0
    out = preprocess(rs[0], st_)
    assert out[:, 0].tolist() == [-1.0, 0.0]
    assert out[:, 1].tolist() == [0.0, 1.0]
    assert preprocess(rs[1], st_)[0, 0] == 1.0


def test_constant_and_unobserved_features():
    schema = small_schema(["const", "never"])
    rs = [record("a", series=[[4.0, 4.0], [np.nan, np.nan]]), record("b", series=[[4.0], [np.nan]])]
    st_ = fit_preprocessor(rs, schema)
    assert np.all(preprocess(rs[0], st_)[:, 0] == 0.0)
    assert st_.never_observed == ["never"]
    assert (st_.tv_mean[1], st_.tv_std[1]) == (0.0, 1.0)


def test_statics_repeat_across_hours():
    schema = small_schema(["x"], ["s"])
    rs = [record("a", series=[[1.0, 2.0, 3.0]], static=[10.0]), record("b", series=[[2.0]], static=[20.0])]
    out = preprocess(rs[0], fit_preprocessor(rs, schema))
    assert out.shape == (3, 3)
    assert np.all(out[:, 2] == -1.0)
    assert np.all(out[:, 1] == 0.0)


def test_fit_ignores_other_splits():
    pairs = generate_cohort(40, 0.2, 4, SMALL)
    train = [r for _, r in pairs[:20]]
    a = fit_preprocessor(train, SMALL)
    b = fit_preprocessor(train, SMALL)
    assert np.array_equal(a.tv_mean, b.tv_mean) and a.fit_fingerprint == b.fit_fingerprint
    c = fit_preprocessor([r for _, r in pairs[20:]], SMALL)
    assert c.fit_fingerprint != a.fit_fingerprint


def test_preprocess_rejects_schema_mismatch():
    st_ = fit_preprocessor([record("a")], small_schema(["x"]))
    with pytest.raises(ValueError):
        preprocess(record("b", series=np.zeros((2, 3))), st_)


# serialization -----------------------------------------------------------------

def test_cohort_roundtrip(tmp_path):
    pairs = generate_cohort(15, 0.2, 9, SMALL)
    records = [r for _, r in pairs]
    save_cohort(tmp_path, records, SMALL)
    back, schema, _ = load_cohort(tmp_path)
    assert schema == SMALL and back == records
    write_streams_csv(tmp_path / "s.csv", [s for s, _ in pairs])
    streams = read_streams_csv(tmp_path / "s.csv")
    assert [s.rows() for s in streams] == [s.rows() for s, _ in pairs]
    for s, (orig, _) in zip(streams, pairs):
        assert adjudicate(s).to_dict() == adjudicate(orig).to_dict()
