"""Synthetic cardiac ICU cohort with a known event process.

Every stay has a latent cardiac severity ``z(t)`` in [0, 1]. For patients
who go on to develop cardiogenic shock it ramps smoothly to 1 over a
12-48 hour window ending at onset; for everyone else it stays near a
patient-specific baseline, with occasional transient excursions that
resolve. Driver features move with ``z`` (coefficients in standard
deviations per unit severity, see ``DEFAULT_DRIVERS``); all other features
are autocorrelated noise. The manifest returned by ``cohort_manifest``
records the drivers, which is the ground truth for attribution checks.

Raw SBP, heart rate, lactate, creatinine and urine streams are simulated
sub-hourly so that the onset rules in ``adjudicate`` fire exactly at the
generated onset time. Before onset, no sustained hypotension is ever
generated, so no earlier onset can be adjudicated.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter

from .records import (CARDIOGENIC, DIED, NO_SHOCK, NONCARDIOGENIC, SURVIVED, PatientRecord,
                      RawStream, SupportEvent)
from .schema import FeatureSchema

# (mean, sd, lower clip, upper clip, hourly observation probability, decimals)
PHYSIOLOGY = {
    "heart_rate": (85, 14, 30, 200, 0.95, 0),
    "sbp": (118, 14, 60, 220, 0.95, 0),
    "dbp": (65, 10, 30, 130, 0.93, 0),
    "map": (82, 10, 40, 150, 0.93, 0),
    "nibp_mean": (82, 10, 40, 150, 0.4, 0),
    "resp_rate": (18, 4, 6, 50, 0.93, 0),
    "spo2": (96, 2, 70, 100, 0.93, 0),
    "temperature": (36.9, 0.5, 34, 41, 0.3, 1),
    "gcs_eye": (3.6, 0.6, 1, 4, 0.25, 0),
    "gcs_verbal": (4.4, 0.9, 1, 5, 0.25, 0),
    "gcs_motor": (5.7, 0.6, 1, 6, 0.25, 0),
    "urine_output": (1.1, 0.35, 0, 6, 0.9, 2),
    "lactate": (1.3, 0.45, 0.3, 15, 0.0, 1),
    "creatinine": (1.2, 0.35, 0.3, 10, 0.0, 2),
    "bun": (25, 9, 3, 150, 0.1, 0),
    "sodium": (138, 3.5, 115, 160, 0.12, 0),
    "potassium": (4.2, 0.45, 2.5, 7, 0.15, 1),
    "chloride": (102, 4, 80, 125, 0.12, 0),
    "bicarbonate": (24, 3, 8, 40, 0.12, 0),
    "glucose": (140, 40, 40, 500, 0.2, 0),
    "hemoglobin": (11.5, 1.8, 5, 18, 0.1, 1),
    "wbc": (9.5, 3, 1, 40, 0.1, 1),
    "platelets": (220, 70, 10, 800, 0.1, 0),
    "ph": (7.38, 0.05, 6.9, 7.6, 0.12, 2),
    "troponin": (1.5, 1.2, 0, 50, 0.08, 2),
    "bnp": (900, 500, 10, 5000, 0.05, 0),
    "cardiac_index": (2.4, 0.4, 0.8, 5, 0.05, 2),
    "svo2": (65, 6, 30, 90, 0.05, 0),
    "procalcitonin": (0.3, 0.2, 0, 50, 0.04, 2),
    "crp": (30, 15, 0, 300, 0.04, 0),
}
for _b in ("sensory", "moisture", "activity", "mobility", "nutrition", "friction"):
    PHYSIOLOGY[f"braden_{_b}"] = (3.0, 0.6, 1, 4, 0.12, 0)

# Cardiac severity drivers: standard deviations of shift at full severity.
DEFAULT_DRIVERS = {
    "heart_rate": 1.6, "sbp": -1.2, "map": -0.8, "dbp": -0.5, "lactate": 1.2,
    "creatinine": 0.7, "urine_output": -0.9, "resp_rate": 0.5, "spo2": -0.4,
    "gcs_eye": -0.5, "gcs_verbal": -0.5, "gcs_motor": -0.5,
    "braden_sensory": -0.3, "braden_moisture": -0.3, "braden_activity": -0.3,
    "braden_mobility": -0.3, "braden_nutrition": -0.3, "braden_friction": -0.3,
    "bun": 0.6, "sodium": -0.5, "chloride": -0.4, "ph": -0.6,
    "bnp": 0.6, "cardiac_index": -0.7, "svo2": -0.6, "troponin": 0.3,
}

# Distributive (noncardiogenic) shock drivers, attached to a separate latent process.
SEPSIS_DRIVERS = {"temperature": 1.2, "wbc": 1.2, "procalcitonin": 1.0, "crp": 0.8, "resp_rate": 0.5}

# Static features: ("bern", p_negative, p_positive) or
# ("normal", mean_negative, mean_positive, sd, lo, hi, p_missing, decimals)
STATIC_MODELS = {
    "weight_kg": ("normal", 82, 82, 18, 35, 200, 0.02, 1),
    "admit_dx_stemi": ("bern", 0.30, 0.15),
    "admit_dx_nstemi": ("bern", 0.35, 0.25),
    "admit_dx_adhf": ("bern", 0.35, 0.60),
    "lvef": ("normal", 50, 38, 12, 10, 75, 0.2, 0),
    "rv_systolic_dysfunction": ("bern", 0.20, 0.35),
    "rv_dilation": ("bern", 0.15, 0.25),
    "rvsp": ("normal", 35, 42, 10, 15, 90, 0.3, 0),
    "left_valvular_disease": ("bern", 0.15, 0.20),
    "lv_aneurysm": ("bern", 0.03, 0.05),
}

PRESSOR_AGENTS = ("norepinephrine", "epinephrine", "dopamine", "vasopressin", "phenylephrine", "dobutamine")
DEVICES = ("iabp", "impella", "ecmo")

_AR_RHO = 0.7
_NOISE_SD = 0.6
_OFFSET_SD = 0.5


@dataclass
class GeneratorConfig:
    """Knobs of the synthetic cohort.

    ``signal`` scales every driver coefficient and ``noise`` the
    within-patient variability. Setting ``degrade_sex`` and/or
    ``degrade_age_min`` multiplies the signal by ``degrade_signal`` inside
    that subgroup.
    """

    noncardiogenic_rate: float = 32 / 1500
    signal: float = 1.75
    noise: float = 1.0
    missing_scale: float = 1.0
    drivers: dict = field(default_factory=lambda: dict(DEFAULT_DRIVERS))
    sepsis_drivers: dict = field(default_factory=lambda: dict(SEPSIS_DRIVERS))
    static_signal: bool = True
    scare_rate: float = 0.3
    ineligible_rate: float = 0.0
    degrade_sex: str | None = None
    degrade_age_min: float | None = None
    degrade_signal: float = 1.0
    task: str = "shock"
    id_prefix: str = "P"

    def to_dict(self) -> dict:
        return asdict(self)


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3 - 2 * u)


class _Severity:
    """z(t) for one patient, evaluable at arbitrary times."""

    def __init__(self, base, ramp_end=None, ramp_len=None, bumps=()):
        self.base, self.ramp_end, self.ramp_len, self.bumps = base, ramp_end, ramp_len, bumps

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        z = np.full(t.shape, self.base)
        for amp, centre, width in self.bumps:
            z = z + amp * np.exp(-0.5 * ((t - centre) / width) ** 2)
        if self.ramp_end is not None:
            u = (t - (self.ramp_end - self.ramp_len)) / self.ramp_len
            z = z + (1.0 - z) * _smoothstep(u)
        return np.clip(z, 0.0, 1.0)


def _feature_params(name: str):
    if name in PHYSIOLOGY:
        return PHYSIOLOGY[name]
    h = zlib.crc32(name.encode()) / 2 ** 32
    return (0.0, 1.0, -np.inf, np.inf, 0.05 + 0.85 * h, 3)


def _onset_time(rng, low=4.0):
    hours = low + min(rng.lognormal(math.log(30), 0.6), 150.0)
    return math.floor(hours * 4) / 4


def _discharge_time(rng):
    return float(np.clip(rng.lognormal(math.log(45), 0.5), 12.0, 200.0))


@dataclass
class _Plan:
    patient_id: str
    outcome: str
    age: float
    sex: str
    hospital_stay_hours: float
    event_time: float | None
    end_time: float
    severity: _Severity
    sepsis: _Severity | None
    path: str | None
    etiology: str | None
    signal: float


def _plan_patient(pid, outcome, cfg: GeneratorConfig, rng) -> _Plan:
    age = float(np.clip(round(rng.normal(68.1, 13.5), 1), 18.0, 89.0))
    sex = "M" if rng.random() < 918 / 1500 else "F"
    signal = cfg.signal
    in_degraded = ((cfg.degrade_sex is None or sex == cfg.degrade_sex)
                   and (cfg.degrade_age_min is None or age >= cfg.degrade_age_min)
                   and (cfg.degrade_sex is not None or cfg.degrade_age_min is not None))
    if in_degraded:
        signal *= cfg.degrade_signal

    base = rng.uniform(0.0, 0.25)
    sepsis = None
    path = etiology = None
    if outcome in (CARDIOGENIC, DIED):
        t_event = _onset_time(rng)
        end = t_event + 2.0 if outcome == CARDIOGENIC else t_event
        sev = _Severity(base, t_event, rng.uniform(12.0, 48.0))
        if outcome == CARDIOGENIC:
            etiology = "mixed" if rng.random() < 0.2 else "cardiogenic"
            path = str(rng.choice(["lactate", "creatinine", "urine", "support"], p=[0.4, 0.15, 0.1, 0.35]))
    elif outcome == NONCARDIOGENIC:
        t_event = _onset_time(rng)
        end = t_event + 2.0
        sev = _Severity(base, bumps=_bumps(rng, cfg, t_event))
        sepsis = _Severity(0.0, t_event, rng.uniform(12.0, 36.0))
        etiology = "noncardiogenic"
        path = "support" if rng.random() < 0.6 else "lactate"
    else:
        t_event = None
        end = _discharge_time(rng)
        sev = _Severity(base, bumps=_bumps(rng, cfg, end))
    hospital = math.floor(end) + round(rng.uniform(24.0, 240.0), 1)

    if cfg.ineligible_rate > 0 and rng.random() < cfg.ineligible_rate:
        kind = rng.integers(3) if outcome != NO_SHOCK and cfg.task == "shock" else rng.integers(2)
        if kind == 0:
            age = float(rng.choice([round(rng.uniform(90, 99), 1), round(rng.uniform(15, 17.9), 1)]))
        elif kind == 1:
            hospital = round(rng.uniform(12.0, 23.9), 1)
            if t_event is None:
                end = min(end, hospital - 0.5)
        else:
            t_event = math.floor(rng.uniform(1.0, 3.9) * 4) / 4
            end = t_event + 2.0
            sev = _Severity(base, t_event, rng.uniform(6.0, 24.0)) if sepsis is None else sev
            if sepsis is not None:
                sepsis = _Severity(0.0, t_event, 6.0)
    return _Plan(pid, outcome, age, sex, hospital, t_event, end, sev, sepsis, path, etiology, signal)


def _bumps(rng, cfg, horizon):
    if rng.random() >= cfg.scare_rate:
        return ()
    return ((rng.uniform(0.2, 0.6), rng.uniform(0.0, horizon), rng.uniform(4.0, 16.0)),)


def _latent_shift(name, t, plan: _Plan, cfg: GeneratorConfig):
    shift = plan.signal * cfg.drivers.get(name, 0.0) * plan.severity(t)
    if plan.sepsis is not None and name in cfg.sepsis_drivers:
        shift = shift + plan.signal * cfg.sepsis_drivers[name] * plan.sepsis(t)
    return shift


def _finish(name, raw):
    mean, sd, lo, hi, _, dec = _feature_params(name)
    return np.round(np.clip(raw, lo, hi), dec)


def _sample_channel(name, times, plan, cfg, rng, offset):
    mean, sd, *_ = _feature_params(name)
    noise = cfg.noise * (offset + rng.normal(0, _NOISE_SD, len(times)))
    return _finish(name, mean + sd * (_latent_shift(name, times, plan, cfg) + noise))


def _raw_stream(plan: _Plan, cfg: GeneratorConfig, rng, offsets) -> RawStream:
    """Sub-hourly streams consistent with the planned onset."""
    end = plan.end_time
    onset = plan.event_time if plan.outcome in (CARDIOGENIC, NONCARDIOGENIC) else None
    vit_p = min(1.0, 0.95 ** cfg.missing_scale)

    # SBP and heart rate: hourly, with isolated dips that never last 30 minutes.
    hours = np.arange(0.0, math.floor(end) + 1.0)
    sbp_t = hours[rng.random(len(hours)) < vit_p]
    sbp_v = np.maximum(_sample_channel("sbp", sbp_t, plan, cfg, rng, offsets["sbp"]), 91.0)
    low = rng.random(len(sbp_t)) < 0.02
    for i in np.flatnonzero(low):
        if i == 0 or sbp_v[i - 1] >= 91:
            sbp_v[i] = float(rng.integers(80, 90))
    sbp = dict(zip(sbp_t.tolist(), sbp_v.tolist()))
    if rng.random() < 0.1 and len(sbp_t) > 2:
        # a 20-minute dip: three low readings ten minutes apart
        h = float(rng.choice(sbp_t[:-1]))
        if onset is None or h + 1 < onset - 0.5:
            earlier = [t for t in sbp if t < h]
            if earlier:
                sbp[max(earlier)] = max(sbp[max(earlier)], 95.0)
            for dt in (0.0, 1 / 6, 1 / 3):
                sbp[h + dt] = float(rng.integers(80, 90))
            nxt = h + 1.0
            sbp[nxt] = max(sbp.get(nxt, 0.0), 95.0)

    hr_t = hours[rng.random(len(hours)) < vit_p]
    hr_v = _sample_channel("heart_rate", hr_t, plan, cfg, rng, offsets["heart_rate"])

    lac_t = _lab_times(rng, end, 4.0, 12.0)
    lac = dict(zip(lac_t.tolist(), _sample_channel("lactate", lac_t, plan, cfg, rng, offsets["lactate"]).tolist()))
    cr_t = _lab_times(rng, end, 6.0, 18.0)
    cr = dict(zip(cr_t.tolist(), _sample_channel("creatinine", cr_t, plan, cfg, rng, offsets["creatinine"]).tolist()))
    uo_hours = hours[1:]
    uo_t = uo_hours[rng.random(len(uo_hours)) < min(1.0, 0.9 ** cfg.missing_scale)]
    uo = dict(zip(uo_t.tolist(), _sample_channel("urine_output", uo_t, plan, cfg, rng, offsets["urine_output"]).tolist()))
    baseline = None
    if rng.random() < 0.7:
        baseline = round(float(PHYSIOLOGY["creatinine"][0] + PHYSIOLOGY["creatinine"][1]
                               * cfg.noise * offsets["creatinine"]) * rng.uniform(0.95, 1.05), 2)
        baseline = max(baseline, 0.3)

    support = []
    if plan.outcome == NO_SHOCK and rng.random() < 0.1:
        support.append(SupportEvent(round(rng.uniform(0, end), 2), "pharmacologic", "milrinone", False))

    path = plan.path
    if onset is not None:
        if path == "creatinine" and not any(t < onset - 0.5 for t in cr):
            path = "lactate"
        if path == "urine" and math.floor(onset) - 5 < 1:
            path = "lactate"
        if path == "support":
            _clear_after(sbp, onset - 1e-9)
            for t in np.arange(onset + 0.25, end + 1e-9, 0.25):
                sbp[float(t)] = float(rng.integers(72, 90))
            agent = rng.choice(DEVICES) if rng.random() < 0.2 else rng.choice(PRESSOR_AGENTS)
            kind = "mechanical" if agent in DEVICES else "pharmacologic"
            support.append(SupportEvent(onset, kind, str(agent), True))
        else:
            start = onset - 0.5
            _clear_after(sbp, start - 1e-9)
            prev = [t for t in sbp if t < start]
            if prev and sbp[max(prev)] < 90:
                sbp[max(prev)] = 95.0
            for t in np.arange(start, end + 1e-9, 0.25):
                sbp[float(t)] = float(rng.integers(70, 90))
            if path == "lactate":
                _clear_window(lac, start, onset)
                lac[start] = round(rng.uniform(2.3, 6.0), 1)
            elif path == "creatinine":
                _clear_window(cr, start, onset)
                first = cr[min(cr)]
                ref = baseline if baseline is not None else first
                need = max(1.5 * ref, ref + 0.3) if baseline is not None else first + 0.3
                cr[start] = round(need + rng.uniform(0.05, 0.5), 2)
            elif path == "urine":
                k = math.floor(onset)
                for h in range(k - 5, math.floor(end) + 1):
                    uo[float(h)] = round(rng.uniform(0.1, 0.45), 2)
            if rng.random() < 0.5:
                agent = rng.choice(PRESSOR_AGENTS)
                support.append(SupportEvent(onset + 1.0, "pharmacologic", str(agent), True))

    channels = {
        "sbp": _as_arrays(sbp), "heart_rate": (hr_t, hr_v), "lactate": _as_arrays(lac),
        "creatinine": _as_arrays(cr), "urine_output": _as_arrays(uo),
    }
    return RawStream(plan.patient_id, channels, support, baseline, plan.etiology)


def _lab_times(rng, end, lo, hi):
    out, t = [], rng.uniform(0.0, 3.0)
    while t <= end:
        out.append(round(t, 2))
        t += rng.uniform(lo, hi)
    return np.array(out)


def _clear_after(d: dict, t0: float):
    for t in [t for t in d if t > t0]:
        del d[t]


def _clear_window(d: dict, a: float, b: float):
    for t in [t for t in d if a - 1e-9 <= t <= b + 1e-9]:
        del d[t]


def _as_arrays(d: dict):
    ts = sorted(d)
    return np.array(ts, dtype=float), np.array([d[t] for t in ts], dtype=float)


def _hourly_from_raw(times, values, n_hours):
    """Mean of readings in (k-1, k] for each hour k; hour 0 takes readings at t <= 0."""
    out = np.full(n_hours, np.nan)
    if len(times) == 0:
        return out
    idx = np.ceil(np.asarray(times) - 1e-9).astype(int)
    idx[idx < 0] = 0
    ok = idx < n_hours
    sums = np.bincount(idx[ok], weights=np.asarray(values)[ok], minlength=n_hours)
    counts = np.bincount(idx[ok], minlength=n_hours)
    has = counts > 0
    out[has] = sums[has] / counts[has]
    return out


def _statics(schema: FeatureSchema, plan: _Plan, cfg: GeneratorConfig, rng) -> np.ndarray:
    pos = plan.outcome in (CARDIOGENIC, DIED) and cfg.static_signal
    out = np.empty(schema.static_count)
    for i, name in enumerate(schema.static_names):
        if name == "age":
            out[i] = plan.age
        elif name == "sex_male":
            out[i] = 1.0 if plan.sex == "M" else 0.0
        elif name in STATIC_MODELS:
            spec = STATIC_MODELS[name]
            if spec[0] == "bern":
                out[i] = float(rng.random() < (spec[2] if pos else spec[1]))
            else:
                _, mu0, mu1, sd, lo, hi, pmiss, dec = spec
                v = round(float(np.clip(rng.normal(mu1 if pos else mu0, sd), lo, hi)), dec)
                out[i] = np.nan if rng.random() < pmiss else v
        else:
            out[i] = round(float(rng.normal()), 3)
    return out


def _record(plan: _Plan, stream: RawStream | None, schema: FeatureSchema, cfg: GeneratorConfig,
            rng, offsets) -> PatientRecord:
    if plan.outcome in (CARDIOGENIC, NONCARDIOGENIC, DIED):
        U = math.floor(plan.event_time)
    else:
        U = math.floor(plan.end_time)
    hours = np.arange(U + 1, dtype=float)
    ntv = schema.time_varying_count
    series = np.full((ntv, U + 1), np.nan)
    names = schema.time_varying_names
    plain = [i for i, n in enumerate(names) if stream is None or n not in stream.channels]
    if plain:
        shifts = np.stack([_latent_shift(names[i], hours, plan, cfg) * np.ones(U + 1) for i in plain])
        innov = rng.normal(0.0, _NOISE_SD * math.sqrt(1 - _AR_RHO ** 2), (len(plain), U + 1))
        innov[:, 0] *= 1.0 / math.sqrt(1 - _AR_RHO ** 2)
        ar = lfilter([1.0], [1.0, -_AR_RHO], innov, axis=1)
        obs = rng.random((len(plain), U + 1))
        for row, i in enumerate(plain):
            mean, sd, lo, hi, p_obs, dec = _feature_params(names[i])
            vals = mean + sd * (shifts[row] + cfg.noise * (offsets.get(names[i], 0.0) + ar[row]))
            vals = np.round(np.clip(vals, lo, hi), dec)
            keep = obs[row] < p_obs ** cfg.missing_scale if p_obs > 0 else np.zeros(U + 1, bool)
            series[i] = np.where(keep, vals, np.nan)
    if stream is not None:
        for i, n in enumerate(names):
            if n in stream.channels:
                t, v = stream.channels[n]
                series[i] = np.round(_hourly_from_raw(t, v, U + 1), 3)

    truth = {
        "hazard": [round(float(z), 4) for z in plan.severity(hours)],
        "event_time": plan.event_time,
        "onset_path": None if plan.path is None else str(plan.path),
    }
    onset_hour = U if plan.outcome in (CARDIOGENIC, NONCARDIOGENIC) else None
    return PatientRecord(plan.patient_id, _statics(schema, plan, cfg, rng), series, plan.outcome, U,
                         plan.age, plan.sex, plan.hospital_stay_hours, onset_hour, truth)


def generate_cohort(size: int, positive_rate: float, seed: int, schema: FeatureSchema,
                    config: GeneratorConfig | None = None) -> list[tuple[RawStream | None, PatientRecord]]:
    """Seeded synthetic stays as ``(raw stream, hourly record)`` pairs.

    Outcomes are drawn independently per patient (positive with probability
    ``positive_rate``), so the positive count is binomial. For
    ``config.task == "mortality"`` the event is in-hospital death and no raw
    streams are produced.
    """
    cfg = config or GeneratorConfig()
    if size < 2:
        raise ValueError("size must be at least 2")
    if not 0.0 <= positive_rate < 1.0:
        raise ValueError("positive_rate must lie in [0, 1)")
    if 0 < size * positive_rate < 1:
        raise ValueError("size * positive_rate < 1: expected fewer than one positive")
    if cfg.task not in ("shock", "mortality"):
        raise ValueError(f"unknown task {cfg.task!r}")
    nc_rate = cfg.noncardiogenic_rate if cfg.task == "shock" else 0.0
    if positive_rate + nc_rate >= 1:
        raise ValueError("positive_rate + noncardiogenic_rate must be below 1")

    children = np.random.SeedSequence(seed).spawn(size)
    width = max(4, len(str(size - 1)))
    raw_names = {"sbp", "heart_rate", "lactate", "creatinine", "urine_output"}
    out = []
    for i, ss in enumerate(children):
        rng = np.random.default_rng(ss)
        u = rng.random()
        if cfg.task == "shock":
            outcome = CARDIOGENIC if u < positive_rate else (
                NONCARDIOGENIC if u < positive_rate + nc_rate else NO_SHOCK)
        else:
            outcome = DIED if u < positive_rate else SURVIVED
        plan = _plan_patient(f"{cfg.id_prefix}{i:0{width}d}", outcome, cfg, rng)
        offsets = {n: float(rng.normal(0, _OFFSET_SD)) for n in schema.time_varying_names}
        for n in raw_names:
            offsets.setdefault(n, float(rng.normal(0, _OFFSET_SD)))
        stream = _raw_stream(plan, cfg, rng, offsets) if cfg.task == "shock" else None
        out.append((stream, _record(plan, stream, schema, cfg, rng, offsets)))
    return out


def cohort_manifest(schema: FeatureSchema, config: GeneratorConfig, size: int, positive_rate: float,
                    seed: int) -> dict:
    """Ground-truth description of the generating process."""
    present = set(schema.names)
    return {
        "generator": config.to_dict(),
        "size": size,
        "positive_rate": positive_rate,
        "seed": seed,
        "driver_importance": {k: v for k, v in sorted(config.drivers.items(), key=lambda kv: -abs(kv[1]))
                              if k in present},
        "static_effects": sorted(n for n in STATIC_MODELS if n in present) if config.static_signal else [],
    }


def transfer_pair(study_size: int, pretrain_size: int, seed: int, schema: FeatureSchema,
                  positive_rate: float = 0.136, mortality_rate: float = 0.15,
                  config: GeneratorConfig | None = None):
    """A shock study cohort and a disjoint mortality cohort with shared dynamics.

    Deaths follow the same severity ramp as shock onset, so a network
    pretrained on mortality has already seen the relevant physiology.
    Returns ``(study pairs, pretraining pairs)``.
    """
    cfg = config or GeneratorConfig()
    seeds = [int(v) for v in np.random.SeedSequence(seed).generate_state(2)]
    study = generate_cohort(study_size, positive_rate, seeds[0], schema,
                            GeneratorConfig(**{**cfg.to_dict(), "task": "shock", "id_prefix": "S"}))
    pre = generate_cohort(pretrain_size, mortality_rate, seeds[1], schema,
                          GeneratorConfig(**{**cfg.to_dict(), "task": "mortality", "id_prefix": "M"}))
    return study, pre
