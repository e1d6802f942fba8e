"""Patient records, raw monitoring streams and their file formats."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

NO_SHOCK = "no_shock"
NONCARDIOGENIC = "noncardiogenic_only"
CARDIOGENIC = "cardiogenic_or_mixed"
SURVIVED = "survived"
DIED = "died"

POSITIVE_OUTCOMES = {CARDIOGENIC, DIED}

RAW_CHANNELS = ("sbp", "heart_rate", "creatinine", "lactate", "urine_output")


@dataclass
class PatientRecord:
    """One ICU stay, discretized to hours 0..observed_time inclusive.

    ``series`` is ``[time_varying_count, observed_time + 1]`` with NaN where
    the feature was not measured in that hour.
    """

    patient_id: str
    static: np.ndarray
    series: np.ndarray
    outcome: str
    observed_time: int
    age: float
    sex: str
    hospital_stay_hours: float
    onset_hour: int | None = None
    truth: dict = field(default_factory=dict)

    def __post_init__(self):
        self.static = np.asarray(self.static, dtype=np.float64)
        self.series = np.asarray(self.series, dtype=np.float64)
        if self.observed_time < 0:
            raise ValueError(f"{self.patient_id}: observed_time must be >= 0")
        if self.series.ndim != 2 or self.series.shape[1] != self.observed_time + 1:
            raise ValueError(f"{self.patient_id}: series has {self.series.shape[-1]} hours, "
                             f"expected {self.observed_time + 1}")
        if self.outcome == CARDIOGENIC and self.onset_hour != self.observed_time:
            raise ValueError(f"{self.patient_id}: a positive stay must end at its onset hour")

    @property
    def label(self) -> int:
        return int(self.outcome in POSITIVE_OUTCOMES)

    @property
    def n_hours(self) -> int:
        return self.observed_time + 1

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.series)

    def truncated(self, last_hour: int) -> "PatientRecord":
        """The same stay seen only up to ``last_hour`` (used for causality checks)."""
        if not 0 <= last_hour <= self.observed_time:
            raise ValueError("last_hour outside the stay")
        return PatientRecord(self.patient_id, self.static.copy(), self.series[:, :last_hour + 1].copy(),
                             NO_SHOCK if self.outcome == CARDIOGENIC else self.outcome,
                             last_hour, self.age, self.sex, self.hospital_stay_hours, None, {})

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "outcome": self.outcome,
            "observed_time": self.observed_time,
            "onset_hour": self.onset_hour,
            "age": self.age,
            "sex": self.sex,
            "hospital_stay_hours": self.hospital_stay_hours,
            "static": [_enc(v) for v in self.static],
            "series": [[_enc(v) for v in row] for row in self.series],
            "truth": self.truth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatientRecord":
        series = np.array([[_dec(v) for v in row] for row in d["series"]], dtype=np.float64)
        if series.size == 0:
            series = series.reshape(0, d["observed_time"] + 1)
        return cls(
            patient_id=d["patient_id"],
            static=np.array([_dec(v) for v in d["static"]], dtype=np.float64),
            series=series,
            outcome=d["outcome"],
            observed_time=int(d["observed_time"]),
            age=float(d["age"]),
            sex=d["sex"],
            hospital_stay_hours=float(d["hospital_stay_hours"]),
            onset_hour=d.get("onset_hour"),
            truth=d.get("truth", {}),
        )

    def __eq__(self, other):
        if not isinstance(other, PatientRecord):
            return NotImplemented
        return (self.patient_id == other.patient_id and self.outcome == other.outcome
                and self.observed_time == other.observed_time and self.onset_hour == other.onset_hour
                and self.age == other.age and self.sex == other.sex
                and self.hospital_stay_hours == other.hospital_stay_hours
                and np.array_equal(self.static, other.static, equal_nan=True)
                and np.array_equal(self.series, other.series, equal_nan=True)
                and self.truth == other.truth)


def _enc(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) or (
        isinstance(v, np.floating) and np.isnan(v)) else float(v)


def _dec(v):
    return np.nan if v is None else float(v)


@dataclass(frozen=True)
class SupportEvent:
    time: float
    kind: str  # "pharmacologic" or "mechanical"
    agent: str
    for_blood_pressure: bool = True


@dataclass
class RawStream:
    """Sub-hourly measurements for one stay, times in hours since ICU admission.

    ``channels`` maps a name from RAW_CHANNELS to ``(times, values)``.
    Urine output readings are rates over the hour ending at their timestamp.
    ``etiology`` is the chart-review etiology of any shock ("cardiogenic",
    "mixed", "noncardiogenic") or None.
    """

    patient_id: str
    channels: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    support: list[SupportEvent] = field(default_factory=list)
    creatinine_baseline: float | None = None
    etiology: str | None = None

    def __post_init__(self):
        for name, (t, v) in list(self.channels.items()):
            t = np.asarray(t, dtype=np.float64)
            v = np.asarray(v, dtype=np.float64)
            if t.shape != v.shape:
                raise ValueError(f"{self.patient_id}/{name}: times and values differ in length")
            if t.size and (t[0] < 0 or np.any(np.diff(t) <= 0)):
                raise ValueError(f"{self.patient_id}/{name}: timestamps must be nonnegative and strictly increasing")
            self.channels[name] = (t, v)
        self.support = sorted(self.support, key=lambda e: e.time)
        if any(e.time < 0 for e in self.support):
            raise ValueError(f"{self.patient_id}: negative support timestamp")

    def channel(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        return self.channels.get(name, (np.empty(0), np.empty(0)))

    @property
    def is_empty(self) -> bool:
        return not self.support and all(t.size == 0 for t, _ in self.channels.values())

    def rows(self) -> list[tuple[float, str, float]]:
        """Flat (timestamp, channel, value) rows, the CSV layout."""
        rows = []
        if self.creatinine_baseline is not None:
            rows.append((0.0, "creatinine_baseline", self.creatinine_baseline))
        if self.etiology is not None:
            rows.append((0.0, f"etiology:{self.etiology}", 1.0))
        for name in RAW_CHANNELS:
            t, v = self.channel(name)
            rows.extend((float(a), name, float(b)) for a, b in zip(t, v))
        for e in self.support:
            rows.append((e.time, f"support:{e.kind}:{e.agent}", 1.0 if e.for_blood_pressure else 0.0))
        return rows

    @classmethod
    def from_rows(cls, patient_id: str, rows: Iterable[tuple[float, str, float]]) -> "RawStream":
        chans: dict[str, list] = {}
        support, baseline, etiology = [], None, None
        for t, name, v in rows:
            t, v = float(t), float(v)
            if name == "creatinine_baseline":
                baseline = v
            elif name.startswith("etiology:"):
                etiology = name.split(":", 1)[1]
            elif name.startswith("support:"):
                _, kind, agent = name.split(":", 2)
                support.append(SupportEvent(t, kind, agent, bool(v)))
            elif name in RAW_CHANNELS:
                chans.setdefault(name, []).append((t, v))
            else:
                raise ValueError(f"{patient_id}: unknown raw channel {name!r}")
        channels = {}
        for name, pts in chans.items():
            pts.sort()
            channels[name] = (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
        return cls(patient_id, channels, support, baseline, etiology)


# file formats -----------------------------------------------------------------

def write_records_jsonl(path, records: Iterable[PatientRecord]):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), separators=(",", ":")) + "\n")


def read_records_jsonl(path) -> list[PatientRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(PatientRecord.from_dict(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc})") from exc
    return out


def write_streams_csv(path, streams: Iterable[RawStream]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "timestamp", "channel", "value"])
        for s in streams:
            for t, name, v in s.rows():
                w.writerow([s.patient_id, repr(float(t)), name, repr(float(v))])


def read_streams_csv(path) -> list[RawStream]:
    by_patient: dict[str, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            by_patient.setdefault(row["patient_id"], []).append(
                (float(row["timestamp"]), row["channel"], float(row["value"])))
    return [RawStream.from_rows(pid, rows) for pid, rows in by_patient.items()]


def streams_to_csv_text(streams: Iterable[RawStream]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["patient_id", "timestamp", "channel", "value"])
    for s in streams:
        for t, name, v in s.rows():
            w.writerow([s.patient_id, repr(float(t)), name, repr(float(v))])
    return buf.getvalue()


def save_cohort(directory, records: list[PatientRecord], schema, extra_manifest: dict | None = None):
    """Write ``cohort.jsonl`` and ``schema.json`` into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_records_jsonl(d / "cohort.jsonl", records)
    doc = {"schema_version": 1, "schema": schema.to_dict(), "fingerprint": schema.fingerprint}
    if extra_manifest:
        doc.update(extra_manifest)
    (d / "schema.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_cohort(directory):
    from .schema import FeatureSchema

    d = Path(directory)
    doc = json.loads((d / "schema.json").read_text())
    schema = FeatureSchema.from_dict(doc["schema"])
    records = read_records_jsonl(d / "cohort.jsonl")
    for r in records:
        if r.series.shape[0] != schema.time_varying_count or r.static.shape[0] != schema.static_count:
            raise ValueError(f"record {r.patient_id} does not match schema {schema.fingerprint}")
    return records, schema, doc
