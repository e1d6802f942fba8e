"""Standardization, mean imputation and missingness indicators."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .records import PatientRecord
from .schema import FeatureSchema


def split_fingerprint(patient_ids) -> str:
    blob = "\n".join(sorted(patient_ids)).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class PreprocessorState:
    schema_fingerprint: str
    fit_fingerprint: str
    tv_mean: np.ndarray
    tv_std: np.ndarray
    static_mean: np.ndarray
    static_std: np.ndarray
    never_observed: list[str] = field(default_factory=list)

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [("pre.tv_mean", self.tv_mean), ("pre.tv_std", self.tv_std),
                ("pre.static_mean", self.static_mean), ("pre.static_std", self.static_std)]

    def meta(self) -> dict:
        return {"schema_fingerprint": self.schema_fingerprint, "fit_fingerprint": self.fit_fingerprint,
                "never_observed": list(self.never_observed)}

    @classmethod
    def from_arrays(cls, arrays: dict, meta: dict) -> "PreprocessorState":
        return cls(meta["schema_fingerprint"], meta["fit_fingerprint"], arrays["pre.tv_mean"],
                   arrays["pre.tv_std"], arrays["pre.static_mean"], arrays["pre.static_std"],
                   list(meta.get("never_observed", [])))


def _moments(values: np.ndarray, names: list[str], flagged: list[str]):
    """Mean and population std per row over non-NaN cells."""
    n = values.shape[0]
    mean, std = np.zeros(n), np.ones(n)
    for i in range(n):
        obs = values[i][~np.isnan(values[i])]
        if obs.size == 0:
            flagged.append(names[i])
            continue
        mean[i] = obs.mean()
        s = obs.std()
        std[i] = s if s > 0 else 1.0
    return mean, std


def fit_preprocessor(records: list[PatientRecord], schema: FeatureSchema) -> PreprocessorState:
    """Per-feature statistics from the training records only.

    Zero-variance features get std 1 so they standardize to zeros; features
    never observed get mean 0, std 1 and are listed in ``never_observed``.
    """
    if not records:
        raise ValueError("cannot fit a preprocessor on zero records")
    ntv = schema.time_varying_count
    for r in records:
        _check(r, schema)
    tv = np.concatenate([r.series for r in records], axis=1) if ntv else np.zeros((0, 1))
    st = np.stack([r.static for r in records], axis=1) if schema.static_count else np.zeros((0, 1))
    flagged: list[str] = []
    tv_mean, tv_std = _moments(tv, schema.time_varying_names, flagged)
    st_mean, st_std = _moments(st, schema.static_names, flagged)
    return PreprocessorState(schema.fingerprint, split_fingerprint(r.patient_id for r in records),
                             tv_mean, tv_std, st_mean, st_std, flagged)


def _check(record: PatientRecord, schema: FeatureSchema):
    if record.series.shape[0] != schema.time_varying_count or record.static.shape[0] != schema.static_count:
        raise ValueError(f"record {record.patient_id} has {record.series.shape[0]} time-varying and "
                         f"{record.static.shape[0]} static features; schema expects "
                         f"{schema.time_varying_count} and {schema.static_count}")


def preprocess(record: PatientRecord, state: PreprocessorState) -> np.ndarray:
    """Model-ready ``[hours, channels]`` array.

    Channel order: standardized time-varying values (missing cells take the
    population mean, i.e. 0 after standardization), then one indicator per
    time-varying feature (1 missing, 0 observed), then standardized statics
    repeated across hours.
    """
    ntv, nst = state.tv_mean.shape[0], state.static_mean.shape[0]
    if record.series.shape[0] != ntv or record.static.shape[0] != nst:
        raise ValueError(f"record {record.patient_id} does not match the fitted feature layout")
    T = record.n_hours
    missing = np.isnan(record.series)
    values = np.where(missing, state.tv_mean[:, None], record.series)
    values = (values - state.tv_mean[:, None]) / state.tv_std[:, None]
    static = np.where(np.isnan(record.static), state.static_mean, record.static)
    static = (static - state.static_mean) / state.static_std
    out = np.empty((T, 2 * ntv + nst))
    out[:, :ntv] = values.T
    out[:, ntv:2 * ntv] = missing.T
    out[:, 2 * ntv:] = static
    return out


def preprocess_many(records, state) -> list[np.ndarray]:
    return [preprocess(r, state) for r in records]
