"""Feature catalog: which inputs exist, their units and their roles."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

TIME_VARYING = "time_varying"
STATIC = "static"


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str  # TIME_VARYING or STATIC
    unit: str = ""
    in_reduced_model: bool = False
    maskable: bool = False


# Routinely charted inputs. The first 58 form the reduced model.
_ROUTINE_TV = [
    ("heart_rate", "bpm"), ("sbp", "mmHg"), ("dbp", "mmHg"), ("map", "mmHg"),
    ("resp_rate", "breaths/min"), ("spo2", "%"), ("temperature", "C"),
    ("gcs_eye", "points"), ("gcs_verbal", "points"), ("gcs_motor", "points"),
    ("braden_sensory", "points"), ("braden_moisture", "points"), ("braden_activity", "points"),
    ("braden_mobility", "points"), ("braden_nutrition", "points"), ("braden_friction", "points"),
    ("urine_output", "cc/kg/hr"), ("lactate", "mmol/L"), ("creatinine", "mg/dl"),
    ("bun", "mg/dl"), ("sodium", "mmol/L"), ("potassium", "mmol/L"), ("chloride", "mmol/L"),
    ("bicarbonate", "mmol/L"), ("anion_gap", "mmol/L"), ("glucose", "mg/dl"),
    ("calcium", "mg/dl"), ("magnesium", "mg/dl"), ("phosphate", "mg/dl"),
    ("hemoglobin", "g/dl"), ("hematocrit", "%"), ("wbc", "K/uL"), ("platelets", "K/uL"),
    ("inr", "ratio"), ("ptt", "s"), ("ast", "U/L"), ("alt", "U/L"), ("bilirubin", "mg/dl"),
    ("albumin", "g/dl"), ("troponin", "ng/ml"), ("ph", "pH"), ("pco2", "mmHg"),
    ("po2", "mmHg"), ("base_excess", "mmol/L"), ("fio2", "%"), ("peep", "cmH2O"),
    ("weight_daily", "kg"), ("fluid_balance", "ml"), ("furosemide_dose", "mg"),
    ("heparin_rate", "U/hr"), ("insulin_rate", "U/hr"), ("ck", "U/L"), ("ckmb", "ng/ml"),
    ("ldh", "U/L"), ("alk_phos", "U/L"), ("triglycerides", "mg/dl"), ("nibp_mean", "mmHg"),
    ("pain_score", "points"),
]

# Less routine inputs present only in the full model.
_EXTRA_TV = [
    ("bnp", "pg/ml"), ("cvp", "mmHg"), ("pa_systolic", "mmHg"), ("pa_diastolic", "mmHg"),
    ("cardiac_output", "L/min"), ("cardiac_index", "L/min/m2"), ("svr", "dyn s/cm5"),
    ("svo2", "%"), ("pcwp", "mmHg"), ("ionized_calcium", "mmol/L"), ("fibrinogen", "mg/dl"),
    ("d_dimer", "ug/ml"), ("procalcitonin", "ng/ml"), ("crp", "mg/l"), ("ammonia", "umol/L"),
]

STATIC_FEATURES = [
    ("age", "years"), ("sex_male", "binary"), ("weight_kg", "kg"),
    ("admit_dx_stemi", "binary"), ("admit_dx_nstemi", "binary"), ("admit_dx_adhf", "binary"),
    ("lvef", "%"), ("rv_systolic_dysfunction", "binary"), ("rv_dilation", "binary"),
    ("rvsp", "mmHg"), ("left_valvular_disease", "binary"), ("lv_aneurysm", "binary"),
]

FULL_TIME_VARYING = 182
REDUCED_TIME_VARYING = 58


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]
    name: str = "custom"

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        for f in self.features:
            if f.kind not in (TIME_VARYING, STATIC):
                raise ValueError(f"unknown feature kind {f.kind!r}")

    @property
    def time_varying(self) -> list[Feature]:
        return [f for f in self.features if f.kind == TIME_VARYING]

    @property
    def static(self) -> list[Feature]:
        return [f for f in self.features if f.kind == STATIC]

    @property
    def time_varying_count(self) -> int:
        return len(self.time_varying)

    @property
    def static_count(self) -> int:
        return len(self.static)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def time_varying_names(self) -> list[str]:
        return [f.name for f in self.time_varying]

    @property
    def static_names(self) -> list[str]:
        return [f.name for f in self.static]

    @property
    def maskable(self) -> list[Feature]:
        return [f for f in self.features if f.maskable]

    @property
    def channel_count(self) -> int:
        """Model input width: value + indicator per time-varying feature, one slot per static."""
        return 2 * self.time_varying_count + self.static_count

    def channel_names(self) -> list[str]:
        tv = self.time_varying_names
        return tv + [f"{n}__missing" for n in tv] + self.static_names

    def player_channels(self) -> list[tuple[int | None, int | None]]:
        """For each maskable feature: (value channel, indicator channel or None)."""
        tv_index = {n: i for i, n in enumerate(self.time_varying_names)}
        st_index = {n: i for i, n in enumerate(self.static_names)}
        ntv = self.time_varying_count
        out = []
        for f in self.maskable:
            if f.kind == TIME_VARYING:
                i = tv_index[f.name]
                out.append((i, ntv + i))
            else:
                out.append((2 * ntv + st_index[f.name], None))
        return out

    def subset(self, names, name: str | None = None, all_maskable: bool | None = None) -> "FeatureSchema":
        keep = set(names)
        feats = []
        for f in self.features:
            if f.name in keep:
                if all_maskable is not None:
                    f = Feature(f.name, f.kind, f.unit, f.in_reduced_model, all_maskable)
                feats.append(f)
        return FeatureSchema(tuple(feats), name or f"{self.name}-subset")

    def reduced(self) -> "FeatureSchema":
        """The routinely-charted subset; every feature in it is maskable."""
        return self.subset([f.name for f in self.features if f.in_reduced_model],
                           name="reduced", all_maskable=True)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "time_varying_count": self.time_varying_count,
            "static_count": self.static_count,
            "features": [asdict(f) for f in self.features],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(tuple(Feature(**f) for f in d["features"]), d.get("name", "custom"))

    @property
    def fingerprint(self) -> str:
        blob = json.dumps([asdict(f) for f in self.features], sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def full_schema() -> FeatureSchema:
    """194 inputs: 182 time-varying and 12 static.

    The reduced-model features (58 routine time-varying plus all statics) are
    the maskable ones, since attributions are computed on that subset.
    """
    tv = list(_ROUTINE_TV) + list(_EXTRA_TV)
    k = 1
    while len(tv) < FULL_TIME_VARYING:
        tv.append((f"aux_signal_{k:03d}", "a.u."))
        k += 1
    feats = []
    for i, (name, unit) in enumerate(tv):
        reduced = i < REDUCED_TIME_VARYING
        feats.append(Feature(name, TIME_VARYING, unit, reduced, reduced))
    for name, unit in STATIC_FEATURES:
        feats.append(Feature(name, STATIC, unit, True, True))
    return FeatureSchema(tuple(feats), "full")


def reduced_schema() -> FeatureSchema:
    return full_schema().reduced()


def get_schema(name: str) -> FeatureSchema:
    if name == "full":
        return full_schema()
    if name == "reduced":
        return reduced_schema()
    raise ValueError(f"unknown schema {name!r} (expected 'full' or 'reduced')")


def small_schema(time_varying, static=(), units: dict | None = None) -> FeatureSchema:
    """Compact schema for experiments; every feature is maskable."""
    units = units or {}
    feats = [Feature(n, TIME_VARYING, units.get(n, ""), True, True) for n in time_varying]
    feats += [Feature(n, STATIC, units.get(n, ""), True, True) for n in static]
    return FeatureSchema(tuple(feats), "small")
