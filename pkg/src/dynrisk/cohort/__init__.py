"""Feature schema, synthetic cohorts, onset adjudication and preprocessing."""

from .adjudicate import AdjudicationResult, adjudicate
from .filters import apply_exclusions, exclusion_reason
from .generator import GeneratorConfig, cohort_manifest, generate_cohort, transfer_pair
from .preprocess import PreprocessorState, fit_preprocessor, preprocess, preprocess_many, split_fingerprint
from .records import (CARDIOGENIC, DIED, NO_SHOCK, NONCARDIOGENIC, SURVIVED, PatientRecord, RawStream,
                      SupportEvent, load_cohort, read_records_jsonl, read_streams_csv, save_cohort,
                      write_records_jsonl, write_streams_csv)
from .schema import Feature, FeatureSchema, full_schema, get_schema, reduced_schema, small_schema
