"""Train one fold on a reduced-schema cohort and evaluate it at 80% sensitivity."""

from dynrisk.cohort import generate_cohort, reduced_schema
from dynrisk.evaluation import evaluate, outcome_pairs
from dynrisk.model import RiskTrajectory
from dynrisk.training import TrainRunConfig, cross_validate, score_records

schema = reduced_schema()
records = [r for _, r in generate_cohort(600, 0.136, seed=1, schema=schema)]
cfg = TrainRunConfig.preset("desk", epochs=10, seed=0)

cv = cross_validate(records, schema, cfg, folds=[0])
fold = cv.folds[0]
print(f"best epoch {fold.best_epoch}, validation AUROC {fold.best_val_auroc:.3f}, test AUROC {fold.test_auroc:.3f}")

test_ids = set(cv.plan.roles(0)["test"])
test = [r for r in records if r.patient_id in test_ids]
scores = score_records(fold.model, fold.preprocessor, test)
trajs = [RiskTrajectory(r.patient_id, s, r.observed_time, r.label) for r, s in zip(test, scores)]
report = evaluate(outcome_pairs(trajs, test), trajs, sensitivity=0.8)
op = report["operating_point"]
print(f"threshold {report['threshold']:.3f}: PPV {op['ppv']:.2f}, recall {op['recall']:.2f}")
print("lead time", report["lead_time"])
