"""Attribute risk to features on a cohort with one planted driver."""

from dynrisk.cohort import GeneratorConfig, generate_cohort, preprocess_many, small_schema
from dynrisk.interpret import (
    ExplainerConfig, exact_attribution, explain, rank_features, topk_retention_curve, train_explainer,
    train_surrogate,
)
from dynrisk.training import TrainRunConfig

names = ["dbp", "map", "resp_rate", "spo2", "glucose", "potassium"]
schema = small_schema(names)
gen = GeneratorConfig(drivers={"map": 2.0}, sepsis_drivers={}, static_signal=False)
records = [r for _, r in generate_cohort(400, 0.2, seed=0, schema=schema, config=gen)]
train, val = records[:300], records[300:]

sur = train_surrogate(train, val, schema, TrainRunConfig.preset("desk", epochs=15))
print("masking audit:", sur.masking)
arrays = preprocess_many(train, sur.preprocessor)
explainer, _ = train_explainer(sur.model, arrays[:150], schema, ExplainerConfig(epochs=60, subset_pairs=16))

attrs = [explain(sur.model, explainer, x, schema, r.patient_id) for x, r in zip(arrays, train)]
ranking = rank_features(attrs, names)
for f, imp in zip(ranking.features, ranking.importance):
    print(f"{f:>10s} {imp:.4f}")

# six players is small enough to enumerate and compare
exact, _ = exact_attribution(sur.model, arrays[0], schema)
print("amortized", attrs[0].phi.round(4))
print("exact    ", exact.phi.round(4))

labels = [r.label for r in train]
print(topk_retention_curve(sur.model, ranking, arrays, labels, schema, range(1, len(names) + 1)))
