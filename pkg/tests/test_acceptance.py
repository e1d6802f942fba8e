"""Acceptance gate: each test checks one criterion and records PASS/FAIL.

The terminal summary prints one line per criterion. Long-running
criteria (end-to-end learning, pretraining, interpretation recovery)
take several minutes each on one core.
"""

import itertools
import json
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from conftest import record_acceptance
from dynrisk.tensor import Tensor

FIXTURES = Path(__file__).parent / "fixtures"


def gate(key, title, passed, detail=""):
    record_acceptance(key, title, passed, detail)
    assert passed, f"{key} {title}: {detail}"


# gradients ---------------------------------------------------------------------

def random_network(rng):
    from dynrisk.model import RiskModel, RiskModelConfig
    while True:
        layers = int(rng.integers(1, 4))
        cfg = RiskModelConfig(num_layers=layers, channels=[int(c) for c in rng.integers(1, 5, layers)],
                              kernel_size=int(rng.integers(1, 4)),
                              dilations=[int(d) for d in rng.integers(1, 5, layers)], dropout_rate=0.0)
        n_in = int(rng.integers(1, 5))
        model = RiskModel(cfg, n_in, seed=int(rng.integers(1 << 30)))
        if model.n_parameters <= 500:
            return model


def test_ac1_gradients_match_finite_differences():
    from dynrisk.model import risk_loss
    start = time.perf_counter()
    worst = 0.0
    for i in range(50):
        rng = np.random.default_rng([1, i])
        model = random_network(rng)
        B, Tn = 3, int(rng.integers(4, 9))
        x = rng.normal(size=(B, Tn, model.n_inputs))
        mask = np.ones((B, Tn))
        mask[2, Tn - 2:] = 0
        labels = [1, 0, 1]
        for p in model.params.values():
            p.data = p.data + rng.normal(0, 0.1, p.data.shape)

        def loss():
            return risk_loss(model.forward(x, mask, training=True), mask, labels)
        for p in model.params.values():
            p.grad = None
        loss().backward()
        analytic, numeric = [], []
        for p in model.params.values():
            analytic.append(p.grad.ravel().copy())
            g = np.zeros(p.data.size)
            flat = p.data.reshape(-1)
            for j in range(flat.size):
                old = flat[j]
                flat[j] = old + 1e-5
                up = float(loss().data)
                flat[j] = old - 1e-5
                down = float(loss().data)
                flat[j] = old
                g[j] = (up - down) / 2e-5
            numeric.append(g)
        a, n = np.concatenate(analytic), np.concatenate(numeric)
        err = np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    gate("AC1", "gradient correctness", worst < 1e-4 and elapsed < 60,
         f"worst rel err {worst:.2e} over 50 networks, {elapsed:.1f}s")


# causality ---------------------------------------------------------------------

def test_ac2_future_inputs_never_change_past_scores():
    start = time.perf_counter()
    failures = 0
    for i in range(100):
        rng = np.random.default_rng([2, i])
        model = random_network(rng)
        for st in model.bn:
            st.running_mean = rng.normal(size=st.running_mean.shape)
            st.running_var = rng.uniform(0.5, 2.0, st.running_var.shape)
        Tn = int(rng.integers(2, 30))
        cut = int(rng.integers(1, Tn))
        x = rng.normal(size=(2, Tn, model.n_inputs))
        y = x.copy()
        y[:, cut:] = rng.normal(size=y[:, cut:].shape) * 10
        a = model.forward(x, training=False).data
        b = model.forward(y, training=False).data
        failures += not np.array_equal(a[:, :cut], b[:, :cut])
    elapsed = time.perf_counter() - start
    gate("AC2", "causality", failures == 0 and elapsed < 60,
         f"{failures}/100 configurations leaked future input, {elapsed:.1f}s")


# loss semantics ----------------------------------------------------------------

def test_ac3_loss_semantics():
    from dynrisk.model import risk_loss, softmax_weighted_risk
    start = time.perf_counter()
    problems = []
    rng = np.random.default_rng(3)
    for _ in range(200):
        r = rng.uniform(0, 1, int(rng.integers(1, 40)))
        v = softmax_weighted_risk(r, float(rng.uniform(0.1, 20)))
        if not r.min() <= v <= r.max():
            problems.append("bound")
    for _ in range(200):
        n = int(rng.integers(2, 40))
        top = rng.uniform(0.5, 1.0)
        r = np.concatenate([[top], rng.uniform(0, top - 0.5, n - 1)])
        rng.shuffle(r)
        if abs(softmax_weighted_risk(r, 50.0) - top) > 1e-6:
            problems.append("alpha50")
    # two-stay batch: gradient at each stay's highest score
    scores = np.array([[0.2, 0.7, 0.4], [0.3, 0.1, 0.6]])
    labels, mask = [1, 0], np.ones((2, 3))
    for row in (0, 1):
        k = int(np.argmax(scores[row]))
        up, down = scores.copy(), scores.copy()
        up[row, k] += 1e-6
        down[row, k] -= 1e-6
        fd = (float(risk_loss(Tensor(up), mask, labels).data) - float(risk_loss(Tensor(down), mask, labels).data)) / 2e-6
        if not ((fd < 0) if labels[row] else (fd > 0)):
            problems.append(f"sign row {row}")
    elapsed = time.perf_counter() - start
    gate("AC3", "loss semantics", not problems and elapsed < 60,
         f"{len(problems)} violations {sorted(set(problems))}, {elapsed:.1f}s")


# adjudication ------------------------------------------------------------------

def test_ac4_adjudicator_fixtures():
    from adjudication_cases import CASES, EXCLUDED
    from dynrisk.cohort import PatientRecord, adjudicate, exclusion_reason
    start = time.perf_counter()
    wrong = []
    for name, (stream, expected) in CASES.items():
        res = adjudicate(stream)
        if (res.label, res.onset_hour, res.triggering_rule) != expected:
            wrong.append(name)
        if name in EXCLUDED:
            rec = PatientRecord(name, np.zeros(0), np.zeros((1, res.onset_hour + 1)), res.label, res.onset_hour,
                                65.0, "F", 72.0, res.onset_hour)
            if exclusion_reason(rec) != "shock_within_4h":
                wrong.append(name + " (exclusion)")
    elapsed = time.perf_counter() - start
    gate("AC4", "adjudicator golden fixtures", len(CASES) >= 20 and not wrong and elapsed < 60,
         f"{len(CASES) - len(wrong)}/{len(CASES)} streams match, mismatches {wrong}, {elapsed:.1f}s")


# end-to-end learning -----------------------------------------------------------

def test_ac5_end_to_end_learning():
    from dynrisk.cohort import apply_exclusions, full_schema, generate_cohort
    from dynrisk.training import TrainRunConfig, cross_validate
    fx = json.loads((FIXTURES / "end_to_end_calibration.json").read_text())["frozen"]
    start = time.perf_counter()
    schema = full_schema()
    c = fx["cohort"]
    records, _ = apply_exclusions([r for _, r in generate_cohort(c["size"], c["positive_rate"], c["seed"], schema)])
    t = fx["training"]
    cv = cross_validate(records, schema, TrainRunConfig.preset(t["preset"], epochs=t["epochs"], seed=t["seed"]))
    elapsed = time.perf_counter() - start
    gate("AC5", "end-to-end learning", cv.mean >= fx["min_mean_test_auroc"] and elapsed <= 900,
         f"mean test AUROC {cv.mean:.4f} (folds {', '.join(f'{a:.3f}' for a in cv.test_aurocs)}), "
         f"{elapsed / 60:.1f} min")


# pretraining -------------------------------------------------------------------

def test_ac6_pretraining_direction():
    from dynrisk.cohort import full_schema, transfer_pair
    from dynrisk.training import TrainRunConfig, cross_validate, pretrain_mortality
    start = time.perf_counter()
    schema = full_schema()
    study, pre = transfer_pair(300, 1500, 11, schema)
    study, pre = [r for _, r in study], [r for _, r in pre]
    init = pretrain_mortality(pre, [r.patient_id for r in study], schema, TrainRunConfig.preset("desk", epochs=15))
    cfg = TrainRunConfig.preset("desk", epochs=30)
    warm = cross_validate(study, schema, cfg, init=init.model)
    cold = cross_validate(study, schema, cfg)
    a = [f.best_val_auroc for f in warm.folds]
    b = [f.best_val_auroc for f in cold.folds]
    wins = sum(x >= y for x, y in zip(a, b))
    elapsed = time.perf_counter() - start
    gate("AC6", "pretraining direction", wins >= 3 and elapsed <= 1800,
         f"pretrained >= scratch on {wins}/4 folds (validation AUROC {np.round(a, 3).tolist()} vs "
         f"{np.round(b, 3).tolist()}), {elapsed / 60:.1f} min")


# Shapley correctness -------------------------------------------------------------

def _table(values):
    def v(subsets):
        bits = subsets.astype(np.int64) @ (1 << np.arange(subsets.shape[1]))
        return [values[b] for b in bits]
    return v


def _random_game(rng, n):
    vals = [Fraction(int(rng.integers(-60, 61)), int(rng.integers(1, 13))) for _ in range(2 ** n)]

    # player 0 contributes nothing; players 1 and 2 are interchangeable
    def canon(b):
        b &= ~1
        if n >= 3 and bin(b & 6).count("1") == 1:
            b = (b & ~6) | 2
        return b
    return [vals[canon(b)] for b in range(2 ** n)]


def shapley_axiom_violations(games=200):
    from dynrisk.interpret import exact_shapley
    bad = 0
    for g in range(games):
        rng = np.random.default_rng([7, g])
        n = int(rng.integers(1, 11))
        v, w = _random_game(rng, n), _random_game(rng, n)
        c = Fraction(int(rng.integers(-5, 6)), int(rng.integers(1, 4)))
        phi = exact_shapley(_table(v), n, rational=True)
        psi = exact_shapley(_table(w), n, rational=True)
        mix = exact_shapley(_table([a + c * b for a, b in zip(v, w)]), n, rational=True)
        ok = sum(phi) == v[-1] - v[0]
        ok &= phi[0] == 0
        ok &= n < 3 or phi[1] == phi[2]
        ok &= mix == [a + c * b for a, b in zip(phi, psi)]
        bad += not ok
    return bad


def amortized_error():
    from dynrisk.cohort import GeneratorConfig, generate_cohort, preprocess_many, small_schema
    from dynrisk.interpret import ExplainerConfig, exact_attribution, explain, train_explainer, train_surrogate
    from dynrisk.model import RiskModelConfig
    from dynrisk.training import TrainRunConfig
    schema = small_schema([f"f{i}" for i in range(10)])
    drivers = {"f0": 1.6, "f1": -1.2, "f2": 0.9, "f3": 0.6, "f4": -0.4, "f5": 0.25}
    gc = GeneratorConfig(drivers=drivers, sepsis_drivers={}, static_signal=False)
    recs = [r for _, r in generate_cohort(600, 0.2, 3, schema, gc)]
    train, val, test = recs[:300], recs[300:450], recs[450:]
    cfg = TrainRunConfig(epochs=15, batch_size=64, model=RiskModelConfig(channels=[16] * 4))
    sur = train_surrogate(train, val, schema, cfg)
    arrays = preprocess_many(train, sur.preprocessor) + preprocess_many(val, sur.preprocessor)
    ex, _ = train_explainer(sur.model, arrays, schema, ExplainerConfig(epochs=200, subset_pairs=32))
    ratios = []
    for x in preprocess_many(test[:20], sur.preprocessor):
        exact, values = exact_attribution(sur.model, x, schema)
        approx = explain(sur.model, ex, x, schema)
        ratios.append(np.abs(approx.phi - exact.phi).mean() / (values.max() - values.min()))
    return float(np.mean(ratios)), float(np.max(ratios))


def test_ac7_shapley_correctness():
    start = time.perf_counter()
    bad = shapley_axiom_violations()
    mean_ratio, worst = amortized_error()
    elapsed = time.perf_counter() - start
    gate("AC7", "Shapley correctness", bad == 0 and mean_ratio <= 0.05 and elapsed <= 600,
         f"axioms fail on {bad}/200 games; amortized MAE/range mean {mean_ratio:.4f} "
         f"(worst game {worst:.4f}) over 20 games, {elapsed / 60:.1f} min")


# interpretation recovery ---------------------------------------------------------

RECOVERY_FEATURES = ["dbp", "map", "resp_rate", "spo2", "glucose", "potassium", "sodium", "chloride",
                     "bicarbonate", "temperature"]
PLANTED = "map"


def recovery_run(seed):
    from dynrisk.cohort import GeneratorConfig, generate_cohort, preprocess_many, small_schema
    from dynrisk.interpret import (
        ExplainerConfig, explain, full_input_auroc, rank_features, topk_retention_curve, train_explainer,
        train_surrogate,
    )
    from dynrisk.training import TrainRunConfig
    schema = small_schema(RECOVERY_FEATURES)
    gc = GeneratorConfig(drivers={PLANTED: 2.0}, sepsis_drivers={}, static_signal=False)
    recs = [r for _, r in generate_cohort(600, 0.2, seed, schema, gc)]
    train, val = recs[:450], recs[450:]
    sur = train_surrogate(train, val, schema, TrainRunConfig.preset("desk", epochs=30, seed=seed))
    arrays = preprocess_many(train, sur.preprocessor)
    ex, _ = train_explainer(sur.model, arrays[:200], schema, ExplainerConfig(epochs=60, subset_pairs=16, seed=seed))
    attrs = [explain(sur.model, ex, x, schema, r.patient_id) for x, r in zip(arrays[:150], train[:150])]
    ranking = rank_features(attrs, RECOVERY_FEATURES)
    labels = [r.label for r in train]
    (_, at_full), = topk_retention_curve(sur.model, ranking, arrays, labels, schema, [len(RECOVERY_FEATURES)])
    return ranking.features[0], at_full == full_input_auroc(sur.model, arrays, labels)


def test_ac8_planted_driver_recovered():
    start = time.perf_counter()
    runs = [recovery_run(seed) for seed in range(20)]
    hits = sum(top == PLANTED for top, _ in runs)
    exact = all(same for _, same in runs)
    elapsed = time.perf_counter() - start
    misses = {seed: top for seed, (top, _) in enumerate(runs) if top != PLANTED}
    gate("AC8", "interpretation recovery", hits >= 18 and exact and elapsed <= 1200,
         f"planted driver ranked first in {hits}/20 seeds (misses {misses}); retention at k=d equals full-input "
         f"AUROC: {exact}; {elapsed / 60:.1f} min")


# metric cross-checks -------------------------------------------------------------

def test_ac9_metric_cross_checks(tmp_path):
    from dynrisk.evaluation import (
        auroc, operating_point, read_roc_csv, roc_area, roc_curve, threshold_for_sensitivity, write_roc_csv,
    )
    start = time.perf_counter()
    problems = []
    rng = np.random.default_rng(9)
    for i in range(100):
        n = int(rng.integers(2, 80))
        s = rng.choice([0.1, 0.5, 0.9], n) if i % 3 == 0 else rng.uniform(0, 1, n)
        y = rng.integers(0, 2, n)
        y[0], y[1] = 1, 0
        pos, neg = s[y == 1], s[y == 0]
        pairs = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in itertools.product(pos, neg))
        if auroc(s, y) != pairs / (len(pos) * len(neg)):
            problems.append("concordance")
        path = tmp_path / f"roc{i}.csv"
        write_roc_csv(path, roc_curve(s, y))
        if abs(roc_area(read_roc_csv(path)) - auroc(s, y)) > 1e-12:
            problems.append("roc area")
        target = float(rng.uniform(0.05, 1.0))
        for strict in (False, True):
            t = threshold_for_sensitivity(s, y, target, strict)
            if operating_point(s, y, t, strict).recall < target - 1e-9:
                problems.append("threshold misses target")
            if operating_point(s, y, np.nextafter(t, math.inf), strict).recall >= target - 1e-9:
                problems.append("threshold not maximal")
    elapsed = time.perf_counter() - start
    gate("AC9", "metric cross-checks", not problems and elapsed < 60,
         f"{len(problems)} violations {sorted(set(problems))} over 100 sets, {elapsed:.1f}s")


# reproducibility -----------------------------------------------------------------

def run_pipeline(root: Path):
    from dynrisk.cli import main
    steps = [
        ["generate", "--size", "120", "--positive-rate", "0.2", "--seed", "5", "--schema", "reduced",
         "--out", str(root / "gen")],
        ["train", "--cohort", str(root / "gen"), "--epochs", "3", "--seed", "5", "--only-fold", "0",
         "--out", str(root / "train")],
        ["evaluate", "--cohort", str(root / "gen"), "--checkpoint", str(root / "train" / "fold0.ckpt.json"),
         "--splits", str(root / "train" / "splits.json"), "--out", str(root / "eval")],
        ["fit-explainer", "--cohort", str(root / "gen"), "--epochs", "3", "--seed", "5",
         "--explainer-epochs", "5", "--subset-pairs", "8", "--out", str(root / "fit")],
        ["explain", "--cohort", str(root / "gen"), "--surrogate", str(root / "fit" / "surrogate.ckpt.json"),
         "--explainer", str(root / "fit" / "explainer.ckpt.json"), "--splits", str(root / "train" / "splits.json"),
         "--out", str(root / "explain")],
    ]
    return [main(s) for s in steps]


def test_ac10_pipeline_is_reproducible(tmp_path):
    codes = run_pipeline(tmp_path / "a") + run_pipeline(tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    compared = [f for f in files_a if f.name != "timing.json"]
    differ = [str(f) for f in compared if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    kinds = {"manifest": any(f.name == "manifest.json" for f in compared),
             "checkpoint": any(f.name.endswith(".ckpt.json") for f in compared),
             "report": any(f.name == "metrics.json" for f in compared)}
    passed = set(codes) == {0} and files_a == files_b and not differ and all(kinds.values())
    gate("AC10", "reproducibility", passed,
         f"{len(compared) - len(differ)}/{len(compared)} files byte-identical (timing.json excluded); "
         f"differing {differ}")
