import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from dynrisk.cohort import generate_cohort, small_schema
from dynrisk.cohort.preprocess import fit_preprocessor, preprocess
from dynrisk.model import (
    MASKED, RiskModel, RiskModelConfig, RiskTrajectory, collate, forward_trajectory, load_model,
    mask_inputs, risk_loss, sample_subsets, save_model, softmax_weighted_risk, subset_to_mask,
    surrogate_loss, trajectory_loss, value_function,
)
from dynrisk.tensor import ShapeError, Tensor
from dynrisk.training import TrainRunConfig, train_fold

SMALL = RiskModelConfig(channels=[6, 6, 6, 6])


def tiny_model(n_inputs, seed=0, **kw):
    return RiskModel(RiskModelConfig(**{"channels": [6, 6, 6, 6], **kw}), n_inputs, seed=seed)


def warm_bn(model, rng, n_inputs):
    """Give normalization layers non-trivial running statistics."""
    for st_ in model.bn:
        st_.running_mean = rng.normal(size=st_.running_mean.shape) * 0.1
        st_.running_var = rng.uniform(0.5, 2.0, size=st_.running_var.shape)


# config ------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        RiskModelConfig(num_layers=3)
    with pytest.raises(ValueError):
        RiskModelConfig(alpha=0.0)
    with pytest.raises(ValueError):
        RiskModelConfig(loss_reduction="median")
    assert RiskModelConfig().receptive_field == 16
    cfg = RiskModelConfig.preset("desk")
    assert RiskModelConfig.from_dict(cfg.to_dict()) == cfg


# forward -----------------------------------------------------------------------

def test_zero_readout_gives_one_half(rng):
    model = tiny_model(5)
    model.params["readout.weight"].data[:] = 0.0
    scores = model.forward(rng.normal(size=(3, 7, 5))).data
    assert np.all(scores == 0.5)


def test_forward_rejects_wrong_width(rng):
    with pytest.raises(ShapeError):
        tiny_model(5).forward(rng.normal(size=(1, 4, 6)))


def test_scores_lie_strictly_inside_unit_interval(rng):
    model = tiny_model(4)
    s = model.forward(rng.normal(size=(2, 9, 4))).data
    assert np.all((s > 0) & (s < 1))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), length=st.integers(2, 30), cut=st.integers(0, 29))
def test_prefix_scores_unchanged_by_future(seed, length, cut):
    cut = cut % length
    r = np.random.default_rng(seed)
    model = tiny_model(3, seed=seed)
    warm_bn(model, r, 3)
    x = r.normal(size=(length, 3))
    full = model.score_arrays([x])[0]
    prefix = model.score_arrays([x[:cut + 1]])[0]
    assert np.array_equal(full[:cut + 1], prefix)


def test_scores_do_not_depend_on_batch_companions(rng):
    model = tiny_model(3)
    warm_bn(model, rng, 3)
    xs = [rng.normal(size=(n, 3)) for n in (5, 17, 2, 40)]
    together = model.score_arrays(xs)
    alone = [model.score_arrays([x])[0] for x in xs]
    assert all(np.array_equal(a, b) for a, b in zip(together, alone))


def test_truncated_record_rescored_is_prefix():
    schema = small_schema(["heart_rate", "map", "lactate"], ["bmi"])
    records = [r for _, r in generate_cohort(20, 0.2, 3, schema)]
    state = fit_preprocessor(records, schema)
    model = RiskModel(SMALL, schema.channel_count, seed=1)
    rec = max(records, key=lambda r: r.observed_time)
    full = forward_trajectory(rec, model, state)
    k = rec.observed_time // 2
    part = forward_trajectory(rec.truncated(k), model, state)
    assert len(full.scores) == rec.observed_time + 1
    assert np.array_equal(full.scores[:k + 1], part.scores)


# soft max-risk -----------------------------------------------------------------

def test_softmax_weighted_risk_examples():
    assert softmax_weighted_risk([0.37]) == 0.37
    assert softmax_weighted_risk([0.2, 0.2, 0.2]) == pytest.approx(0.2, abs=1e-15)
    e2 = math.exp(2)
    assert softmax_weighted_risk([0.0, 1.0], alpha=2.0) == pytest.approx(e2 / (1 + e2), abs=1e-15)
    assert softmax_weighted_risk([0.0, 1.0], alpha=2.0) == pytest.approx(0.8808, abs=1e-4)
    with pytest.raises(ValueError):
        softmax_weighted_risk([])


def softmax_weighted_oracle(r, alpha):
    """Direct formula in exact-ish arithmetic via math.fsum."""
    m = max(r)
    w = [math.exp(alpha * (v - m)) for v in r]
    return math.fsum(wi * v for wi, v in zip(w, r)) / math.fsum(w)


@settings(max_examples=200, deadline=None)
@given(r=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40), alpha=st.floats(0.01, 100.0))
def test_softmax_weighted_risk_is_bounded(r, alpha):
    v = softmax_weighted_risk(r, alpha)
    assert min(r) - 1e-12 <= v <= max(r) + 1e-12
    assert v == pytest.approx(softmax_weighted_oracle(r, alpha), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(2, 50))
def test_large_alpha_approaches_max(seed, n):
    r = np.random.default_rng(seed).uniform(0, 0.5, size=n)
    r[np.random.default_rng(seed + 1).integers(n)] = 1.0  # unique max with gap >= 0.5
    assert abs(softmax_weighted_risk(r, 50.0) - 1.0) <= 1e-6


# loss --------------------------------------------------------------------------

def test_singleton_loss_example():
    batch = [RiskTrajectory("p", [0.9], 0, 1), RiskTrajectory("n", [0.1], 0, 0)]
    assert trajectory_loss(batch) == pytest.approx(-0.8, abs=1e-15)


def test_negatives_only_loss_is_their_sum():
    batch = [RiskTrajectory("a", [0.1, 0.3], 1, 0), RiskTrajectory("b", [0.2], 0, 0)]
    expected = softmax_weighted_risk([0.1, 0.3]) + 0.2
    assert trajectory_loss(batch) == pytest.approx(expected, abs=1e-15)
    assert trajectory_loss(batch) >= 0


def test_trajectory_length_must_match_observed_time():
    with pytest.raises(ValueError):
        RiskTrajectory("x", [0.1, 0.2], 2, 0)


def test_batched_loss_matches_per_trajectory_loss(rng):
    scores = rng.uniform(0.01, 0.99, size=(3, 6))
    mask = np.ones((3, 6))
    mask[1, 4:] = 0
    mask[2, 1:] = 0
    labels = [1, 0, 1]
    trs = [RiskTrajectory(str(i), scores[i, :int(mask[i].sum())], int(mask[i].sum()) - 1, labels[i])
           for i in range(3)]
    got = float(risk_loss(Tensor(scores), mask, labels).data)
    assert got == pytest.approx(trajectory_loss(trs), abs=1e-14)
    mean = float(risk_loss(Tensor(scores), mask, labels, reduction="mean").data)
    assert mean == pytest.approx(got / 3, abs=1e-15)


def test_gradient_signs_on_highest_scores():
    pos = np.array([0.2, 0.7, 0.4])
    neg = np.array([0.3, 0.1, 0.6])
    scores = np.stack([pos, neg])
    labels = [1, 0]
    mask = np.ones_like(scores)

    def loss_at(s):
        return float(risk_loss(Tensor(s), mask, labels).data)

    h = 1e-6
    for row in (0, 1):
        k = int(np.argmax(scores[row]))
        up, down = scores.copy(), scores.copy()
        up[row, k] += h
        down[row, k] -= h
        fd = (loss_at(up) - loss_at(down)) / (2 * h)
        t = Tensor(scores.copy(), requires_grad=True)
        risk_loss(t, mask, labels).backward()
        assert fd == pytest.approx(t.grad[row, k], rel=1e-6)
        assert (fd < 0) if labels[row] else (fd > 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), b=st.integers(1, 6), t=st.integers(1, 8))
def test_label_swap_flips_contribution(seed, b, t):
    r = np.random.default_rng(seed)
    scores = Tensor(r.uniform(0.01, 0.99, size=(b, t)))
    mask = np.ones((b, t))
    labels = r.integers(0, 2, size=b)
    j = int(r.integers(b))
    flipped = labels.copy()
    flipped[j] = 1 - flipped[j]
    base = float(risk_loss(scores, mask, labels).data)
    after = float(risk_loss(scores, mask, flipped).data)
    contribution = softmax_weighted_risk(scores.data[j]) * (-1 if labels[j] else 1)
    assert after - base == pytest.approx(-2 * contribution, abs=1e-12)


# masking -----------------------------------------------------------------------

def test_mask_inputs_semantics(tiny_schema, rng):
    # channels: a, b, c, a__missing, b__missing, c__missing, s
    x = rng.normal(size=(4, tiny_schema.channel_count))
    x[:, 3:6] = rng.integers(0, 2, size=(4, 3))
    keep = np.array([True, False, True, False])
    out = mask_inputs(x, tiny_schema, keep)
    assert np.all(out[:, 1] == 0.0) and np.all(out[:, 4] == MASKED)
    assert np.all(out[:, 6] == 0.0)
    for c in (0, 2, 3, 5):
        assert np.array_equal(out[:, c], x[:, c])


def test_mask_inputs_never_touches_unmaskable_features(rng):
    from dynrisk.cohort import full_schema
    schema = full_schema()
    x = rng.normal(size=(2, schema.channel_count))
    out = mask_inputs(x, schema, np.zeros(len(schema.maskable), bool))
    touched = np.flatnonzero(np.any(out != x, axis=0))
    maskable = {f.name for f in schema.maskable}
    names = schema.channel_names()
    assert all(names[c].removesuffix("__missing") in maskable for c in touched)
    assert len(schema.maskable) == 70


def test_batch_keep_masks_each_stay_separately(tiny_schema, rng):
    x = rng.normal(size=(2, 3, tiny_schema.channel_count))
    keep = np.array([[True] * 4, [False] * 4])
    out = mask_inputs(x, tiny_schema, keep)
    assert out.shape == x.shape
    assert np.array_equal(out[0], x[0])
    assert np.all(out[1, :, :3] == 0)


def test_subset_to_mask_rejects_out_of_range():
    assert subset_to_mask([2, 0], 4).tolist() == [True, False, True, False]
    with pytest.raises(ValueError):
        subset_to_mask([4], 4)
    with pytest.raises(ValueError):
        subset_to_mask([-1], 4)


def test_keep_rate_is_one_half():
    keep = sample_subsets(np.random.default_rng(5), 10_000, 12, 0.5)
    rates = keep.mean(axis=0)
    assert np.all(np.abs(rates - 0.5) <= 0.02)


def test_full_subset_surrogate_equals_plain_loss(tiny_schema, rng):
    model = tiny_model(tiny_schema.channel_count)
    warm_bn(model, rng, tiny_schema.channel_count)
    X, M = collate([rng.normal(size=(n, tiny_schema.channel_count)) for n in (4, 6)])
    full = np.ones((2, 4), bool)
    a = surrogate_loss(model, X, M, [1, 0], tiny_schema, full, training=False)
    b = risk_loss(model.forward(X, M), M, [1, 0])
    assert float(a.data) == float(b.data)
    empty = surrogate_loss(model, X, M, [1, 0], tiny_schema, ~full, training=False)
    assert np.isfinite(float(empty.data))


def test_value_function_examples(tiny_schema, rng):
    model = tiny_model(tiny_schema.channel_count)
    x = rng.normal(size=(5, tiny_schema.channel_count))
    model.params["readout.weight"].data[:] = 0.0
    assert value_function(model, x, tiny_schema, np.ones(4, bool))[0] == 0.5
    model = tiny_model(tiny_schema.channel_count, seed=3)
    a = value_function(model, x, tiny_schema, subset_to_mask([0, 2], 4))
    b = value_function(model, x, tiny_schema, subset_to_mask([2, 0], 4))
    assert a[0] == b[0]


# checkpoint --------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    schema = small_schema(["heart_rate", "map"], ["bmi"])
    records = [r for _, r in generate_cohort(12, 0.25, 2, schema)]
    state = fit_preprocessor(records, schema)
    model = RiskModel(SMALL, schema.channel_count, seed=4)
    warm_bn(model, rng, schema.channel_count)
    save_model(tmp_path / "m.json", model, state, schema, {"fold": 0})
    back, bstate, bschema, meta = load_model(tmp_path / "m.json")
    assert meta["fold"] == 0 and bschema == schema
    x = preprocess(records[0], state)
    assert np.array_equal(preprocess(records[0], bstate), x)
    assert np.array_equal(model.score_arrays([x])[0], back.score_arrays([x])[0])
    save_model(tmp_path / "m2.json", back, bstate, bschema, {"fold": 0})
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


# learning signal ---------------------------------------------------------------

def test_trained_scores_track_generator_hazard():
    # measured on stays whose latent severity ramps to onset, all hours pooled
    schema = small_schema(["heart_rate", "map", "lactate", "resp_rate", "spo2", "urine_output"])
    records = [r for _, r in generate_cohort(500, 0.2, 21, schema)]
    train, val, test = records[:300], records[300:400], records[400:]
    result = train_fold(train, val, schema, TrainRunConfig.preset("desk", epochs=15, seed=2))
    scores, hazard = [], []
    for rec in test:
        if rec.label:
            scores.append(forward_trajectory(rec, result.model, result.preprocessor).scores)
            hazard.append(rec.truth["hazard"])
    rho = spearmanr(np.concatenate(scores), np.concatenate(hazard)).statistic
    assert rho > 0.5
