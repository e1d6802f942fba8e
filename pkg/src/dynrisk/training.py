"""Cross-validated training: splits, class balancing, pretraining and the epoch loop."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .cohort.preprocess import PreprocessorState, fit_preprocessor, preprocess_many, split_fingerprint
from .cohort.records import PatientRecord
from .cohort.schema import FeatureSchema
from .evaluation import auroc
from .model import (RiskModel, RiskModelConfig, collate, load_model, mask_inputs, risk_loss, sample_subsets,
                    softmax_weighted_risk)
from .reporting import write_csv

ROLES = ("train", "validation", "test")
PRETRAIN_FOLD = 1000  # seed slot for the pretraining run


class NumericalAbort(RuntimeError):
    def __init__(self, message: str, fold: int | None = None, epoch: int | None = None,
                 last_finite_epoch: int | None = None):
        super().__init__(message)
        self.fold, self.epoch, self.last_finite_epoch = fold, epoch, last_finite_epoch


# splits -------------------------------------------------------------------------

@dataclass
class SplitPlan:
    """Per-fold role assignment.

    With ``scheme="rotate"`` the cohort is dealt into ``fold_count``
    stratified parts and fold f uses part f for test, part f+1 for
    validation and the rest for training. ``scheme="resample"`` draws an
    independent stratified 50/25/25 split for every fold instead.
    """
    fold_count: int
    seed: int
    scheme: str
    folds: list[dict[str, list[str]]]

    def roles(self, fold: int) -> dict[str, list[str]]:
        return self.folds[fold]

    @property
    def assignment(self) -> dict[str, list[tuple[int, str]]]:
        out: dict[str, list[tuple[int, str]]] = {}
        for f, roles in enumerate(self.folds):
            for role in ROLES:
                for pid in roles[role]:
                    out.setdefault(pid, []).append((f, role))
        return out

    @property
    def fingerprint(self) -> str:
        blob = "|".join(",".join(sorted(r[role])) for r in self.folds for role in ROLES)
        return split_fingerprint([blob])

    def to_dict(self) -> dict:
        return {"fold_count": self.fold_count, "seed": self.seed, "scheme": self.scheme, "folds": self.folds}


def _stratified_parts(records: Sequence[PatientRecord], parts: int, rng: np.random.Generator) -> list[list[str]]:
    """Deal shuffled ids class by class round-robin into equal-size parts."""
    by_class: dict[str, list[str]] = {}
    for r in records:
        by_class.setdefault(r.outcome, []).append(r.patient_id)
    dealt: list[list[str]] = [[] for _ in range(parts)]
    k = 0
    for outcome in sorted(by_class):
        ids = sorted(by_class[outcome])
        for i in rng.permutation(len(ids)):
            dealt[k % parts].append(ids[i])
            k += 1
    return dealt


def make_splits(records: Sequence[PatientRecord], seed: int, fold_count: int = 4,
                scheme: str = "rotate") -> SplitPlan:
    if len(records) < fold_count * 4:
        raise ValueError(f"cohort of {len(records)} is too small for {fold_count}-fold splits")
    if len({r.patient_id for r in records}) != len(records):
        raise ValueError("duplicate patient ids in cohort")
    rng = np.random.default_rng(seed)
    folds = []
    if scheme == "rotate":
        parts = _stratified_parts(records, fold_count, rng)
        for f in range(fold_count):
            v = (f + 1) % fold_count
            train = [pid for i, p in enumerate(parts) if i not in (f, v) for pid in p]
            folds.append({"train": train, "validation": list(parts[v]), "test": list(parts[f])})
    elif scheme == "resample":
        for f in range(fold_count):
            parts = _stratified_parts(records, 4, np.random.default_rng([seed, f]))
            folds.append({"train": parts[2] + parts[3], "validation": parts[1], "test": parts[0]})
    else:
        raise ValueError(f"unknown split scheme {scheme!r}")
    return SplitPlan(fold_count, seed, scheme, folds)


def balance_minority(labels, seed) -> np.ndarray:
    """Oversample the minority class with replacement up to the majority count.

    Every original index appears at least once; the result is shuffled.
    """
    y = np.asarray(labels).astype(bool)
    pos, neg = np.flatnonzero(y), np.flatnonzero(~y)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("training split has a single class; cannot balance")
    rng = np.random.default_rng(seed)
    small, big = (pos, neg) if pos.size < neg.size else (neg, pos)
    extra = rng.choice(small, size=big.size - small.size, replace=True)
    idx = np.concatenate([big, small, extra])
    return idx[rng.permutation(idx.size)]


# configuration ----------------------------------------------------------------

@dataclass
class TrainRunConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 64
    balance_minority: bool = True
    pretrained_init: str | None = None
    seed: int = 0
    fold_count: int = 4
    split_scheme: str = "rotate"
    model: RiskModelConfig = field(default_factory=lambda: RiskModelConfig.preset("desk"))

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = RiskModelConfig.from_dict(self.model)
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")

    @classmethod
    def preset(cls, name: str, **overrides) -> "TrainRunConfig":
        """``desk`` (batch 64, width 32) or ``large`` (batch 256, width 64)."""
        batch = {"desk": 64, "large": 256}
        if name not in batch:
            raise ValueError(f"unknown preset {name!r}")
        base = dict(batch_size=batch[name], model=RiskModelConfig.preset(name))
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainRunConfig":
        d = dict(d)
        d.pop("schema_version", None)
        preset = d.pop("preset", None)
        if preset:
            return cls.preset(preset, **d)
        return cls(**d)


# epoch loop -------------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_auroc: float


@dataclass
class FoldResult:
    fold: int
    model: RiskModel
    preprocessor: PreprocessorState
    log: list[EpochLog]
    best_epoch: int
    best_val_auroc: float
    best_val_loss: float
    train_ids: list[str]
    test_auroc: float | None = None
    masking: dict | None = None


def _batches(order: np.ndarray, lengths: np.ndarray, batch_size: int, rng: np.random.Generator):
    """Minibatches of similar-length stays to limit padding.

    Shuffled indices are taken in pools of 8 batches, each pool is sorted by
    length and cut into batches, then the batch order is shuffled.
    """
    pool = batch_size * 8
    batches = []
    for s in range(0, order.size, pool):
        chunk = order[s:s + pool]
        chunk = chunk[np.argsort(lengths[chunk], kind="stable")]
        batches += [chunk[i:i + batch_size] for i in range(0, chunk.size, batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def evaluate_arrays(model: RiskModel, arrays, labels, alpha: float) -> tuple[float, float]:
    """Mean per-stay loss and AUROC of the summary (max) score."""
    scores = model.score_arrays(arrays)
    y = np.asarray(labels)
    loss = sum((-1.0 if yi else 1.0) * softmax_weighted_risk(s, alpha) for s, yi in zip(scores, y))
    summary = np.array([s.max() for s in scores])
    return loss / len(arrays), auroc(summary, y)


def train_fold(train: Sequence[PatientRecord], validation: Sequence[PatientRecord], schema: FeatureSchema,
               config: TrainRunConfig, fold: int = 0, init: RiskModel | None = None,
               keep_rate: float | None = None) -> FoldResult:
    """Train for ``config.epochs`` and keep the epoch with the best validation AUROC.

    The preprocessor is fitted on ``train`` only. Ties in validation AUROC
    keep the earlier epoch. A zero learning rate also freezes the batch
    norm running statistics, so the model comes back unchanged.

    With ``keep_rate`` set, every stay in every batch sees an independent
    random subset of the maskable features (each kept with that
    probability), and validation uses one fixed random subset per stay.
    ``FoldResult.masking`` then reports the realized keep rate.
    """
    state = fit_preprocessor(list(train), schema)
    train_ids = [r.patient_id for r in train]
    assert state.fit_fingerprint == split_fingerprint(train_ids)
    Xtr = preprocess_many(train, state)
    Xva = preprocess_many(validation, state)
    ytr = np.array([r.label for r in train])
    yva = np.array([r.label for r in validation])
    lengths = np.array([x.shape[0] for x in Xtr])

    mcfg = config.model
    model = RiskModel(mcfg, schema.channel_count, seed=int(np.random.SeedSequence([config.seed, fold, 1])
                                                                .generate_state(1)[0]))
    if init is not None:
        if init.n_inputs != model.n_inputs:
            raise T.ShapeError(f"pretrained model has {init.n_inputs} inputs, schema needs {model.n_inputs}")
        model.load_state(dict(init.state_arrays()))
    adam = T.AdamState(learning_rate=config.learning_rate)
    # a zero learning rate freezes everything, normalization statistics included
    frozen = [(st.running_mean.copy(), st.running_var.copy()) for st in model.bn] \
        if config.learning_rate == 0 else None
    n_players = len(schema.maskable)
    if keep_rate is not None:
        if n_players == 0:
            raise ValueError("schema has no maskable features")
        val_keep = sample_subsets(np.random.default_rng([config.seed, fold, 0]), len(Xva), n_players, keep_rate)
        Xva = [mask_inputs(x, schema, k) for x, k in zip(Xva, val_keep)]
    kept = drawn = 0

    log: list[EpochLog] = []
    best = None
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, fold, epoch])
        order = balance_minority(ytr, rng.integers(2**32)) if config.balance_minority \
            else rng.permutation(len(Xtr))
        total = 0.0
        for idx in _batches(order, lengths, config.batch_size, rng):
            X, M = collate([Xtr[i] for i in idx])
            if keep_rate is not None:
                keep = sample_subsets(rng, len(idx), n_players, keep_rate)
                kept += int(keep.sum())
                drawn += keep.size
                X = mask_inputs(X, schema, keep)
            scores = model.forward(X, M, training=True, rng=rng)
            loss = risk_loss(scores, M, ytr[idx], mcfg.alpha, mcfg.loss_reduction)
            if not math.isfinite(float(loss.data)):
                last = log[-1].epoch if log else None
                raise NumericalAbort(f"fold {fold}: non-finite training loss in epoch {epoch} "
                                     f"(last finite epoch: {last})", fold, epoch, last)
            T.zero_grad(model.params.values())
            loss.backward()
            T.adam_step(model.params, None, adam)
            if frozen:
                for st, (mean, var) in zip(model.bn, frozen):
                    st.running_mean, st.running_var = mean.copy(), var.copy()
            total += float(loss.data) * (len(idx) if mcfg.loss_reduction == "mean" else 1.0)
        val_loss, val_auc = evaluate_arrays(model, Xva, yva, mcfg.alpha)
        if not math.isfinite(val_loss):
            last = log[-1].epoch if log else None
            raise NumericalAbort(f"fold {fold}: non-finite validation loss in epoch {epoch} "
                                 f"(last finite epoch: {last})", fold, epoch, last)
        log.append(EpochLog(epoch, total / order.size, val_loss, val_auc))
        if best is None or val_auc > best[1]:
            best = (epoch, val_auc, val_loss, model.copy())
    epoch, val_auc, val_loss, best_model = best
    res = FoldResult(fold, best_model, state, log, epoch, val_auc, val_loss, train_ids)
    if keep_rate is not None:
        res.masking = {"keep_probability": keep_rate, "subsets_drawn": drawn // n_players,
                       "features_kept": kept, "feature_draws": drawn, "realized_keep_rate": kept / drawn}
    return res


def score_records(model: RiskModel, state: PreprocessorState, records: Sequence[PatientRecord]):
    return model.score_arrays(preprocess_many(records, state))


def test_auroc(result: FoldResult, records: Sequence[PatientRecord]) -> float:
    scores = score_records(result.model, result.preprocessor, records)
    return auroc([s.max() for s in scores], [r.label for r in records])


@dataclass
class CrossValidationResult:
    plan: SplitPlan
    folds: list[FoldResult]

    @property
    def test_aurocs(self) -> list[float]:
        return [f.test_auroc for f in self.folds]

    @property
    def mean(self) -> float:
        return float(np.mean(self.test_aurocs))

    @property
    def sd(self) -> float:
        return float(np.std(self.test_aurocs, ddof=1)) if len(self.folds) > 1 else 0.0

    def summary(self) -> dict:
        return {
            "test_auroc": self.test_aurocs, "test_auroc_mean": self.mean, "test_auroc_sd": self.sd,
            "best_epochs": [f.best_epoch for f in self.folds],
            "best_val_auroc": [f.best_val_auroc for f in self.folds],
        }


def cross_validate(records: Sequence[PatientRecord], schema: FeatureSchema, config: TrainRunConfig,
                   init: RiskModel | None = None, folds: Sequence[int] | None = None,
                   plan: SplitPlan | None = None) -> CrossValidationResult:
    plan = plan or make_splits(records, config.seed, config.fold_count, config.split_scheme)
    by_id = {r.patient_id: r for r in records}
    results = []
    for f in (range(plan.fold_count) if folds is None else folds):
        roles = plan.roles(f)
        part = {role: [by_id[p] for p in roles[role]] for role in ROLES}
        res = train_fold(part["train"], part["validation"], schema, config, f, init)
        res.test_auroc = test_auroc(res, part["test"])
        results.append(res)
    return CrossValidationResult(plan, results)


# pretraining ------------------------------------------------------------------

def check_disjoint(pretrain_ids, study_ids):
    overlap = sorted(set(pretrain_ids) & set(study_ids))
    if overlap:
        shown = ", ".join(overlap[:10]) + (" ..." if len(overlap) > 10 else "")
        raise ValueError(f"pretraining cohort overlaps the study cohort in {len(overlap)} stays: {shown}")


def pretrain_mortality(pretrain: Sequence[PatientRecord], study_ids, schema: FeatureSchema,
                       config: TrainRunConfig) -> FoldResult:
    """Train the same network with in-hospital death as the positive event.

    Uses the same risk loss; 75% of the pretraining cohort trains and the
    remaining stratified quarter selects the epoch.
    """
    check_disjoint([r.patient_id for r in pretrain], study_ids)
    parts = _stratified_parts(pretrain, 4, np.random.default_rng([config.seed, 99]))
    by_id = {r.patient_id: r for r in pretrain}
    train = [by_id[p] for part in parts[1:] for p in part]
    val = [by_id[p] for p in parts[0]]
    return train_fold(train, val, schema, config, fold=PRETRAIN_FOLD)


# artifacts ----------------------------------------------------------------------

def write_training_log(path, log: Sequence[EpochLog]):
    write_csv(path, ["epoch", "train_loss", "val_loss", "val_auroc"],
              [(e.epoch, e.train_loss, e.val_loss, e.val_auroc) for e in log])


def save_fold(path, result: FoldResult, schema: FeatureSchema, extra: dict | None = None):
    from .model import save_model
    meta = {"fold": result.fold, "best_epoch": result.best_epoch, "val_auroc": result.best_val_auroc,
            "val_loss": result.best_val_loss, "test_auroc": result.test_auroc}
    meta.update(extra or {})
    save_model(path, result.model, result.preprocessor, schema, meta)


def load_init(path) -> RiskModel:
    model, _, _, _ = load_model(path)
    return model
