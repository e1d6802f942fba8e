"""Shapley-value attribution of risk trajectories.

A surrogate copy of the risk model is trained on inputs with random
feature subsets hidden, so it can score a stay under any subset. The value
of a subset is the surrogate's soft max-risk on that stay (no label
involved). Attributions are computed exactly by enumeration for small
feature sets, or predicted in one pass by an amortized explainer network
trained with the Shapley-kernel least-squares objective.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .cohort.preprocess import PreprocessorState, preprocess_many
from .cohort.records import PatientRecord
from .cohort.schema import FeatureSchema
from .evaluation import auroc
from .model import RiskModel, mask_inputs, value_function
from .reporting import write_csv, write_json
from .tensor import Tensor
from .training import FoldResult, TrainRunConfig, train_fold

MAX_EXACT_PLAYERS = 12


# exact Shapley ------------------------------------------------------------------

def all_subsets(n: int) -> np.ndarray:
    """Boolean ``[2**n, n]`` matrix; row ``b`` holds the bits of ``b``."""
    b = np.arange(2 ** n)
    return ((b[:, None] >> np.arange(n)) & 1).astype(bool)


def exact_shapley(value_fn: Callable[[np.ndarray], Sequence], n_players: int, rational: bool = False):
    """Shapley values by enumerating every subset.

    ``value_fn`` maps a boolean ``[m, n]`` subset matrix to ``m`` values.
    With ``rational=True`` values are converted to ``Fraction`` and the
    result is exact.
    """
    if n_players > MAX_EXACT_PLAYERS:
        raise ValueError(f"{n_players} players is too many to enumerate (max {MAX_EXACT_PLAYERS}); "
                         "use the amortized explainer")
    n = n_players
    subsets = all_subsets(n)
    v = list(value_fn(subsets))
    if len(v) != 2 ** n:
        raise ValueError("value_fn returned the wrong number of values")
    sizes = subsets.sum(axis=1)
    if rational:
        v = [Fraction(x) for x in v]
        w = [Fraction(math.factorial(k) * math.factorial(n - k - 1), math.factorial(n)) for k in range(n)]
        phi = []
        for j in range(n):
            bit = 1 << j
            phi.append(sum((w[sizes[b]] * (v[b | bit] - v[b]) for b in range(2 ** n) if not b & bit),
                           Fraction(0)))
        return phi
    v = np.asarray(v, dtype=np.float64)
    w = np.array([math.factorial(k) * math.factorial(n - k - 1) / math.factorial(n) for k in range(n)])
    idx = np.arange(2 ** n)
    phi = np.empty(n)
    for j in range(n):
        without = idx[(idx >> j) & 1 == 0]
        phi[j] = np.sum(w[sizes[without]] * (v[without | (1 << j)] - v[without]))
    return phi


# subset sampling ------------------------------------------------------------------

def shapley_kernel_sizes(n: int) -> np.ndarray:
    """Probability of each subset size 1..n-1 under the Shapley kernel."""
    k = np.arange(1, n)
    p = (n - 1) / (k * (n - k))
    return p / p.sum()


def sample_kernel_subsets(rng: np.random.Generator, n_pairs: int, n: int) -> np.ndarray:
    """``2 * n_pairs`` subsets: kernel-distributed draws followed by their complements."""
    if n < 2:
        raise ValueError("the Shapley kernel needs at least two players")
    sizes = rng.choice(np.arange(1, n), size=n_pairs, p=shapley_kernel_sizes(n))
    out = np.zeros((n_pairs, n), dtype=bool)
    for i, k in enumerate(sizes):
        out[i, rng.permutation(n)[:k]] = True
    return np.concatenate([out, ~out])


# surrogate ------------------------------------------------------------------------

SURROGATE_KEEP_RATE = 0.5


def train_surrogate(train: Sequence[PatientRecord], validation: Sequence[PatientRecord], schema: FeatureSchema,
                    config: TrainRunConfig, keep_rate: float = SURROGATE_KEEP_RATE) -> FoldResult:
    """Risk model trained from scratch on randomly masked inputs.

    ``result.masking`` is the audit of how often features were kept.
    """
    if not schema.maskable:
        raise ValueError("schema has no maskable features to explain")
    return train_fold(train, validation, schema, config, fold=0, keep_rate=keep_rate)


class PatientGame:
    """The value function of one stay, ``v(s)`` for boolean subsets ``s``."""

    def __init__(self, surrogate: RiskModel, x: np.ndarray, schema: FeatureSchema, alpha: float | None = None):
        self.surrogate, self.x, self.schema = surrogate, x, schema
        self.alpha = surrogate.config.alpha if alpha is None else alpha
        self.n = len(schema.maskable)

    def __call__(self, keep) -> np.ndarray:
        return value_function(self.surrogate, self.x, self.schema, keep, self.alpha)

    def endpoints(self) -> tuple[float, float]:
        v = self(np.array([np.zeros(self.n, bool), np.ones(self.n, bool)]))
        return float(v[0]), float(v[1])


# amortized explainer -----------------------------------------------------------------

@dataclass
class ExplainerConfig:
    hidden: int = 128
    epochs: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 32
    subset_pairs: int = 32
    seed: int = 0


def probe_subsets(d: int) -> np.ndarray:
    """Empty set, full set, each single feature, and each feature left out."""
    eye = np.eye(d, dtype=bool)
    return np.concatenate([np.zeros((1, d), bool), np.ones((1, d), bool), eye, ~eye])


def explainer_inputs(x: np.ndarray, schema: FeatureSchema, probes: np.ndarray) -> np.ndarray:
    """Fixed-length description of one preprocessed stay.

    Per time-varying player: mean, last, max and min of its value channel
    and the fraction of hours it was missing. Per static player: its value.
    Then stay length in days, the two game endpoints, and for each player
    its gain when added to the empty set and its loss when removed from the
    full set (values of ``probe_subsets``).
    """
    d = len(schema.maskable)
    v0, v1 = probes[0], probes[1]
    parts = []
    for val, ind in schema.player_channels():
        col = x[:, val]
        if ind is None:
            parts.append([col[0]])
        else:
            parts.append([col.mean(), col[-1], col.max(), col.min(), x[:, ind].mean()])
    parts.append([x.shape[0] / 24.0, v0, v1, v1 - v0])
    parts.append(probes[2:2 + d] - v0)
    parts.append(v1 - probes[2 + d:2 + 2 * d])
    return np.array([v for p in parts for v in p], dtype=np.float64)


def first_order_estimate(probes: np.ndarray, d: int) -> np.ndarray:
    """Average of each player's gain joining the empty set and loss leaving the full set.

    Exact for additive games; the explainer learns a correction on top.
    """
    return 0.5 * ((probes[2:2 + d] - probes[0]) + (probes[1] - probes[2 + d:2 + 2 * d]))


class Explainer:
    """Two-hidden-layer MLP from stay summaries to one attribution per player.

    The network output is added to the first-order estimate, then shifted
    additively so the attributions sum to ``v(full) - v(empty)``.
    """

    def __init__(self, n_inputs: int, n_players: int, config: ExplainerConfig):
        self.config = config
        self.n_inputs, self.n_players = n_inputs, n_players
        rng = np.random.default_rng([config.seed, 7])
        h = config.hidden
        self.params = {
            "l0.weight": Tensor(rng.normal(0, math.sqrt(2 / n_inputs), (h, n_inputs)), True),
            "l0.bias": Tensor(np.zeros(h), True),
            "l1.weight": Tensor(rng.normal(0, math.sqrt(2 / h), (h, h)), True),
            "l1.bias": Tensor(np.zeros(h), True),
            "out.weight": Tensor(rng.normal(0, 0.1 * math.sqrt(1 / h), (n_players, h)), True),
            "out.bias": Tensor(np.zeros(n_players), True),
        }
        self.in_mean = np.zeros(n_inputs)
        self.in_std = np.ones(n_inputs)
        self.trained = False

    def forward(self, feats: np.ndarray, base: np.ndarray, gap: np.ndarray, stable: bool = True) -> Tensor:
        p = self.params
        z = Tensor((feats - self.in_mean) / self.in_std)
        z = T.relu(T.linear(z, p["l0.weight"], p["l0.bias"], stable=stable))
        z = T.relu(T.linear(z, p["l1.weight"], p["l1.bias"], stable=stable))
        phi = T.add(T.linear(z, p["out.weight"], p["out.bias"], stable=stable), Tensor(base))
        # additive efficiency correction
        short = T.add(Tensor(gap), T.neg(T.tsum(phi, axis=1)))
        return T.add(phi, T.reshape(T.mul(short, 1.0 / self.n_players), (-1, 1)))

    def state_arrays(self):
        return [(k, p.data) for k, p in self.params.items()] + [("in_mean", self.in_mean), ("in_std", self.in_std)]

    def save(self, path, meta: dict | None = None):
        doc = {"explainer_config": asdict(self.config), "n_inputs": self.n_inputs, "n_players": self.n_players}
        doc.update(meta or {})
        T.save_arrays(path, self.state_arrays(), doc)

    @classmethod
    def load(cls, path) -> tuple["Explainer", dict]:
        arrays, meta = T.load_arrays(path)
        if "explainer_config" not in meta:
            raise ValueError(f"{path} is not an explainer checkpoint")
        ex = cls(meta["n_inputs"], meta["n_players"], ExplainerConfig(**meta["explainer_config"]))
        a = dict(arrays)
        for k, p in ex.params.items():
            p.data = a[k]
        ex.in_mean, ex.in_std = a["in_mean"], a["in_std"]
        ex.trained = True
        return ex, meta


@dataclass
class GameSamples:
    """Precomputed value-function evaluations for explainer training."""
    feats: np.ndarray      # [N, n_inputs]
    base: np.ndarray       # [N, d]
    v0: np.ndarray         # [N]
    v1: np.ndarray         # [N]
    subsets: np.ndarray    # [N, m, d]
    values: np.ndarray     # [N, m]


def sample_games(surrogate: RiskModel, arrays: Sequence[np.ndarray], schema: FeatureSchema,
                 subset_pairs: int, seed: int) -> GameSamples:
    d = len(schema.maskable)
    rng = np.random.default_rng([seed, 3])
    feats, base, v0s, v1s, subs, vals = [], [], [], [], [], []
    for x in arrays:
        game = PatientGame(surrogate, x, schema)
        s = sample_kernel_subsets(rng, subset_pairs, d)
        probes = probe_subsets(d)
        v = game(np.concatenate([probes, s]))
        feats.append(explainer_inputs(x, schema, v[:len(probes)]))
        base.append(first_order_estimate(v, d))
        v0s.append(v[0])
        v1s.append(v[1])
        subs.append(s)
        vals.append(v[len(probes):])
    return GameSamples(np.array(feats), np.array(base), np.array(v0s), np.array(v1s), np.array(subs), np.array(vals))


def train_explainer(surrogate: RiskModel, arrays: Sequence[np.ndarray], schema: FeatureSchema,
                    config: ExplainerConfig | None = None, samples: GameSamples | None = None) -> tuple[Explainer, list]:
    """Fit the explainer to minimize ``E_s (v(s) - v(empty) - s . phi)^2``.

    Subsets follow the Shapley kernel and are drawn in complementary
    pairs. Returns the explainer and the per-epoch training loss.
    """
    cfg = config or ExplainerConfig()
    data = samples or sample_games(surrogate, arrays, schema, cfg.subset_pairs, cfg.seed)
    n, d = data.feats.shape[0], data.subsets.shape[2]
    ex = Explainer(data.feats.shape[1], d, cfg)
    ex.in_mean = data.feats.mean(axis=0)
    sd = data.feats.std(axis=0)
    ex.in_std = np.where(sd > 0, sd, 1.0)
    adam = T.AdamState(learning_rate=cfg.learning_rate)
    S = data.subsets.astype(np.float64)
    target = data.values - data.v0[:, None]
    gap = data.v1 - data.v0
    losses = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, 11, epoch])
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            phi = ex.forward(data.feats[idx], data.base[idx], gap[idx], stable=False)
            pred = T.tsum(T.mul(Tensor(S[idx]), T.reshape(phi, (len(idx), 1, d))), axis=2)
            err = T.add(Tensor(target[idx]), T.neg(pred))
            loss = T.mul(T.tsum(T.mul(err, err)), 1.0 / err.data.size)
            T.zero_grad(ex.params.values())
            loss.backward()
            T.adam_step(ex.params, None, adam)
            total += float(loss.data) * len(idx)
        losses.append(total / n)
    ex.trained = True
    return ex, losses


@dataclass
class ShapleyAttribution:
    patient_id: str
    phi: np.ndarray
    base_value: float
    full_value: float

    @property
    def efficiency_gap(self) -> float:
        return float(self.phi.sum() - (self.full_value - self.base_value))


def explain(surrogate: RiskModel, explainer: Explainer, x: np.ndarray, schema: FeatureSchema,
            patient_id: str = "") -> ShapleyAttribution:
    """Amortized attributions for one preprocessed stay."""
    if not explainer.trained:
        raise ValueError("explainer has not been trained")
    if explainer.n_players != len(schema.maskable):
        raise ValueError(f"explainer predicts {explainer.n_players} players, schema has {len(schema.maskable)}")
    probes = PatientGame(surrogate, x, schema)(probe_subsets(explainer.n_players))
    v0, v1 = float(probes[0]), float(probes[1])
    feats = explainer_inputs(x, schema, probes)[None]
    base = first_order_estimate(probes, explainer.n_players)[None]
    phi = explainer.forward(feats, base, np.array([v1 - v0])).data[0]
    return ShapleyAttribution(patient_id, phi, v0, v1)


def exact_attribution(surrogate: RiskModel, x: np.ndarray, schema: FeatureSchema,
                      patient_id: str = "") -> tuple[ShapleyAttribution, np.ndarray]:
    """Enumerated attributions plus the full table of subset values."""
    game = PatientGame(surrogate, x, schema)
    values = game(all_subsets(game.n))
    phi = exact_shapley(lambda _: values, game.n)
    return ShapleyAttribution(patient_id, phi, float(values[0]), float(values[-1])), values


# ranking and retention ------------------------------------------------------------

@dataclass
class FeatureRanking:
    features: list[str]
    importance: list[float]
    index: list[int] = field(default_factory=list)

    def top(self, k: int) -> list[str]:
        return self.features[:k]

    def to_dict(self) -> dict:
        return {"features": self.features, "importance": self.importance, "index": self.index}


def rank_features(attributions: Sequence[ShapleyAttribution], names: Sequence[str]) -> FeatureRanking:
    """Order features by mean |phi| across stays, largest first (ties by position)."""
    if not attributions:
        raise ValueError("no attributions to rank")
    imp = np.mean(np.abs(np.stack([a.phi for a in attributions])), axis=0)
    order = sorted(range(len(imp)), key=lambda j: (-imp[j], j))
    return FeatureRanking([names[j] for j in order], [float(imp[j]) for j in order], order)


def mean_feature_values(record: PatientRecord, schema: FeatureSchema) -> np.ndarray:
    """Raw value of each maskable feature averaged over observed hours."""
    tv = {n: i for i, n in enumerate(schema.time_varying_names)}
    st = {n: i for i, n in enumerate(schema.static_names)}
    out = []
    for f in schema.maskable:
        if f.name in tv:
            row = record.series[tv[f.name]]
            out.append(float(np.nanmean(row)) if np.any(~np.isnan(row)) else math.nan)
        else:
            out.append(float(record.static[st[f.name]]))
    return np.array(out)


def beeswarm_rows(attributions, records, schema: FeatureSchema):
    """(patient_id, feature, phi, mean_feature_value) for every stay and feature."""
    by_id = {r.patient_id: r for r in records}
    names = [f.name for f in schema.maskable]
    rows = []
    for a in attributions:
        vals = mean_feature_values(by_id[a.patient_id], schema)
        rows += [(a.patient_id, names[j], float(a.phi[j]), vals[j]) for j in range(len(names))]
    return rows


def topk_retention_curve(surrogate: RiskModel, ranking: FeatureRanking, arrays: Sequence[np.ndarray], labels,
                         schema: FeatureSchema, ks: Sequence[int]) -> list[tuple[int, float]]:
    """AUROC of the surrogate when only the top-k ranked features are visible."""
    d = len(schema.maskable)
    out = []
    for k in ks:
        if k > d:
            warnings.warn(f"k={k} exceeds the {d} maskable features; clipped to {d}")
            k = d
        keep = np.zeros(d, dtype=bool)
        keep[ranking.index[:k]] = True
        scores = surrogate.score_arrays([mask_inputs(x, schema, keep) for x in arrays])
        out.append((int(k), auroc([s.max() for s in scores], labels)))
    return out


def full_input_auroc(surrogate: RiskModel, arrays, labels) -> float:
    scores = surrogate.score_arrays(list(arrays))
    return auroc([s.max() for s in scores], labels)


# export -----------------------------------------------------------------------------

def write_attributions_csv(path, rows):
    write_csv(path, ["patient_id", "feature", "phi", "mean_feature_value"], rows)


def write_ranking_json(path, ranking: FeatureRanking, extra: dict | None = None):
    doc = ranking.to_dict()
    doc.update(extra or {})
    write_json(path, doc)


def write_retention_csv(path, curve):
    write_csv(path, ["k", "auroc"], curve)


def preprocess_for(records, state: PreprocessorState):
    return preprocess_many(records, state)
