"""Dilated causal CNN risk model and the soft max-risk objective.

The network is a stack of blocks ``conv -> ReLU -> batch norm -> dropout``
followed by a per-hour dense readout and a sigmoid, giving one score per
hour of the stay. Static features enter as channels held constant over
time, so a single convolutional pathway sees everything.

Training pushes up the softmax-weighted (near-maximum) score of stays that
end in the event and pushes it down for all other stays.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .cohort.preprocess import PreprocessorState, preprocess
from .cohort.records import PatientRecord
from .cohort.schema import FeatureSchema
from .tensor import BatchNormState, Tensor

MASKED = -1.0


@dataclass
class RiskModelConfig:
    num_layers: int = 4
    channels: list = field(default_factory=lambda: [64, 64, 64, 64])
    kernel_size: int = 2
    dilations: list = field(default_factory=lambda: [1, 2, 4, 8])
    dropout_rate: float = 0.2
    alpha: float = 2.0
    loss_reduction: str = "sum"  # "sum" over the batch, or "mean"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.channels = list(self.channels)
        self.dilations = list(self.dilations)
        if len(self.channels) != self.num_layers or len(self.dilations) != self.num_layers:
            raise ValueError("channels and dilations must each have num_layers entries")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.kernel_size < 1 or any(d < 1 for d in self.dilations):
            raise ValueError("kernel_size and dilations must be >= 1")
        if self.loss_reduction not in ("sum", "mean"):
            raise ValueError("loss_reduction must be 'sum' or 'mean'")

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel_size - 1) * sum(self.dilations)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RiskModelConfig":
        return cls(**d)

    @classmethod
    def preset(cls, name: str, **overrides) -> "RiskModelConfig":
        widths = {"large": 64, "desk": 32}
        if name not in widths:
            raise ValueError(f"unknown preset {name!r}")
        base = dict(channels=[widths[name]] * 4)
        base.update(overrides)
        return cls(**base)


class RiskModel:
    """Parameters and normalization buffers of one network."""

    def __init__(self, config: RiskModelConfig, n_inputs: int, seed: int = 0):
        self.config = config
        self.n_inputs = n_inputs
        rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        self.bn: list[BatchNormState] = []
        c_in = n_inputs
        for i, c_out in enumerate(config.channels):
            fan_in = c_in * config.kernel_size
            self.params[f"conv{i}.weight"] = Tensor(rng.normal(0, np.sqrt(2.0 / fan_in),
                                                               (c_out, c_in, config.kernel_size)), True)
            self.params[f"conv{i}.bias"] = Tensor(np.zeros(c_out), True)
            self.params[f"bn{i}.gamma"] = Tensor(np.ones(c_out), True)
            self.params[f"bn{i}.beta"] = Tensor(np.zeros(c_out), True)
            self.bn.append(BatchNormState.fresh(c_out, config.bn_momentum, config.bn_eps))
            c_in = c_out
        self.params["readout.weight"] = Tensor(rng.normal(0, np.sqrt(1.0 / c_in), (1, c_in)), True)
        self.params["readout.bias"] = Tensor(np.zeros(1), True)
        for name, p in self.params.items():
            p.name = name

    @property
    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """Hourly scores ``[B, T]`` for inputs ``[B, T, n_inputs]``.

        Eval mode uses size-independent contractions so a stay's scores do
        not depend on its batch or on padding.
        """
        if x.ndim != 3 or x.shape[2] != self.n_inputs:
            raise T.ShapeError(f"model expects [B, T, {self.n_inputs}] input, got {x.shape}")
        cfg = self.config
        h = Tensor(x)
        for i in range(cfg.num_layers):
            p = self.params
            h = T.causal_conv1d(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"], cfg.dilations[i],
                                stable=not training)
            h = T.relu(h)
            h = T.batch_norm(h, p[f"bn{i}.gamma"], p[f"bn{i}.beta"], self.bn[i], mask, training)
            h = T.dropout(h, cfg.dropout_rate, training, rng)
        z = T.linear(h, self.params["readout.weight"], self.params["readout.bias"], stable=not training)
        return T.sigmoid(T.reshape(z, z.shape[:-1]))

    def score_arrays(self, arrays: Sequence[np.ndarray], batch_size: int = 256) -> list[np.ndarray]:
        """Eval-mode scores for each ``[T_i, C]`` array.

        Results do not depend on how stays are batched together.
        """
        order = sorted(range(len(arrays)), key=lambda i: arrays[i].shape[0])
        out: list[np.ndarray | None] = [None] * len(arrays)
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            X, M = collate([arrays[i] for i in idx])
            s = self.forward(X, M, training=False).data
            for row, i in enumerate(idx):
                out[i] = s[row, :arrays[i].shape[0]].copy()
        return out

    # serialization ------------------------------------------------------------
    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [(name, p.data) for name, p in self.params.items()]
        for i, st in enumerate(self.bn):
            out += [(f"bn{i}.running_mean", st.running_mean), (f"bn{i}.running_var", st.running_var)]
        return out

    def load_state(self, arrays: dict[str, np.ndarray]):
        for name, p in self.params.items():
            if arrays[name].shape != p.shape:
                raise T.ShapeError(f"{name}: checkpoint shape {arrays[name].shape} vs model {p.shape}")
            p.data = np.array(arrays[name], dtype=np.float64)
        for i, st in enumerate(self.bn):
            st.running_mean = np.array(arrays[f"bn{i}.running_mean"], dtype=np.float64)
            st.running_var = np.array(arrays[f"bn{i}.running_var"], dtype=np.float64)

    def copy(self) -> "RiskModel":
        return copy.deepcopy(self)


def collate(arrays: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad ``[T_i, C]`` arrays into ``[B, T_max, C]`` plus a validity mask."""
    if not arrays:
        raise ValueError("nothing to collate")
    C = arrays[0].shape[1]
    t_max = max(a.shape[0] for a in arrays)
    X = np.zeros((len(arrays), t_max, C))
    M = np.zeros((len(arrays), t_max))
    for i, a in enumerate(arrays):
        X[i, :a.shape[0]] = a
        M[i, :a.shape[0]] = 1.0
    return X, M


# objective ----------------------------------------------------------------------

def softmax_weighted_risk(scores, alpha: float = 2.0) -> float:
    """``sum_k softmax(alpha * r)_k * r_k`` for one trajectory."""
    r = np.asarray(scores, dtype=np.float64)
    if r.size == 0:
        raise ValueError("empty trajectory")
    return float(T.softmax_weighted(Tensor(r[None, :]), None, alpha).data[0])


def risk_loss(scores: Tensor, mask: np.ndarray, labels, alpha: float = 2.0,
              reduction: str = "sum") -> Tensor:
    """Soft max-risk of negatives minus that of positives.

    ``scores`` is ``[B, T]``; ``labels`` holds 1 for stays ending in the
    event. With ``reduction="mean"`` the total is divided by the batch size.
    """
    soft = T.softmax_weighted(scores, mask, alpha)
    sign = np.where(np.asarray(labels) > 0, -1.0, 1.0)
    loss = T.tsum(T.mul(soft, sign))
    if reduction == "mean":
        loss = T.mul(loss, 1.0 / len(sign))
    return loss


@dataclass
class RiskTrajectory:
    patient_id: str
    scores: np.ndarray
    observed_time: int
    label: int

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (self.observed_time + 1,):
            raise ValueError("a trajectory needs one score per hour 0..observed_time")

    @property
    def summary(self) -> float:
        return float(self.scores.max())


def trajectory_loss(batch: Sequence[RiskTrajectory], alpha: float = 2.0) -> float:
    """The risk loss evaluated on already-computed trajectories."""
    total = 0.0
    for tr in batch:
        v = softmax_weighted_risk(tr.scores, alpha)
        total += -v if tr.label else v
    return total


def forward_trajectory(record: PatientRecord, model: RiskModel, state: PreprocessorState) -> RiskTrajectory:
    x = preprocess(record, state)
    if x.shape[1] != model.n_inputs:
        raise T.ShapeError(f"record has {x.shape[1]} input channels, model expects {model.n_inputs}")
    scores = model.forward(x[None], None, training=False).data[0]
    return RiskTrajectory(record.patient_id, scores, record.observed_time, record.label)


# masking --------------------------------------------------------------------------

def player_channel_index(schema: FeatureSchema) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(value channel, indicator channel, has-indicator) per maskable feature."""
    pc = schema.player_channels()
    val = np.array([v for v, _ in pc], dtype=int)
    ind = np.array([-1 if i is None else i for _, i in pc], dtype=int)
    return val, ind, ind >= 0


def mask_inputs(x: np.ndarray, schema: FeatureSchema, keep: np.ndarray) -> np.ndarray:
    """Hide the maskable features not in ``keep``.

    ``x`` is ``[..., T, C]`` and ``keep`` a boolean ``[..., d]`` over the
    schema's maskable features (leading axes broadcast). A hidden feature
    has its value channel set to 0 and its indicator channel to -1; static
    features have no indicator channel. Nothing else changes.
    """
    keep = np.asarray(keep, dtype=bool)
    val, ind, has_ind = player_channel_index(schema)
    if keep.shape[-1] != len(val):
        raise ValueError(f"subset has {keep.shape[-1]} entries, schema has {len(val)} maskable features")
    lead = np.broadcast_shapes(x.shape[:-2], keep.shape[:-1])
    out = np.array(np.broadcast_to(x, lead + x.shape[-2:]))
    hide = np.broadcast_to(~keep, lead + keep.shape[-1:])
    v_hide = np.zeros(lead + (x.shape[-1],), dtype=bool)
    v_hide[..., val] = hide
    i_hide = np.zeros_like(v_hide)
    i_hide[..., ind[has_ind]] = hide[..., has_ind]
    out = np.where(v_hide[..., None, :], 0.0, out)
    out = np.where(i_hide[..., None, :], MASKED, out)
    return out


def subset_to_mask(subset, n_players: int) -> np.ndarray:
    """Boolean keep-vector from an iterable of maskable-feature indices."""
    keep = np.zeros(n_players, dtype=bool)
    for j in subset:
        if not 0 <= int(j) < n_players:
            raise ValueError(f"feature index {j} outside the maskable set of size {n_players}")
        keep[int(j)] = True
    return keep


def sample_subsets(rng: np.random.Generator, n: int, d: int, keep_rate: float = 0.5) -> np.ndarray:
    """Independent keep-masks, each feature retained with probability ``keep_rate``."""
    return rng.random((n, d)) < keep_rate


def surrogate_loss(model: RiskModel, x: np.ndarray, mask: np.ndarray, labels, schema: FeatureSchema,
                   keep: np.ndarray, alpha: float = 2.0, training: bool = True,
                   rng: np.random.Generator | None = None, reduction: str = "sum") -> Tensor:
    """The risk loss on inputs where each stay sees only its own feature subset."""
    xm = mask_inputs(x, schema, keep)
    scores = model.forward(xm, mask, training=training, rng=rng)
    return risk_loss(scores, mask, labels, alpha, reduction)


def value_function(model: RiskModel, x: np.ndarray, schema: FeatureSchema, keep: np.ndarray,
                   alpha: float = 2.0, batch_size: int = 512) -> np.ndarray:
    """Label-free soft max-risk of one stay ``x [T, C]`` under each subset in ``keep [m, d]``."""
    keep = np.atleast_2d(np.asarray(keep, dtype=bool))
    out = np.empty(keep.shape[0])
    for s in range(0, keep.shape[0], batch_size):
        xm = mask_inputs(x, schema, keep[s:s + batch_size])
        scores = model.forward(xm, None, training=False)
        out[s:s + batch_size] = T.softmax_weighted(scores, None, alpha).data
    return out


# checkpoints ----------------------------------------------------------------------

def save_model(path, model: RiskModel, state: PreprocessorState | None, schema: FeatureSchema,
               meta: dict | None = None):
    arrays = model.state_arrays() + (state.arrays() if state is not None else [])
    doc = {
        "model_config": model.config.to_dict(),
        "n_inputs": model.n_inputs,
        "schema": schema.to_dict(),
        "schema_fingerprint": schema.fingerprint,
        "preprocessor": state.meta() if state is not None else None,
    }
    doc.update(meta or {})
    T.save_arrays(path, arrays, doc)


def load_model(path) -> tuple[RiskModel, PreprocessorState | None, FeatureSchema, dict]:
    arrays, meta = T.load_arrays(path)
    if "model_config" not in meta:
        raise ValueError(f"{path} is not a risk model checkpoint")
    amap = dict(arrays)
    model = RiskModel(RiskModelConfig.from_dict(meta["model_config"]), meta["n_inputs"])
    model.load_state(amap)
    state = PreprocessorState.from_arrays(amap, meta["preprocessor"]) if meta.get("preprocessor") else None
    return model, state, FeatureSchema.from_dict(meta["schema"]), meta
