"""Minimal reverse-mode differentiation over numpy arrays.

Only the layers the risk model needs are provided: dilated causal
convolution, ReLU, masked batch normalization, dropout, a dense layer,
sigmoid and the softmax-weighted trajectory reduction. Everything is
float64.

Sequence tensors use the layout ``[batch, time, channels]``.

Forward passes contract with ``np.einsum`` rather than BLAS: GEMM kernels
round differently depending on matrix size, which would break the
guarantee that scoring a truncated stay reproduces the prefix of the full
stay bit for bit. Backward passes use BLAS, since gradients are only
compared between runs of identical shape. Layers take ``stable=False`` to
use BLAS going forward too, which training does for speed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def sum(self, axis=None):
        return tsum(self, axis)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topological_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _node(data, parents, backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=parents if req else (),
                  _backward=backward if req else None)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward)


def tsum(a: Tensor, axis=None) -> Tensor:
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _node(out, (a,), backward)


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at 0 is taken as 0."""
    pos = x.data > 0
    return _node(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),))


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# layers ---------------------------------------------------------------------

def _contract(x: np.ndarray, w: np.ndarray, stable: bool) -> np.ndarray:
    """``x[..., i] @ w[o, i].T``, size-independent per row when ``stable``."""
    w = np.ascontiguousarray(w)
    if stable:
        return np.einsum("...i,oi->...o", x, w)
    return (x.reshape(-1, x.shape[-1]) @ w.T).reshape(x.shape[:-1] + (w.shape[0],))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None, stable: bool = True) -> Tensor:
    """Dense layer on the last axis: ``x[..., in] -> [..., out]``.

    ``weight`` has shape ``[out, in]``.
    """
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} vs weight {weight.shape}")
    out = _contract(x.data, weight.data, stable)
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"linear: bias {bias.shape} vs weight {weight.shape}")
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        gx = (g2 @ weight.data).reshape(x.shape) if x.requires_grad else None
        gw = g2.T @ x2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _node(out, parents, backward)


def linear_sigmoid(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """sigmoid(w . x + b) for a single output unit.

    ``weight`` may be ``[features]`` or ``[1, features]``; the trailing unit
    axis is dropped so a feature vector maps to a scalar.
    """
    w = weight if weight.ndim == 2 else reshape(weight, (1, -1))
    b = bias if bias.ndim == 1 else reshape(bias, (1,))
    z = linear(x, w, b)
    return sigmoid(reshape(z, z.shape[:-1]))


def reshape(x: Tensor, shape) -> Tensor:
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def causal_conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                  dilation: int = 1, stable: bool = True) -> Tensor:
    """Dilated causal convolution, ``[B, T, C_in] -> [B, T, C_out]``.

    ``weight`` is ``[C_out, C_in, K]``; tap ``K-1`` multiplies the current
    step and tap ``j`` the step ``(K-1-j)*dilation`` hours earlier. The input
    is left-padded with zeros so the output keeps length T.
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv: expected [B,T,C] input and [O,C,K] weight, "
                         f"got {x.shape} and {weight.shape}")
    if weight.shape[1] != x.shape[2]:
        raise ShapeError(f"conv: input has {x.shape[2]} channels, weight expects {weight.shape[1]}")
    if dilation < 1 or weight.shape[2] < 1:
        raise ShapeError("conv: dilation and kernel size must be >= 1")
    B, T, _ = x.shape
    K = weight.shape[2]
    pad = (K - 1) * dilation
    xp = np.concatenate([np.zeros((B, pad, x.shape[2])), x.data], axis=1) if pad else x.data
    out = np.zeros((B, T, weight.shape[0]))
    for j in range(K):
        off = j * dilation
        if stable:
            out += _contract(xp[:, off:off + T, :], weight.data[:, :, j], True)
        else:
            out += _contract(xp, weight.data[:, :, j], False)[:, off:off + T, :]
    if bias is not None:
        out += bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(B * T, -1)
        gxp = np.zeros_like(xp) if x.requires_grad else None
        gw = np.zeros_like(weight.data) if weight.requires_grad else None
        for j in range(K):
            off = j * dilation
            if gw is not None:
                gw[:, :, j] = g2.T @ xp[:, off:off + T, :].reshape(B * T, -1)
            if gxp is not None:
                gxp[:, off:off + T, :] += (g2 @ np.ascontiguousarray(weight.data[:, :, j])).reshape(B, T, -1)
        gx = gxp[:, pad:, :] if gxp is not None else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _node(out, parents, backward)


@dataclass
class BatchNormState:
    """Running statistics for one normalization layer."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        return cls(np.zeros(channels), np.ones(channels), momentum, eps)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState,
               mask: np.ndarray | None = None, training: bool = True) -> Tensor:
    """Per-channel normalization of ``[B, T, C]`` over valid (batch, time) cells.

    ``mask`` is ``[B, T]`` with 1 for real hours and 0 for padding; padded
    cells are normalized but never enter the statistics. Training mode
    updates ``state`` in place.
    """
    B, T, C = x.shape
    m = np.ones((B, T)) if mask is None else np.asarray(mask, dtype=DTYPE)
    if training:
        n = m.sum()
        if n < 2:
            raise ShapeError("batch_norm needs at least 2 valid positions per channel in training mode")
        mw = m[:, :, None]
        mu = (x.data * mw).sum(axis=(0, 1)) / n
        centered = x.data - mu
        var = (centered ** 2 * mw).sum(axis=(0, 1)) / n
        state.running_mean = (1 - state.momentum) * state.running_mean + state.momentum * mu
        state.running_var = (1 - state.momentum) * state.running_var + state.momentum * var * n / (n - 1)
    else:
        mu, var = state.running_mean, state.running_var
        centered = x.data - mu
    istd = 1.0 / np.sqrt(var + state.eps)
    xhat = centered * istd
    out = xhat * gamma.data + beta.data

    def backward(g):
        dxhat = g * gamma.data
        gx = None
        if x.requires_grad:
            if training:
                mw = m[:, :, None]
                s1 = dxhat.sum(axis=(0, 1))
                s2 = (dxhat * xhat).sum(axis=(0, 1))
                gx = istd * (dxhat - mw * s1 / n - mw * xhat * s2 / n)
            else:
                gx = dxhat * istd
        return gx, (g * xhat).sum(axis=(0, 1)), g.sum(axis=(0, 1))

    return _node(out, (x, gamma, beta), backward)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs a seeded generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _node(x.data * keep, (x,), lambda g: (g * keep,))


def softmax_weighted(scores: Tensor, mask: np.ndarray | None = None, alpha: float = 2.0) -> Tensor:
    """Soft maximum ``sum_k softmax(alpha * r)_k * r_k`` along the last axis.

    Positions where ``mask`` is 0 get weight exactly 0.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    r = scores.data
    m = np.ones_like(r, dtype=bool) if mask is None else np.asarray(mask).astype(bool)
    if r.shape[-1] == 0 or not m.any(axis=-1).all():
        raise ValueError("softmax_weighted needs at least one valid score per row")
    z = np.where(m, alpha * r, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(m, np.exp(z), 0.0)
    w = e / e.sum(axis=-1, keepdims=True)
    out = (w * np.where(m, r, 0.0)).sum(axis=-1)

    def backward(g):
        # d out / d r_k = w_k * (1 + alpha * (r_k - out))
        local = w * (1.0 + alpha * (r - out[..., None]))
        return (np.expand_dims(g, -1) * local,)

    return _node(out, (scores,), backward)


# optimizer --------------------------------------------------------------------

@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray] | None,
              state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place on ``params``.

    ``grads`` defaults to each parameter's ``.grad``; parameters without a
    gradient are treated as having gradient zero.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad if grads is None else grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ShapeError(f"adam: grad for {name} has shape {g.shape}, param {p.shape}")
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m, v = np.zeros_like(p.data), np.zeros_like(p.data)
        if m.shape != p.shape:
            raise ShapeError(f"adam: moment buffer for {name} has shape {m.shape}, param {p.shape}")
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.first_moment[name], state.second_moment[name] = m, v
        p.data = p.data - state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state


def zero_grad(params: Iterable[Tensor]):
    for p in params:
        p.grad = None


# checkpoints ----------------------------------------------------------------

CHECKPOINT_KIND = "dynrisk.checkpoint"


def save_arrays(path, arrays: Sequence[tuple[str, np.ndarray]], meta: dict | None = None):
    """Write named arrays as JSON.

    Layout::

        {"schema_version": 1, "kind": "dynrisk.checkpoint", "meta": {...},
         "arrays": [{"name": ..., "shape": [...], "data": [...]}, ...]}

    ``data`` is the row-major flattening. Floats use Python's shortest
    round-trip repr, so identical arrays always serialize to identical bytes.
    """
    doc = {
        "schema_version": 1,
        "kind": CHECKPOINT_KIND,
        "meta": meta or {},
        "arrays": [
            {"name": name, "shape": list(np.shape(a)),
             "data": [float(v) for v in np.asarray(a, dtype=DTYPE).ravel()]}
            for name, a in arrays
        ],
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_arrays(path) -> tuple[list[tuple[str, np.ndarray]], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") != CHECKPOINT_KIND:
        raise ValueError(f"{path} is not a checkpoint file")
    arrays = [(a["name"], np.asarray(a["data"], dtype=DTYPE).reshape(a["shape"])) for a in doc["arrays"]]
    return arrays, doc.get("meta", {})
