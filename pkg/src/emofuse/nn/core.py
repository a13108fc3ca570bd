"""Layers and losses with explicit forward/backward passes.

Every layer draws its weights (and any dropout masks) from a private RNG
stream keyed by (master seed, crc32(layer name)). Adding or removing other
layers therefore never shifts a layer's own random draws, which is what
makes a multi-task model with zero-weight auxiliary heads train
bit-identically to the single-task build.

Sequence layers work on (B, T, ...) arrays with an explicit (B, T) 0/1
validity mask; valid steps are always a prefix. Padded steps produce zero
outputs, are excluded from attention, and contribute exactly zero gradient.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def layer_rng(master_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), zlib.crc32(name.encode("utf-8"))])


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Param:
    """Named trainable array with its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


class Dense:
    """y = act(x W + b), activation 'linear' or 'relu'."""

    def __init__(self, name: str, in_dim: int, out_dim: int, activation: str = "linear"):
        if activation not in ("linear", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        if in_dim < 1 or out_dim < 1:
            raise ValueError("layer dimensions must be positive")
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.w = Param(f"{name}.w", np.zeros((in_dim, out_dim)))
        self.b = Param(f"{name}.b", np.zeros(out_dim))
        self._x = None
        self._z = None

    def init_params(self, master_seed: int):
        rng = layer_rng(master_seed, self.name)
        self.w.value = glorot_uniform(rng, (self.in_dim, self.out_dim), self.in_dim, self.out_dim)
        self.b.value = np.zeros(self.out_dim)

    def params(self) -> list[Param]:
        return [self.w, self.b]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"{self.name}: input dim {x.shape[-1]}, expected {self.in_dim}")
        z = x @ self.w.value + self.b.value
        self._x = x
        self._z = z
        return np.maximum(z, 0.0) if self.activation == "relu" else z

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dz = dy * (self._z > 0.0) if self.activation == "relu" else dy
        self.w.grad += self._x.T @ dz
        self.b.grad += dz.sum(axis=0)
        return dz @ self.w.value.T


class Dropout:
    """Inverted dropout: train scales kept units by 1/(1-rate), infer is identity."""

    def __init__(self, name: str, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.name = name
        self.rate = rate
        self._rng = None
        self._mask = None

    def init_params(self, master_seed: int):
        self._rng = layer_rng(master_seed, self.name)

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self._rng.random(x.shape) >= self.rate) / keep
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy if self._mask is None else dy * self._mask


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Lstm:
    """Single-direction LSTM over masked (B, T, F) input; outputs (B, T, H).

    Gate layout in the fused weight matrices is input, forget, candidate,
    output. Forget-gate bias starts at 1.0. Padded steps (mask 0) keep the
    carried state frozen and emit zero output.
    """

    def __init__(self, name: str, input_dim: int, hidden_dim: int):
        self.name = name
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        h4 = 4 * hidden_dim
        self.wx = Param(f"{name}.wx", np.zeros((input_dim, h4)))
        self.wh = Param(f"{name}.wh", np.zeros((hidden_dim, h4)))
        self.b = Param(f"{name}.b", np.zeros(h4))
        self._cache = None

    def init_params(self, master_seed: int):
        rng = layer_rng(master_seed, self.name)
        h, h4 = self.hidden_dim, 4 * self.hidden_dim
        self.wx.value = glorot_uniform(rng, (self.input_dim, h4), self.input_dim, h4)
        self.wh.value = glorot_uniform(rng, (h, h4), h, h4)
        b = np.zeros(h4)
        b[h : 2 * h] = 1.0  # forget gate starts open
        self.b.value = b

    def params(self) -> list[Param]:
        return [self.wx, self.wh, self.b]

    def forward(self, x: np.ndarray, mask: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[-1] != self.input_dim:
            raise ValueError(f"{self.name}: expected (B, T, {self.input_dim}), got {x.shape}")
        bsz, steps, _ = x.shape
        h = self.hidden_dim
        h_state = np.zeros((bsz, h))
        c_state = np.zeros((bsz, h))
        out = np.zeros((bsz, steps, h))
        gates_i = np.zeros((steps, bsz, h))
        gates_f = np.zeros((steps, bsz, h))
        gates_g = np.zeros((steps, bsz, h))
        gates_o = np.zeros((steps, bsz, h))
        tanh_c = np.zeros((steps, bsz, h))
        h_prevs = np.zeros((steps, bsz, h))
        c_prevs = np.zeros((steps, bsz, h))
        for t in range(steps):
            m = mask[:, t : t + 1]
            z = x[:, t] @ self.wx.value + h_state @ self.wh.value + self.b.value
            gi = _sigmoid(z[:, :h])
            gf = _sigmoid(z[:, h : 2 * h])
            gg = np.tanh(z[:, 2 * h : 3 * h])
            go = _sigmoid(z[:, 3 * h :])
            c_cand = gf * c_state + gi * gg
            tc = np.tanh(c_cand)
            h_cand = go * tc
            gates_i[t], gates_f[t], gates_g[t], gates_o[t] = gi, gf, gg, go
            tanh_c[t] = tc
            h_prevs[t] = h_state
            c_prevs[t] = c_state
            c_state = m * c_cand + (1.0 - m) * c_state
            h_state = m * h_cand + (1.0 - m) * h_state
            out[:, t] = m * h_cand
        self._cache = (x, mask, gates_i, gates_f, gates_g, gates_o, tanh_c, h_prevs, c_prevs)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x, mask, gi, gf, gg, go, tanh_c, h_prevs, c_prevs = self._cache
        bsz, steps, _ = x.shape
        h = self.hidden_dim
        dx = np.zeros_like(x)
        dh_state = np.zeros((bsz, h))
        dc_state = np.zeros((bsz, h))
        for t in range(steps - 1, -1, -1):
            m = mask[:, t : t + 1]
            dh_cand = m * (dout[:, t] + dh_state)
            dc_cand = m * dc_state + dh_cand * go[t] * (1.0 - tanh_c[t] ** 2)
            d_go = dh_cand * tanh_c[t]
            d_gf = dc_cand * c_prevs[t]
            d_gi = dc_cand * gg[t]
            d_gg = dc_cand * gi[t]
            dz = np.concatenate(
                [
                    d_gi * gi[t] * (1.0 - gi[t]),
                    d_gf * gf[t] * (1.0 - gf[t]),
                    d_gg * (1.0 - gg[t] ** 2),
                    d_go * go[t] * (1.0 - go[t]),
                ],
                axis=1,
            )
            self.wx.grad += x[:, t].T @ dz
            self.wh.grad += h_prevs[t].T @ dz
            self.b.grad += dz.sum(axis=0)
            dx[:, t] = dz @ self.wx.value.T
            dh_state = dz @ self.wh.value.T + (1.0 - m) * dh_state
            dc_state = dc_cand * gf[t] + (1.0 - m) * dc_state
        return dx


def reverse_valid_prefix(x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse each item's first lengths[i] steps, leaving padding in place.

    Applying it twice restores the input, so the backward direction of a
    bidirectional layer reuses the forward recurrence on reversed input.
    """
    bsz, steps = x.shape[0], x.shape[1]
    t = np.arange(steps)[None, :]
    lens = np.asarray(lengths)[:, None]
    idx = np.where(t < lens, lens - 1 - t, t)
    return x[np.arange(bsz)[:, None], idx]


class BiLstm:
    """Two LSTMs over opposite directions; outputs concatenated to width 2H."""

    def __init__(self, name: str, input_dim: int, hidden_dim: int):
        self.name = name
        self.hidden_dim = hidden_dim
        self.fwd = Lstm(f"{name}_fwd", input_dim, hidden_dim)
        self.bwd = Lstm(f"{name}_bwd", input_dim, hidden_dim)

    def init_params(self, master_seed: int):
        self.fwd.init_params(master_seed)
        self.bwd.init_params(master_seed)

    def params(self) -> list[Param]:
        return self.fwd.params() + self.bwd.params()

    def forward(
        self, x: np.ndarray, mask: np.ndarray, lengths: np.ndarray, train: bool = False
    ) -> np.ndarray:
        self._lengths = lengths
        out_f = self.fwd.forward(x, mask, train)
        out_b = self.bwd.forward(reverse_valid_prefix(x, lengths), mask, train)
        return np.concatenate([out_f, reverse_valid_prefix(out_b, lengths)], axis=2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        h = self.hidden_dim
        dx_f = self.fwd.backward(dy[:, :, :h])
        dx_b = self.bwd.backward(reverse_valid_prefix(dy[:, :, h:], self._lengths))
        return dx_f + reverse_valid_prefix(dx_b, self._lengths)


class AttentionPool:
    """Length-weighted pooling: weights are a masked softmax of w . h_t.

    With w = 0 every valid step gets weight 1/n, so the pooled vector is
    the arithmetic mean; training then sharpens the weights toward the
    steps that matter. Output weight rows sum to 1 and are 0 on padding.
    """

    def __init__(self, name: str, width: int):
        self.name = name
        self.width = width
        self.w = Param(f"{name}.w", np.zeros(width))
        self._cache = None

    def init_params(self, master_seed: int):
        self.w.value = np.zeros(self.width)  # uniform attention at the start

    def params(self) -> list[Param]:
        return [self.w]

    def forward(self, h: np.ndarray, mask: np.ndarray, train: bool = False):
        """Returns (pooled (B, H), attention (B, T))."""
        if h.shape[-1] != self.width:
            raise ValueError(f"{self.name}: input width {h.shape[-1]}, expected {self.width}")
        if np.any(mask.sum(axis=1) < 1.0):
            raise ValueError("attention pooling requires at least one valid step per item")
        logits = h @ self.w.value
        neg = np.where(mask > 0.0, logits, -np.inf)
        rowmax = neg.max(axis=1, keepdims=True)
        e = np.exp(logits - rowmax) * mask
        attn = e / e.sum(axis=1, keepdims=True)
        pooled = np.einsum("bt,bth->bh", attn, h)
        self._cache = (h, attn)
        return pooled, attn

    def backward(self, dpooled: np.ndarray) -> np.ndarray:
        h, attn = self._cache
        d_attn = np.einsum("bh,bth->bt", dpooled, h)
        dh = attn[:, :, None] * dpooled[:, None, :]
        d_logits = attn * (d_attn - (attn * d_attn).sum(axis=1, keepdims=True))
        self.w.grad += np.einsum("bt,bth->h", d_logits, h)
        dh += d_logits[:, :, None] * self.w.value[None, None, :]
        return dh


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-probability of the true class, plus the probabilities.

    Max-subtracted softmax, natural log.
    """
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= logits.shape[-1]:
        raise ValueError(f"label outside [0, {logits.shape[-1]})")
    logp = log_softmax(logits)
    loss = -float(logp[np.arange(logits.shape[0]), labels].mean())
    return loss, np.exp(logp)


def cross_entropy_grad(probs: np.ndarray, labels: np.ndarray, weight: float = 1.0) -> np.ndarray:
    """d(mean CE)/d(logits), scaled by a task weight."""
    n = probs.shape[0]
    d = probs.copy()
    d[np.arange(n), np.asarray(labels)] -= 1.0
    return d * (weight / n)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    class_count: int
    weight: float

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError(f"task {self.name!r} needs at least 2 classes")
        if self.weight < 0.0:
            raise ValueError(f"task {self.name!r} has negative weight {self.weight}")


@dataclass(frozen=True)
class MultiTaskLossSpec:
    """Ordered task list; the emotion task must be present with weight > 0
    by default contract (weights emotion 1.0, speaker 0.3, gender 0.6)."""

    tasks: tuple[TaskSpec, ...]

    def __post_init__(self):
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValueError("duplicate task names")
        if "emotion" not in names:
            raise ValueError("the emotion task is mandatory")
        if not any(t.weight > 0.0 for t in self.tasks):
            raise ValueError("at least one task must carry positive weight")

    def active(self) -> tuple[TaskSpec, ...]:
        """Tasks that actually contribute to training (weight > 0)."""
        return tuple(t for t in self.tasks if t.weight > 0.0)

    def __getitem__(self, name: str) -> TaskSpec:
        for t in self.tasks:
            if t.name == name:
                return t
        raise KeyError(name)


def multitask_loss(task_losses: dict[str, float], spec: MultiTaskLossSpec) -> float:
    """Weighted sum over the active tasks."""
    total = 0.0
    for task in spec.active():
        if task.name not in task_losses:
            raise ValueError(f"missing loss for active task {task.name!r}")
        total += task.weight * task_losses[task.name]
    return total
