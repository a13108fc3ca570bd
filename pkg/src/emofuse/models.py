"""The three neural sub-systems: two multi-task feedforward nets on
utterance vectors and an attention-pooling bidirectional recurrent net on
frame sequences, plus their shared training loop, scoring, and checkpoint
round-trips.

Full-size layer widths are the documented defaults; scale_factor shrinks
every width proportionally (floor 1) so the full topology trains in
seconds during tests while keeping the same shape arithmetic.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from emofuse.checkpoint import Checkpoint
from emofuse.errors import EmofuseError
from emofuse.labels import EMOTION_CLASSES
from emofuse.metrics import confusion_matrix, macro_f1
from emofuse.nn.core import (
    AttentionPool,
    BiLstm,
    Dense,
    Dropout,
    MultiTaskLossSpec,
    TaskSpec,
    cross_entropy_grad,
    log_softmax,
    softmax_cross_entropy,
)
from emofuse.nn.optim import Adam, Sgd, clip_global_norm
from emofuse.scorefile import ScoreMatrix

DEFAULT_TASK_WEIGHTS = {"emotion": 1.0, "speaker": 0.3, "gender": 0.6}


class ModelError(EmofuseError):
    pass


def make_task_spec(
    speaker_count: int,
    weights: dict[str, float] | None = None,
    include_auxiliary: bool = True,
) -> MultiTaskLossSpec:
    """Emotion plus (optionally) speaker and gender auxiliary tasks."""
    w = dict(DEFAULT_TASK_WEIGHTS)
    if weights:
        w.update(weights)
    tasks = [TaskSpec("emotion", len(EMOTION_CLASSES), w["emotion"])]
    if include_auxiliary:
        tasks.append(TaskSpec("speaker", max(2, speaker_count), w["speaker"]))
        tasks.append(TaskSpec("gender", 2, w["gender"]))
    return MultiTaskLossSpec(tasks=tuple(tasks))


def _scaled(width: int, factor: float) -> int:
    return max(1, int(round(width * factor)))


@dataclass
class MultiTaskDnnConfig:
    input_dim: int
    tasks: MultiTaskLossSpec
    trunk_widths: tuple[int, int] = (4096, 4096)
    branch_width: int = 2048
    dropout: float = 0.5
    lr: float = 0.01  # SGD
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    scale_factor: float = 1.0
    early_stop_patience: int = 20
    model_id: str = "dnn_functionals"

    def __post_init__(self):
        if len(self.trunk_widths) != 2:
            raise ValueError("the trunk is fixed at two hidden layers")
        if min(self.trunk_widths) < 1 or self.branch_width < 1 or self.input_dim < 1:
            raise ValueError("widths and input_dim must be positive")


def functional_dnn_config(tasks: MultiTaskLossSpec, **kw) -> MultiTaskDnnConfig:
    return MultiTaskDnnConfig(input_dim=1512, tasks=tasks, model_id="dnn_functionals", **kw)


def embedding_dnn_config(tasks: MultiTaskLossSpec, **kw) -> MultiTaskDnnConfig:
    kw.setdefault("input_dim", 200)
    return MultiTaskDnnConfig(
        tasks=tasks,
        trunk_widths=(1024, 1024),
        branch_width=1024,
        model_id="dnn_embedding",
        **kw,
    )


@dataclass
class AttentionRnnConfig:
    tasks: MultiTaskLossSpec
    input_dim: int = 36
    dense_width: int = 256
    blstm_width: int = 128  # per direction
    branch_width: int = 256
    dropout: float = 0.5
    lr: float = 0.001  # Adam
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    scale_factor: float = 1.0
    early_stop_patience: int = 20
    clip_norm: float = 5.0
    model_id: str = "attention_rnn"

    def __post_init__(self):
        if min(self.dense_width, self.blstm_width, self.branch_width, self.input_dim) < 1:
            raise ValueError("widths and input_dim must be positive")


class FeedForwardMultiTask:
    """Two-layer relu trunk with one relu branch plus softmax head per task."""

    kind = "dnn"

    def __init__(self, cfg: MultiTaskDnnConfig):
        self.cfg = cfg
        self.input_dim = cfg.input_dim
        w1 = _scaled(cfg.trunk_widths[0], cfg.scale_factor)
        w2 = _scaled(cfg.trunk_widths[1], cfg.scale_factor)
        bw = _scaled(cfg.branch_width, cfg.scale_factor)
        self.widths = (w1, w2, bw)
        self.trunk = [
            Dense("trunk1", cfg.input_dim, w1, "relu"),
            Dropout("trunk1_drop", cfg.dropout),
            Dense("trunk2", w1, w2, "relu"),
            Dropout("trunk2_drop", cfg.dropout),
        ]
        self.branches: dict[str, tuple[Dense, Dropout, Dense]] = {}
        for task in cfg.tasks.tasks:
            self.branches[task.name] = (
                Dense(f"task_{task.name}_dense", w2, bw, "relu"),
                Dropout(f"task_{task.name}_drop", cfg.dropout),
                Dense(f"task_{task.name}_head", bw, task.class_count),
            )
        self.init_params(cfg.seed)

    def init_params(self, master_seed: int):
        for layer in self.trunk:
            layer.init_params(master_seed)
        for branch in self.branches.values():
            for layer in branch:
                layer.init_params(master_seed)

    def parameters(self):
        out = []
        for layer in self.trunk:
            out.extend(layer.params())
        for name in self.branches:
            for layer in self.branches[name]:
                out.extend(layer.params())
        return out

    def forward(self, x: np.ndarray, train: bool, tasks: tuple[str, ...]) -> dict[str, np.ndarray]:
        if x.shape[-1] != self.input_dim:
            raise ModelError(
                f"input dimension {x.shape[-1]} does not match model input_dim {self.input_dim}"
            )
        h = x
        for layer in self.trunk:
            h = layer.forward(h, train)
        out = {}
        for name in tasks:
            dense, drop, head = self.branches[name]
            out[name] = head.forward(drop.forward(dense.forward(h, train), train), train)
        return out

    def backward(self, dlogits: dict[str, np.ndarray]):
        d_repr = None
        for name, dl in dlogits.items():
            dense, drop, head = self.branches[name]
            d = dense.backward(drop.backward(head.backward(dl)))
            d_repr = d if d_repr is None else d_repr + d
        for layer in reversed(self.trunk):
            d_repr = layer.backward(d_repr)

    def architecture(self) -> dict:
        return {
            "model_id": self.cfg.model_id,
            "input_dim": self.input_dim,
            "widths": list(self.widths),
            "tasks": [
                {"name": t.name, "class_count": t.class_count, "weight": t.weight}
                for t in self.cfg.tasks.tasks
            ],
            "dropout": self.cfg.dropout,
        }


class AttentionRnnMultiTask:
    """Frame dense layer, bidirectional LSTM, attention pooling, task branches."""

    kind = "attention_rnn"

    def __init__(self, cfg: AttentionRnnConfig):
        self.cfg = cfg
        self.input_dim = cfg.input_dim
        dw = _scaled(cfg.dense_width, cfg.scale_factor)
        hw = _scaled(cfg.blstm_width, cfg.scale_factor)
        bw = _scaled(cfg.branch_width, cfg.scale_factor)
        self.widths = (dw, hw, bw)
        self.frame_dense = Dense("frame_dense", cfg.input_dim, dw, "relu")
        self.frame_drop = Dropout("frame_drop", cfg.dropout)
        self.blstm = BiLstm("blstm", dw, hw)
        self.attn = AttentionPool("attn_pool", 2 * hw)
        self.branches: dict[str, tuple[Dense, Dropout, Dense]] = {}
        for task in cfg.tasks.tasks:
            self.branches[task.name] = (
                Dense(f"task_{task.name}_dense", 2 * hw, bw, "relu"),
                Dropout(f"task_{task.name}_drop", cfg.dropout),
                Dense(f"task_{task.name}_head", bw, task.class_count),
            )
        self._shape = None
        self.init_params(cfg.seed)

    def init_params(self, master_seed: int):
        self.frame_dense.init_params(master_seed)
        self.frame_drop.init_params(master_seed)
        self.blstm.init_params(master_seed)
        self.attn.init_params(master_seed)
        for branch in self.branches.values():
            for layer in branch:
                layer.init_params(master_seed)

    def parameters(self):
        out = []
        out.extend(self.frame_dense.params())
        out.extend(self.blstm.params())
        out.extend(self.attn.params())
        for name in self.branches:
            for layer in self.branches[name]:
                out.extend(layer.params())
        return out

    def forward(
        self,
        values: np.ndarray,
        mask: np.ndarray,
        lengths: np.ndarray,
        train: bool,
        tasks: tuple[str, ...],
    ) -> dict[str, np.ndarray]:
        if values.shape[-1] != self.input_dim:
            raise ModelError(
                f"input dimension {values.shape[-1]} does not match model "
                f"input_dim {self.input_dim}"
            )
        bsz, tmax, _ = values.shape
        self._shape = (bsz, tmax)
        flat = self.frame_dense.forward(values.reshape(bsz * tmax, -1), train)
        flat = self.frame_drop.forward(flat, train)
        h = self.blstm.forward(flat.reshape(bsz, tmax, -1), mask, lengths, train)
        pooled, self.last_attention = self.attn.forward(h, mask, train)
        out = {}
        for name in tasks:
            dense, drop, head = self.branches[name]
            out[name] = head.forward(drop.forward(dense.forward(pooled, train), train), train)
        return out

    def backward(self, dlogits: dict[str, np.ndarray]):
        d_pooled = None
        for name, dl in dlogits.items():
            dense, drop, head = self.branches[name]
            d = dense.backward(drop.backward(head.backward(dl)))
            d_pooled = d if d_pooled is None else d_pooled + d
        dh = self.attn.backward(d_pooled)
        d_hin = self.blstm.backward(dh)
        bsz, tmax = self._shape
        d_flat = self.frame_drop.backward(d_hin.reshape(bsz * tmax, -1))
        self.frame_dense.backward(d_flat)

    def architecture(self) -> dict:
        return {
            "model_id": self.cfg.model_id,
            "input_dim": self.input_dim,
            "widths": list(self.widths),
            "tasks": [
                {"name": t.name, "class_count": t.class_count, "weight": t.weight}
                for t in self.cfg.tasks.tasks
            ],
            "dropout": self.cfg.dropout,
            "clip_norm": self.cfg.clip_norm,
        }


@dataclass
class VectorDataset:
    ids: tuple[str, ...]
    x: np.ndarray  # (N, D), already normalized
    labels: dict[str, np.ndarray]

    def __post_init__(self):
        self.ids = tuple(self.ids)
        self.x = np.asarray(self.x, dtype=np.float64)
        n = len(self.ids)
        if self.x.shape[0] != n:
            raise ValueError(f"{self.x.shape[0]} rows for {n} ids")
        for task, y in self.labels.items():
            self.labels[task] = np.asarray(y, dtype=np.int64)
            if self.labels[task].shape != (n,):
                raise ValueError(f"bad label array for task {task!r}")

    def __len__(self):
        return len(self.ids)


@dataclass
class SequenceDataset:
    ids: tuple[str, ...]
    sequences: list[np.ndarray]  # each (T_i, F), already normalized per utterance
    labels: dict[str, np.ndarray]

    def __post_init__(self):
        self.ids = tuple(self.ids)
        n = len(self.ids)
        if len(self.sequences) != n:
            raise ValueError(f"{len(self.sequences)} sequences for {n} ids")
        self.sequences = [np.asarray(s, dtype=np.float64) for s in self.sequences]
        for task, y in self.labels.items():
            self.labels[task] = np.asarray(y, dtype=np.int64)
            if self.labels[task].shape != (n,):
                raise ValueError(f"bad label array for task {task!r}")

    def __len__(self):
        return len(self.ids)


def pad_sequences(seqs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(values, mask, lengths): zero-padded to the longest item in the batch."""
    lengths = np.array([s.shape[0] for s in seqs], dtype=np.int64)
    tmax = int(lengths.max())
    dim = seqs[0].shape[1]
    values = np.zeros((len(seqs), tmax, dim))
    mask = np.zeros((len(seqs), tmax))
    for i, s in enumerate(seqs):
        values[i, : s.shape[0]] = s
        mask[i, : s.shape[0]] = 1.0
    return values, mask, lengths


def _forward_on(model, data, idx, train: bool, tasks: tuple[str, ...]):
    if isinstance(data, VectorDataset):
        return model.forward(data.x[idx], train, tasks)
    values, mask, lengths = pad_sequences([data.sequences[int(i)] for i in idx])
    return model.forward(values, mask, lengths, train, tasks)


@dataclass
class TrainHistory:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_maf: float = -1.0


INFER_BATCH = 128


def _infer_emotion_logits(model, data) -> np.ndarray:
    chunks = []
    for start in range(0, len(data), INFER_BATCH):
        idx = np.arange(start, min(start + INFER_BATCH, len(data)))
        out = _forward_on(model, data, idx, train=False, tasks=("emotion",))
        chunks.append(out["emotion"])
    return np.concatenate(chunks, axis=0)


def _evaluate(model, data, spec: MultiTaskLossSpec) -> tuple[float, float]:
    """(weighted multi-task loss, emotion macro-F) on a held-out set."""
    active = spec.active()
    names = tuple(t.name for t in active)
    total = 0.0
    emo_logits = []
    for start in range(0, len(data), INFER_BATCH):
        idx = np.arange(start, min(start + INFER_BATCH, len(data)))
        out = _forward_on(model, data, idx, train=False, tasks=names)
        chunk_loss = 0.0
        for t in active:
            loss_t, _ = softmax_cross_entropy(out[t.name], data.labels[t.name][idx])
            chunk_loss += t.weight * loss_t
        total += chunk_loss * len(idx)
        if "emotion" in out:
            emo_logits.append(out["emotion"])
    logits = np.concatenate(emo_logits, axis=0)
    y_pred = logits.argmax(axis=1)
    conf = confusion_matrix(
        [int(v) for v in data.labels["emotion"]],
        [int(v) for v in y_pred],
        EMOTION_CLASSES,
    )
    _, maf = macro_f1(conf)
    return total / len(data), maf


def train_model(model, train_data, val_data, cfg) -> TrainHistory:
    """Minibatch training with per-epoch validation; keeps the parameters of
    the best validation emotion macro-F epoch and restores them at the end.

    Zero-weight tasks are skipped outright (no forward, no gradient), which
    is what makes them bit-inert. Stops early after early_stop_patience
    epochs without validation improvement.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise ModelError("empty training or validation split")
    spec: MultiTaskLossSpec = cfg.tasks
    active = spec.active()
    names = tuple(t.name for t in active)
    for t in active:
        for data, label in ((train_data, "train"), (val_data, "validation")):
            y = data.labels.get(t.name)
            if y is None:
                raise ModelError(f"{label} data lacks labels for task {t.name!r}")
            if y.size and (y.min() < 0 or y.max() >= t.class_count):
                raise ModelError(f"{label} label outside task {t.name!r} vocabulary")

    params = model.parameters()
    if model.kind == "attention_rnn":
        optimizer = Adam(params, cfg.lr)
        clip = cfg.clip_norm
    else:
        optimizer = Sgd(params, cfg.lr)
        clip = 0.0
    shuffle_rng = np.random.default_rng([cfg.seed, zlib.crc32(b"shuffle")])

    history = TrainHistory()
    best_values = [p.value.copy() for p in params]
    stagnant = 0
    n = len(train_data)
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            out = _forward_on(model, train_data, idx, train=True, tasks=names)
            optimizer.zero_grads()
            dlogits = {}
            batch_loss = 0.0
            for t in active:
                y = train_data.labels[t.name][idx]
                loss_t, probs = softmax_cross_entropy(out[t.name], y)
                batch_loss += t.weight * loss_t
                dlogits[t.name] = cross_entropy_grad(probs, y, t.weight)
            if not np.isfinite(batch_loss):
                raise ModelError(f"non-finite training loss at epoch {epoch}")
            model.backward(dlogits)
            if clip:
                clip_global_norm(params, clip)
            optimizer.step()
            epoch_loss += batch_loss * len(idx)
        val_loss, val_maf = _evaluate(model, val_data, spec)
        history.epochs.append(
            {"train_loss": epoch_loss / n, "val_loss": val_loss, "val_maf": val_maf}
        )
        if val_maf > history.best_val_maf:
            history.best_val_maf = val_maf
            history.best_epoch = epoch
            best_values = [p.value.copy() for p in params]
            stagnant = 0
        else:
            stagnant += 1
        if stagnant >= cfg.early_stop_patience:
            break
    for p, v in zip(params, best_values):
        p.value[...] = v
    return history


def predict_scores(model, data, model_id: str | None = None) -> ScoreMatrix:
    """Emotion-head natural-log posteriors, dropout off."""
    logits = _infer_emotion_logits(model, data)
    return ScoreMatrix(
        ids=data.ids,
        values=log_softmax(logits),
        model_id=model_id or model.cfg.model_id,
    )


def model_to_checkpoint(
    model,
    labels: dict[str, list[str]],
    normalization: dict[str, np.ndarray] | None = None,
    config_echo: dict | None = None,
) -> Checkpoint:
    params = {p.name: p.value for p in model.parameters()}
    return Checkpoint(
        kind=model.kind,
        architecture=model.architecture(),
        params=params,
        labels=labels,
        normalization=normalization,
        config=config_echo or {},
    )


def model_from_checkpoint(ckpt: Checkpoint):
    """Rebuild a model (and its task spec) from a checkpoint; the stored
    widths are applied as-is with scale_factor 1."""
    if ckpt.kind not in ("dnn", "attention_rnn"):
        raise ModelError(f"checkpoint kind {ckpt.kind!r} is not a neural model")
    arch = ckpt.architecture
    tasks = MultiTaskLossSpec(
        tasks=tuple(
            TaskSpec(t["name"], int(t["class_count"]), float(t["weight"]))
            for t in arch["tasks"]
        )
    )
    if ckpt.kind == "dnn":
        w1, w2, bw = arch["widths"]
        cfg = MultiTaskDnnConfig(
            input_dim=int(arch["input_dim"]),
            tasks=tasks,
            trunk_widths=(int(w1), int(w2)),
            branch_width=int(bw),
            dropout=float(arch["dropout"]),
            model_id=arch.get("model_id", "dnn"),
        )
        model = FeedForwardMultiTask(cfg)
    elif ckpt.kind == "attention_rnn":
        dw, hw, bw = arch["widths"]
        cfg = AttentionRnnConfig(
            tasks=tasks,
            input_dim=int(arch["input_dim"]),
            dense_width=int(dw),
            blstm_width=int(hw),
            branch_width=int(bw),
            dropout=float(arch["dropout"]),
            clip_norm=float(arch.get("clip_norm", 5.0)),
            model_id=arch.get("model_id", "attention_rnn"),
        )
        model = AttentionRnnMultiTask(cfg)
    for p in model.parameters():
        stored = ckpt.param(p.name)
        if stored.shape != p.value.shape:
            raise ModelError(
                f"parameter {p.name!r} shape {stored.shape} does not match "
                f"architecture shape {p.value.shape}"
            )
        p.value[...] = stored
    return model
