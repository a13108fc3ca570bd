"""Affine score fusion trained to minimize multiclass cost of the
log-likelihood ratio on held-out data.

The combiner forms z_i = sum_k alpha_k * s_ki + beta over the K input
systems' log-posterior rows and is fitted by full-batch accelerated
gradient descent on the (convex) mean cross-entropy of softmax(z). By
default alpha is one scalar per system (initialized 1/K) and beta a
per-class offset (initialized 0); a per-class alpha matrix is available
behind a config switch.

Cllr here is the multiclass form: the mean over items of -log2 of the
re-normalized posterior of the true class, optionally divided by log2 C
(so 1.0 marks the useless uniform system).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from emofuse.checkpoint import Checkpoint
from emofuse.labels import EMOTION_CLASSES, EMOTION_INDEX
from emofuse.nn.core import log_softmax
from emofuse.scorefile import ScoreMatrix, align_scores

LN2 = np.log(2.0)


@dataclass
class FusionConfig:
    max_iter: int = 20000
    grad_tol: float = 1e-7  # convergence: gradient infinity-norm below this
    per_class: bool = False


@dataclass
class FusionModel:
    """alpha: (K,) scalars, or (K, C) with per-class weights; beta: (C,)."""

    alpha: np.ndarray
    beta: np.ndarray
    system_ids: tuple[str, ...]

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.system_ids = tuple(self.system_ids)
        k = len(self.system_ids)
        if k < 1:
            raise ValueError("fusion needs at least one input system")
        if self.alpha.shape not in ((k,), (k, self.beta.shape[0])):
            raise ValueError(
                f"alpha shape {self.alpha.shape} incompatible with {k} systems "
                f"and beta shape {self.beta.shape}"
            )
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.beta))):
            raise ValueError("non-finite fusion parameters")

    @property
    def per_class(self) -> bool:
        return self.alpha.ndim == 2


def multiclass_cllr(scores: ScoreMatrix, labels: dict[str, str]) -> tuple[float, float]:
    """(bits, bits normalized by log2 C). Rows are re-normalized first, so
    uniform posteriors over 8 classes score exactly 3.0 bits."""
    missing = [u for u in scores.ids if u not in labels]
    if missing:
        raise ValueError(f"no label for utterances {missing[:5]}")
    y = np.array([EMOTION_INDEX[labels[u]] for u in scores.ids])
    logp = log_softmax(scores.values)
    bits_per_item = -logp[np.arange(len(y)), y] / LN2
    bits = float(bits_per_item.mean())
    return bits, bits / float(np.log2(scores.num_classes))


def _stack(matrices: list[ScoreMatrix]) -> tuple[np.ndarray, tuple[str, ...], tuple[str, ...]]:
    aligned = align_scores(matrices)
    s = np.stack([m.values for m in aligned])  # (K, N, C)
    return s, aligned[0].ids, tuple(m.model_id for m in aligned)


def _combine(s: np.ndarray, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    if alpha.ndim == 1:
        z = np.tensordot(alpha, s, axes=1)
    else:
        z = (alpha[:, None, :] * s).sum(axis=0)
    return z + beta


def _objective_and_grad(s, y_idx, alpha, beta):
    _, n, _ = s.shape
    z = _combine(s, alpha, beta)
    logp = log_softmax(z)
    f = -float(logp[np.arange(n), y_idx].mean())
    g = np.exp(logp)
    g[np.arange(n), y_idx] -= 1.0
    g /= n
    d_beta = g.sum(axis=0)
    if alpha.ndim == 1:
        d_alpha = np.einsum("nc,knc->k", g, s)
    else:
        d_alpha = np.einsum("nc,knc->kc", g, s)
    return f, d_alpha, d_beta


def fusion_objective(model: FusionModel, matrices: list[ScoreMatrix], labels: dict[str, str]) -> float:
    """Mean cross-entropy (nats) of the fused scores; what fit_fusion minimizes."""
    s, ids, system_ids = _stack(matrices)
    if system_ids != model.system_ids:
        raise ValueError(f"system order {system_ids} does not match model {model.system_ids}")
    y_idx = np.array([EMOTION_INDEX[labels[u]] for u in ids])
    f, _, _ = _objective_and_grad(s, y_idx, model.alpha, model.beta)
    return f


def fit_fusion(
    matrices: list[ScoreMatrix],
    labels: dict[str, str],
    config: FusionConfig | None = None,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> FusionModel:
    """Fit (alpha, beta) by accelerated gradient descent with backtracking.

    The returned parameters are the best point ever evaluated, which
    includes the initialization and every pure single-system selection
    (alpha = one-hot, beta = 0). The affine family contains those corners,
    so the fitted combiner never scores worse on its training fold than the
    best single input system.
    """
    config = config or FusionConfig()
    s, ids, system_ids = _stack(matrices)
    k, n, c = s.shape
    missing = [u for u in ids if u not in labels]
    if missing:
        raise ValueError(f"no label for utterances {missing[:5]}")
    y_idx = np.array([EMOTION_INDEX[labels[u]] for u in ids])
    if len(set(y_idx.tolist())) < 2:
        raise ValueError("cannot fit fusion on single-class labels")

    if init is not None:
        alpha = np.array(init[0], dtype=np.float64)
        beta = np.array(init[1], dtype=np.float64)
        if config.per_class and alpha.ndim == 1:
            alpha = np.repeat(alpha[:, None], c, axis=1)
    elif config.per_class:
        alpha = np.full((k, c), 1.0 / k)
        beta = np.zeros(c)
    else:
        alpha = np.full(k, 1.0 / k)
        beta = np.zeros(c)

    def pack(a, b):
        return np.concatenate([a.ravel(), b])

    def unpack(theta):
        a = theta[: alpha.size].reshape(alpha.shape)
        return a, theta[alpha.size :]

    def fg(theta):
        a, b = unpack(theta)
        f, da, db = _objective_and_grad(s, y_idx, a, b)
        return f, pack(da, db)

    # Track the best point ever seen; seed with the init and all corners.
    x = pack(alpha, beta)
    f_x, g_x = fg(x)
    best_f, best_x = f_x, x.copy()
    for j in range(k):
        corner_a = np.zeros(alpha.shape)
        corner_a[j] = 1.0
        corner = pack(corner_a, np.zeros(c))
        f_c, _ = fg(corner)
        if f_c < best_f:
            best_f, best_x = f_c, corner

    # Accelerated descent with backtracking and function-value restarts.
    lip = 1.0
    momentum = x.copy()
    t_mom = 1.0
    for _ in range(config.max_iter):
        f_y, g_y = fg(momentum)
        g_norm_sq = float(g_y @ g_y)
        while True:
            x_next = momentum - g_y / lip
            f_next, _ = fg(x_next)
            if f_next <= f_y - 0.5 * g_norm_sq / lip or lip > 1e18:
                break
            lip *= 2.0
        if f_next < best_f:
            best_f, best_x = f_next, x_next.copy()
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        momentum_next = x_next + ((t_mom - 1.0) / t_next) * (x_next - x)
        if f_next > f_x:  # lost monotonicity: drop the momentum
            momentum_next = x_next
            t_next = 1.0
        x, f_x = x_next, f_next
        momentum, t_mom = momentum_next, t_next
        lip *= 0.9
        _, g_now = fg(x)
        if float(np.abs(g_now).max()) < config.grad_tol:
            if f_x < best_f:
                best_f, best_x = f_x, x.copy()
            break

    a, b = unpack(best_x)
    return FusionModel(alpha=a, beta=b, system_ids=system_ids)


def apply_fusion(model: FusionModel, matrices: list[ScoreMatrix]) -> ScoreMatrix:
    """Fused rows: log-softmax(sum_k alpha_k * s_k + beta), keyed by id."""
    s, ids, system_ids = _stack(matrices)
    if system_ids != model.system_ids:
        raise ValueError(
            f"system order {system_ids} does not match fitted model {model.system_ids}"
        )
    z = _combine(s, model.alpha, model.beta)
    return ScoreMatrix(ids=ids, values=log_softmax(z), model_id="fusion")


def fusion_to_checkpoint(model: FusionModel, config_echo: dict | None = None) -> Checkpoint:
    return Checkpoint(
        kind="fusion",
        architecture={"system_ids": list(model.system_ids), "per_class": model.per_class},
        params={"alpha": model.alpha, "beta": model.beta},
        labels={"emotion": list(EMOTION_CLASSES)},
        config=config_echo or {},
    )


def fusion_from_checkpoint(ckpt: Checkpoint) -> FusionModel:
    if ckpt.kind != "fusion":
        raise ValueError(f"checkpoint kind {ckpt.kind!r} is not a fusion model")
    return FusionModel(
        alpha=ckpt.param("alpha"),
        beta=ckpt.param("beta"),
        system_ids=tuple(ckpt.architecture["system_ids"]),
    )
