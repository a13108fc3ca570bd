"""Feature normalization and the stratified validation split."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from emofuse.dsp import FrameFeatureMatrix
from emofuse.labels import EMOTION_CLASSES

STD_FLOOR = 1e-8


@dataclass
class NormalizationStats:
    """Per-dimension mean/std fitted on the training split only.

    std is stored raw; apply_znorm floors it at 1e-8 and zeroes dimensions
    whose raw std falls below the floor (effectively constant dimensions).
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean/std must be 1-D vectors of equal length")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_znorm(train_vectors: np.ndarray) -> NormalizationStats:
    """Population mean/std over the rows of an (N, D) training matrix."""
    x = np.asarray(train_vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"expected non-empty (N, D) matrix, got shape {x.shape}")
    return NormalizationStats(mean=x.mean(axis=0), std=x.std(axis=0))


def apply_znorm(vectors: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """(x - mean)/std per dimension; accepts a single vector or an (N, D) batch."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.shape[-1] != stats.dim:
        raise ValueError(f"dimension mismatch: input {x.shape[-1]}, stats {stats.dim}")
    dead = stats.std < STD_FLOOR
    z = (x - stats.mean) / np.maximum(stats.std, STD_FLOOR)
    return np.where(dead, 0.0, z)


def standardize_columns(values: np.ndarray) -> np.ndarray:
    """Per-column standardization of a (T, D) array within one utterance;
    constant columns and single-frame inputs map to zero."""
    x = np.asarray(values, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    dead = std < STD_FLOOR
    z = (x - mean) / np.maximum(std, STD_FLOOR)
    return np.where(dead, 0.0, z)


def znorm_sequence(m: FrameFeatureMatrix) -> FrameFeatureMatrix:
    return FrameFeatureMatrix(
        values=standardize_columns(m.values),
        feature_names=m.feature_names,
        frame_ms=m.frame_ms,
        hop_ms=m.hop_ms,
    )


def split_validation(records, fraction: float = 0.10, seed: int = 0):
    """Stratified train/validation split of manifest records.

    Per emotion class, round(n * fraction) items go to validation (at least
    1 when the class has 2+ items, never all of them). Both outputs keep
    the incoming record order; the same seed always yields the same split.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng([seed, zlib.crc32(b"validation-split")])
    val_ids: set[str] = set()
    for cls in EMOTION_CLASSES:
        members = [r for r in records if r.emotion == cls]
        n = len(members)
        if n < 2:
            continue
        n_val = min(n - 1, max(1, int(np.floor(n * fraction + 0.5))))
        picked = rng.permutation(n)[:n_val]
        val_ids.update(members[i].id for i in picked)
    train = [r for r in records if r.id not in val_ids]
    val = [r for r in records if r.id in val_ids]
    return train, val
