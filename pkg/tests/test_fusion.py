"""Affine score fusion: Cllr oracle values, convexity, single-system bound."""

import numpy as np
import pytest
from scipy.special import log_softmax

from emofuse.checkpoint import load_checkpoint, save_checkpoint
from emofuse.fusion import (
    FusionConfig,
    FusionModel,
    apply_fusion,
    fit_fusion,
    fusion_from_checkpoint,
    fusion_objective,
    fusion_to_checkpoint,
    multiclass_cllr,
)
from emofuse.labels import EMOTION_CLASSES
from emofuse.scorefile import ScoreMatrix

C = len(EMOTION_CLASSES)


def _uniform_matrix(n, model_id="u"):
    vals = np.full((n, C), -np.log(C))
    return ScoreMatrix(
        ids=tuple(f"utt{i}" for i in range(n)), values=vals, model_id=model_id
    )


def _labels(ids, seed=0):
    rng = np.random.default_rng(seed)
    return {u: EMOTION_CLASSES[int(rng.integers(C))] for u in ids}


def _random_system(ids, seed, sharp, truth):
    """Log-posteriors correlated with the truth; higher sharp = more accurate."""
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(len(ids), C))
    for i, u in enumerate(ids):
        raw[i, EMOTION_CLASSES.index(truth[u])] += sharp
    return ScoreMatrix(ids=ids, values=log_softmax(raw, axis=1), model_id=f"sys{seed}")


def test_uniform_posteriors_score_three_bits_exactly():
    m = _uniform_matrix(12)
    labels = _labels(m.ids, seed=1)
    bits, norm = multiclass_cllr(m, labels)
    assert bits == 3.0  # log2(8) with no floating-point slack
    assert norm == 1.0


def test_certain_correct_posteriors_near_zero_bits():
    ids = tuple(f"u{i}" for i in range(8))
    labels = {u: EMOTION_CLASSES[i] for i, u in enumerate(ids)}
    raw = np.full((8, C), -40.0)
    for i in range(8):
        raw[i, i] = 0.0
    m = ScoreMatrix(ids=ids, values=log_softmax(raw, axis=1), model_id="x")
    bits, _ = multiclass_cllr(m, labels)
    assert bits < 1e-10


def test_cllr_missing_label():
    m = _uniform_matrix(2)
    with pytest.raises(ValueError, match="no label"):
        multiclass_cllr(m, {"utt0": "angry"})


def test_model_shape_validation():
    with pytest.raises(ValueError, match="at least one"):
        FusionModel(alpha=np.array([]), beta=np.zeros(C), system_ids=())
    with pytest.raises(ValueError, match="incompatible"):
        FusionModel(alpha=np.ones(3), beta=np.zeros(C), system_ids=("a", "b"))
    with pytest.raises(ValueError, match="non-finite"):
        FusionModel(alpha=np.array([np.nan]), beta=np.zeros(C), system_ids=("a",))


def test_per_class_flag():
    m1 = FusionModel(alpha=np.ones(2), beta=np.zeros(C), system_ids=("a", "b"))
    m2 = FusionModel(alpha=np.ones((2, C)), beta=np.zeros(C), system_ids=("a", "b"))
    assert not m1.per_class
    assert m2.per_class


def test_restarts_agree_to_tight_tolerance():
    # Convex objective: different starting points must reach the same value.
    ids = tuple(f"u{i}" for i in range(60))
    truth = _labels(ids, seed=3)
    mats = [
        _random_system(ids, seed=10, sharp=1.5, truth=truth),
        _random_system(ids, seed=11, sharp=0.7, truth=truth),
        _random_system(ids, seed=12, sharp=2.2, truth=truth),
    ]
    cfg = FusionConfig(max_iter=20000, grad_tol=1e-9)
    rng = np.random.default_rng(99)
    finals = []
    for _ in range(5):
        init = (rng.normal(scale=2.0, size=3), rng.normal(scale=2.0, size=C))
        model = fit_fusion(mats, truth, cfg, init=init)
        finals.append(fusion_objective(model, mats, truth))
    assert max(finals) - min(finals) < 1e-6


def test_fused_never_worse_than_best_input():
    ids = tuple(f"u{i}" for i in range(80))
    truth = _labels(ids, seed=4)
    mats = [
        _random_system(ids, seed=20, sharp=2.0, truth=truth),
        _random_system(ids, seed=21, sharp=0.2, truth=truth),
    ]
    model = fit_fusion(mats, truth, FusionConfig())
    fused = apply_fusion(model, mats)
    fused_bits, _ = multiclass_cllr(fused, truth)
    single_bits = [multiclass_cllr(m, truth)[0] for m in mats]
    assert fused_bits <= min(single_bits) + 1e-6


def test_fusion_helps_when_systems_complement():
    # Two systems wrong on disjoint halves; the sum is right everywhere.
    ids = tuple(f"u{i}" for i in range(40))
    truth = {u: EMOTION_CLASSES[i % C] for i, u in enumerate(ids)}
    raw_a = np.zeros((40, C))
    raw_b = np.zeros((40, C))
    for i, u in enumerate(ids):
        t = EMOTION_CLASSES.index(truth[u])
        if i < 20:
            raw_a[i, t] = 6.0
            raw_b[i, (t + 1) % C] = 2.0
        else:
            raw_b[i, t] = 6.0
            raw_a[i, (t + 1) % C] = 2.0
    a = ScoreMatrix(ids=ids, values=log_softmax(raw_a, axis=1), model_id="a")
    b = ScoreMatrix(ids=ids, values=log_softmax(raw_b, axis=1), model_id="b")
    model = fit_fusion([a, b], truth, FusionConfig())
    fused_bits, _ = multiclass_cllr(apply_fusion(model, [a, b]), truth)
    best_single = min(multiclass_cllr(m, truth)[0] for m in (a, b))
    assert fused_bits < best_single - 0.1


def test_per_class_mode_fits_and_scores():
    ids = tuple(f"u{i}" for i in range(50))
    truth = _labels(ids, seed=5)
    mats = [
        _random_system(ids, seed=30, sharp=1.0, truth=truth),
        _random_system(ids, seed=31, sharp=1.0, truth=truth),
    ]
    model = fit_fusion(mats, truth, FusionConfig(per_class=True))
    assert model.per_class
    assert model.alpha.shape == (2, C)
    fused = apply_fusion(model, mats)
    scalar = fit_fusion(mats, truth, FusionConfig(per_class=False))
    # richer family: objective no worse than the scalar fit's
    assert fusion_objective(model, mats, truth) <= fusion_objective(
        scalar, mats, truth
    ) + 1e-9
    assert fused.model_id == "fusion"


def test_apply_checks_system_order():
    ids = tuple(f"u{i}" for i in range(10))
    truth = _labels(ids, seed=6)
    a = _random_system(ids, seed=40, sharp=1.0, truth=truth)
    b = _random_system(ids, seed=41, sharp=1.0, truth=truth)
    model = fit_fusion([a, b], truth, FusionConfig())
    with pytest.raises(ValueError, match="does not match"):
        apply_fusion(model, [b, a])


def test_single_class_labels_rejected():
    ids = tuple(f"u{i}" for i in range(6))
    truth = {u: "angry" for u in ids}
    a = _random_system(ids, seed=50, sharp=1.0, truth=truth)
    with pytest.raises(ValueError, match="single-class"):
        fit_fusion([a], truth, FusionConfig())


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    ids = tuple(f"u{i}" for i in range(30))
    truth = _labels(ids, seed=7)
    mats = [
        _random_system(ids, seed=60, sharp=1.0, truth=truth),
        _random_system(ids, seed=61, sharp=0.5, truth=truth),
    ]
    model = fit_fusion(mats, truth, FusionConfig())
    path = tmp_path / "fusion.ckpt"
    save_checkpoint(fusion_to_checkpoint(model, {"seed": 7}), path)
    back = fusion_from_checkpoint(load_checkpoint(path))
    assert back.system_ids == model.system_ids
    assert np.array_equal(back.alpha, model.alpha)
    assert np.array_equal(back.beta, model.beta)
    before = apply_fusion(model, mats)
    after = apply_fusion(back, mats)
    assert np.array_equal(before.values, after.values)


def test_fusion_from_wrong_kind(tmp_path):
    from emofuse.checkpoint import Checkpoint

    ckpt = Checkpoint(kind="dnn_functionals", architecture={}, params={})
    with pytest.raises(ValueError, match="not a fusion model"):
        fusion_from_checkpoint(ckpt)
