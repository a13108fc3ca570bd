"""Experiment orchestration: extract, normalize, train the four
sub-systems, score, fuse on validation, evaluate on test.

A run directory is self-contained: resolved config echo, feature files,
checkpoints, score files, reports, and plots. RUN_STATE holds "complete"
or "failed:<stage>" so partial runs are never mistaken for finished ones.
Reports contain no timestamps and are derived from the serialized score
files, so a finished run directory regenerates them byte-identically.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from emofuse.audio import canonicalize, decode_wav
from emofuse.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from emofuse.config import ExperimentConfig, dump_config
from emofuse.dsp import (
    LLD_NAMES,
    assemble_llds,
    compute_deltas,
    estimate_snr,
    functional_feature_names,
    utterance_functionals,
)
from emofuse.errors import EmofuseError
from emofuse.featio import load_embedding, read_features, write_features
from emofuse.fusion import (
    FusionConfig,
    FusionModel,
    apply_fusion,
    fit_fusion,
    fusion_from_checkpoint,
    fusion_to_checkpoint,
    multiclass_cllr,
)
from emofuse.labels import EMOTION_CLASSES, EMOTION_INDEX, GENDER_INDEX, GENDERS
from emofuse.lexical import (
    fit_tfidf,
    svm_from_checkpoint,
    svm_scores,
    svm_to_checkpoint,
    tokenize,
    train_cs_svm,
    transform_corpus,
)
from emofuse.manifest import UtteranceRecord, format_stats, load_manifest, manifest_stats
from emofuse.metrics import (
    EvaluationReport,
    confusion_matrix,
    evaluate_scores,
    format_report,
    macro_f1,
)
from emofuse.models import (
    AttentionRnnConfig,
    AttentionRnnMultiTask,
    FeedForwardMultiTask,
    SequenceDataset,
    VectorDataset,
    embedding_dnn_config,
    functional_dnn_config,
    make_task_spec,
    model_from_checkpoint,
    model_to_checkpoint,
    predict_scores,
    train_model,
)
from emofuse.normalize import (
    NormalizationStats,
    apply_znorm,
    fit_znorm,
    split_validation,
    standardize_columns,
)
from emofuse.scorefile import ScoreMatrix, read_scores, write_scores

NEURAL_SYSTEMS = ("dnn_functionals", "dnn_embedding", "attention_rnn")
SPLIT_NAMES = ("train", "val", "test")


class PipelineError(EmofuseError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {message}")


# ---------------------------------------------------------------------------
# corpus loading and feature extraction


@dataclass
class RunSplits:
    """Manifest records partitioned for one experiment.

    train is the training partition minus the validation split; train_all
    is the full training partition (the population the normalization
    stats, speaker vocabulary, and majority baseline come from).
    """

    records: list[UtteranceRecord]
    train_all: list[UtteranceRecord]
    train: list[UtteranceRecord]
    val: list[UtteranceRecord]
    test: list[UtteranceRecord]

    def by_name(self, split: str) -> list[UtteranceRecord]:
        if split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {split!r}")
        return {"train": self.train, "val": self.val, "test": self.test}[split]


def load_run_splits(cfg: ExperimentConfig) -> RunSplits:
    if not cfg.manifest:
        raise EmofuseError("config has no manifest path")
    records = load_manifest(cfg.manifest)
    train_all = [r for r in records if r.partition == "train"]
    test = [r for r in records if r.partition == "test"]
    if not train_all or not test:
        raise EmofuseError("manifest must contain both train and test partitions")
    train, val = split_validation(train_all, fraction=cfg.validation_fraction, seed=cfg.seed)
    if not val:
        raise EmofuseError("validation split is empty; corpus too small for the fraction")
    return RunSplits(records=records, train_all=train_all, train=train, val=val, test=test)


@dataclass
class ExtractedFeatures:
    llds: dict[str, np.ndarray]  # id -> (T, 36)
    functionals: dict[str, np.ndarray]  # id -> (1512,)
    snr_db: dict[str, float] | None
    embeddings: dict[str, np.ndarray] | None  # id -> (200,), when available


def _extract_one(rec: UtteranceRecord):
    w = canonicalize(decode_wav(rec.audio_path))
    llds = assemble_llds(w)
    snr = estimate_snr(w)
    func = utterance_functionals(compute_deltas(llds))
    return rec.id, llds.values, func, snr


def extract_features(
    records: list[UtteranceRecord], workers: int = 4, embedding_dim: int | None = 200
) -> ExtractedFeatures:
    """Per-utterance frame descriptors, functional vectors, SNR, embeddings.

    Extraction is pure per item, so it fans out over a thread pool; results
    are re-keyed in manifest order so every downstream artifact is
    deterministic regardless of scheduling.
    """
    llds: dict[str, np.ndarray] = {}
    funcs: dict[str, np.ndarray] = {}
    snrs: dict[str, float] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for utt_id, lld, func, snr in pool.map(_extract_one, records):
            llds[utt_id] = lld
            funcs[utt_id] = func
            snrs[utt_id] = snr
    llds = {r.id: llds[r.id] for r in records}
    funcs = {r.id: funcs[r.id] for r in records}
    snrs = {r.id: snrs[r.id] for r in records}

    embeddings = None
    if all(r.embedding_path is not None for r in records):
        embeddings = {
            r.id: load_embedding(r.embedding_path, expected_dim=embedding_dim) for r in records
        }
    return ExtractedFeatures(llds=llds, functionals=funcs, snr_db=snrs, embeddings=embeddings)


def write_feature_files(run_dir: Path, records: list[UtteranceRecord], feats: ExtractedFeatures):
    feat_dir = run_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    delta_names = LLD_NAMES + tuple(f"{n}_delta" for n in LLD_NAMES)
    write_features(
        feat_dir / "llds.feat",
        "llds",
        feats.llds,
        feature_names=LLD_NAMES,
        frame_ms=25,
        hop_ms=10,
    )
    write_features(
        feat_dir / "functionals.feat",
        "functionals",
        feats.functionals,
        feature_names=functional_feature_names(delta_names),
    )
    if feats.embeddings is not None:
        write_features(feat_dir / "embeddings.feat", "embedding", feats.embeddings)
    if feats.snr_db is not None:
        lines = ["#id\tsnr_db"] + [f"{r.id}\t{feats.snr_db[r.id]:.4f}" for r in records]
        (feat_dir / "snr.tsv").write_text("\n".join(lines) + "\n")


def _read_feature_table(run_dir: Path, stem: str) -> dict[str, np.ndarray]:
    path = run_dir / "features" / f"{stem}.feat"
    if not path.exists():
        raise EmofuseError(f"missing feature file {path}; run the extract step first")
    _, table, _ = read_features(path)
    return table


def load_extracted(run_dir: Path, need: tuple[str, ...]) -> ExtractedFeatures:
    """Reload previously extracted features from a run directory."""
    llds = _read_feature_table(run_dir, "llds") if "llds" in need else {}
    funcs = _read_feature_table(run_dir, "functionals") if "functionals" in need else {}
    emb = None
    if "embeddings" in need:
        emb = _read_feature_table(run_dir, "embeddings")
    return ExtractedFeatures(llds=llds, functionals=funcs, snr_db=None, embeddings=emb)


# ---------------------------------------------------------------------------
# datasets and labels


def _label_arrays(
    records: list[UtteranceRecord], speaker_index: dict[str, int] | None = None
) -> dict[str, np.ndarray]:
    labels = {"emotion": np.array([EMOTION_INDEX[r.emotion] for r in records], dtype=np.int64)}
    if speaker_index is not None:
        labels["speaker"] = np.array(
            [speaker_index[r.speaker_id] for r in records], dtype=np.int64
        )
        labels["gender"] = np.array([GENDER_INDEX[r.gender] for r in records], dtype=np.int64)
    return labels


def _true_labels(records: list[UtteranceRecord]) -> dict[str, str]:
    return {r.id: r.emotion for r in records}


def speaker_vocabulary(splits: RunSplits) -> list[str]:
    return sorted({r.speaker_id for r in splits.train_all})


def _majority_baseline_maf(splits: RunSplits) -> float:
    counts = {c: 0 for c in EMOTION_CLASSES}
    for r in splits.train_all:
        counts[r.emotion] += 1
    majority = max(EMOTION_CLASSES, key=lambda c: counts[c])
    conf = confusion_matrix(
        [r.emotion for r in splits.test], [majority] * len(splits.test), EMOTION_CLASSES
    )
    _, maf = macro_f1(conf)
    return maf


def _vector_datasets(
    splits: RunSplits,
    table: dict[str, np.ndarray],
    stats: NormalizationStats,
    speaker_index: dict[str, int],
) -> dict[str, VectorDataset]:
    out = {}
    for split in SPLIT_NAMES:
        recs = splits.by_name(split)
        # test speakers may be unseen; aux labels are train/val only
        spk = speaker_index if split != "test" else None
        out[split] = VectorDataset(
            ids=tuple(r.id for r in recs),
            x=apply_znorm(np.stack([table[r.id] for r in recs]), stats),
            labels=_label_arrays(recs, spk),
        )
    return out


def _sequence_datasets(
    splits: RunSplits,
    llds: dict[str, np.ndarray],
    speaker_index: dict[str, int],
) -> dict[str, SequenceDataset]:
    normed = {r.id: standardize_columns(llds[r.id]) for r in splits.records if r.id in llds}
    out = {}
    for split in SPLIT_NAMES:
        recs = splits.by_name(split)
        spk = speaker_index if split != "test" else None
        out[split] = SequenceDataset(
            ids=tuple(r.id for r in recs),
            sequences=[normed[r.id] for r in recs],
            labels=_label_arrays(recs, spk),
        )
    return out


# ---------------------------------------------------------------------------
# training one sub-system


@dataclass
class TrainedSystem:
    system: str
    model: object  # FeedForwardMultiTask | AttentionRnnMultiTask | CsSvmModel
    history: list[dict] | None
    norm: NormalizationStats | None
    datasets: dict[str, object] | None  # split -> dataset, neural systems only


def train_subsystem(
    cfg: ExperimentConfig,
    system: str,
    splits: RunSplits,
    feats: ExtractedFeatures,
) -> TrainedSystem:
    """Fit one sub-system on train', model-select on validation."""
    if system == "lexical_svm":
        svm = _train_lexical(cfg, splits.train)
        return TrainedSystem(system=system, model=svm, history=None, norm=None, datasets=None)

    speaker_index = {s: i for i, s in enumerate(speaker_vocabulary(splits))}
    tasks = make_task_spec(len(speaker_index), cfg.task_weights)
    norm = None
    if system == "dnn_functionals":
        norm = fit_znorm(np.stack([feats.functionals[r.id] for r in splits.train]))
        datasets = _vector_datasets(splits, feats.functionals, norm, speaker_index)
        mc = functional_dnn_config(
            tasks,
            dropout=cfg.dropout,
            lr=cfg.dnn_functionals.lr,
            epochs=cfg.dnn_functionals.epochs,
            batch_size=cfg.batch_size,
            seed=cfg.seed,
            scale_factor=cfg.scale_factor,
            early_stop_patience=cfg.dnn_functionals.early_stop_patience,
        )
        model = FeedForwardMultiTask(mc)
    elif system == "dnn_embedding":
        if feats.embeddings is None:
            raise EmofuseError(
                "dnn_embedding is enabled but the corpus has no embedding vectors; "
                "disable the sub-system or fix the manifest"
            )
        norm = fit_znorm(np.stack([feats.embeddings[r.id] for r in splits.train]))
        datasets = _vector_datasets(splits, feats.embeddings, norm, speaker_index)
        mc = embedding_dnn_config(
            tasks,
            input_dim=cfg.embedding_dim,
            dropout=cfg.dropout,
            lr=cfg.dnn_embedding.lr,
            epochs=cfg.dnn_embedding.epochs,
            batch_size=cfg.batch_size,
            seed=cfg.seed,
            scale_factor=cfg.scale_factor,
            early_stop_patience=cfg.dnn_embedding.early_stop_patience,
        )
        model = FeedForwardMultiTask(mc)
    elif system == "attention_rnn":
        datasets = _sequence_datasets(splits, feats.llds, speaker_index)
        mc = AttentionRnnConfig(
            tasks=tasks,
            dropout=cfg.dropout,
            lr=cfg.attention_rnn.lr,
            epochs=cfg.attention_rnn.epochs,
            batch_size=cfg.batch_size,
            seed=cfg.seed,
            scale_factor=cfg.scale_factor,
            early_stop_patience=cfg.attention_rnn.early_stop_patience,
            clip_norm=cfg.attention_rnn.clip_norm,
        )
        model = AttentionRnnMultiTask(mc)
    else:
        raise EmofuseError(f"unknown sub-system {system!r}")

    history = train_model(model, datasets["train"], datasets["val"], mc)
    return TrainedSystem(
        system=system, model=model, history=history.epochs, norm=norm, datasets=datasets
    )


def trained_checkpoint(trained: TrainedSystem, cfg: ExperimentConfig, splits: RunSplits) -> Checkpoint:
    if trained.system == "lexical_svm":
        return svm_to_checkpoint(trained.model, {"seed": cfg.seed})
    labels_meta = {
        "emotion": list(EMOTION_CLASSES),
        "speaker": speaker_vocabulary(splits),
        "gender": list(GENDERS),
    }
    norm_payload = (
        {"mean": trained.norm.mean, "std": trained.norm.std} if trained.norm is not None else None
    )
    return model_to_checkpoint(
        trained.model,
        labels=labels_meta,
        normalization=norm_payload,
        config_echo={"seed": cfg.seed, "scale_factor": cfg.scale_factor},
    )


def trained_scores(trained: TrainedSystem, splits: RunSplits, split: str) -> ScoreMatrix:
    if trained.system == "lexical_svm":
        return _lexical_scores(trained.model, splits.by_name(split))
    return predict_scores(trained.model, trained.datasets[split], model_id=trained.system)


def _train_lexical(cfg: ExperimentConfig, train_records: list[UtteranceRecord]):
    with_text = [r for r in train_records if r.transcript is not None]
    if cfg.lexical_svm.missing_transcript == "error" and len(with_text) != len(train_records):
        missing = next(r.id for r in train_records if r.transcript is None)
        raise EmofuseError(
            f"utterance {missing!r} has no transcript and "
            "lexical_svm.missing_transcript is 'error'"
        )
    if not with_text:
        raise EmofuseError("no training transcripts available for the lexical sub-system")
    docs = [tokenize(r.transcript) for r in with_text]
    vocab = fit_tfidf(docs, min_df=cfg.lexical_svm.min_df)
    x = transform_corpus(docs, vocab)
    y = np.array([EMOTION_INDEX[r.emotion] for r in with_text], dtype=np.int64)
    return train_cs_svm(
        x,
        y,
        lam=cfg.lexical_svm.lam,
        epochs=cfg.lexical_svm.epochs,
        seed=cfg.seed,
        vocab=vocab,
    )


def _lexical_scores(svm, records: list[UtteranceRecord]) -> ScoreMatrix:
    # items without a transcript become zero vectors, hence uniform posteriors
    docs = [tokenize(r.transcript) if r.transcript else [] for r in records]
    x = transform_corpus(docs, svm.vocab)
    return svm_scores(svm, x, ids=tuple(r.id for r in records))


# ---------------------------------------------------------------------------
# scoring from a stored checkpoint (CLI `score`)


def score_checkpoint(cfg: ExperimentConfig, ckpt_path, split: str, run_dir: Path) -> ScoreMatrix:
    """Score one split with a stored model, reading features from the run
    directory and normalization stats from the checkpoint itself."""
    ckpt = load_checkpoint(ckpt_path)
    splits = load_run_splits(cfg)
    recs = splits.by_name(split)
    ids = tuple(r.id for r in recs)
    labels = {"emotion": np.array([EMOTION_INDEX[r.emotion] for r in recs], dtype=np.int64)}

    if ckpt.kind == "lexical_svm":
        return _lexical_scores(svm_from_checkpoint(ckpt), recs)
    if ckpt.kind == "fusion":
        raise EmofuseError("fusion checkpoints are applied with fuse-apply, not score")
    model = model_from_checkpoint(ckpt)
    model_id = ckpt.architecture.get("model_id", ckpt.kind)
    if ckpt.kind == "attention_rnn":
        llds = _read_feature_table(run_dir, "llds")
        data = SequenceDataset(
            ids=ids,
            sequences=[standardize_columns(llds[r.id]) for r in recs],
            labels=labels,
        )
        return predict_scores(model, data, model_id=model_id)
    stem = "embeddings" if model_id == "dnn_embedding" else "functionals"
    table = _read_feature_table(run_dir, stem)
    if ckpt.normalization is None:
        raise EmofuseError(f"checkpoint {ckpt_path} lacks normalization stats")
    stats = NormalizationStats(
        mean=ckpt.normalization["mean"], std=ckpt.normalization["std"]
    )
    x = apply_znorm(np.stack([table[r.id] for r in recs]), stats)
    data = VectorDataset(ids=ids, x=x, labels=labels)
    return predict_scores(model, data, model_id=model_id)


# ---------------------------------------------------------------------------
# fusion over stored score files


def _read_system_scores(run_dir: Path, system: str, split: str) -> ScoreMatrix:
    path = run_dir / "scores" / f"{system}.{split}.scores"
    if not path.exists():
        raise EmofuseError(f"missing score file {path}; run the score step first")
    return read_scores(path)


def fuse_train_run(cfg: ExperimentConfig, run_dir: Path) -> FusionModel:
    """Fit the affine combiner on the stored validation scores of every
    enabled sub-system; writes the fusion checkpoint and fused val scores."""
    splits = load_run_splits(cfg)
    enabled = cfg.enabled_subsystems()
    matrices = [_read_system_scores(run_dir, s, "val") for s in enabled]
    model = fit_fusion(
        matrices,
        _true_labels(splits.val),
        FusionConfig(
            max_iter=cfg.fusion.max_iter,
            grad_tol=cfg.fusion.grad_tol,
            per_class=cfg.fusion.per_class,
        ),
    )
    (run_dir / "models").mkdir(parents=True, exist_ok=True)
    save_checkpoint(fusion_to_checkpoint(model, {"seed": cfg.seed}), run_dir / "models" / "fusion.ckpt")
    write_scores(apply_fusion(model, matrices), run_dir / "scores" / "fusion.val.scores")
    return model


def fuse_apply_run(cfg: ExperimentConfig, run_dir: Path, split: str) -> Path:
    ckpt_path = run_dir / "models" / "fusion.ckpt"
    if not ckpt_path.exists():
        raise EmofuseError(f"missing {ckpt_path}; run fuse-train first")
    model = fusion_from_checkpoint(load_checkpoint(ckpt_path))
    matrices = [_read_system_scores(run_dir, s, split) for s in model.system_ids]
    out_path = run_dir / "scores" / f"fusion.{split}.scores"
    write_scores(apply_fusion(model, matrices), out_path)
    return out_path


# ---------------------------------------------------------------------------
# evaluation over stored score files


@dataclass
class EvaluationOutput:
    test_reports: dict[str, EvaluationReport]
    val_cllr_bits: dict[str, float]
    majority_baseline_maf: float
    systems: tuple[str, ...]  # enabled sub-systems, then "fusion" when present


def evaluate_run(cfg: ExperimentConfig, run_dir: Path) -> EvaluationOutput:
    """Regenerate reports and the summary table from stored score files.

    Reads only serialized scores (never in-memory model state), so a
    finished run directory always reproduces its reports byte-identically.
    """
    splits = load_run_splits(cfg)
    val_labels = _true_labels(splits.val)
    test_labels = _true_labels(splits.test)
    systems = list(cfg.enabled_subsystems())
    if (run_dir / "scores" / "fusion.test.scores").exists():
        systems.append("fusion")
    (run_dir / "reports").mkdir(parents=True, exist_ok=True)

    val_cllr: dict[str, float] = {}
    test_reports: dict[str, EvaluationReport] = {}
    summary = ["#system\ttest_maf\ttest_accuracy\tval_cllr_bits\tval_cllr_normalized"]
    for name in systems:
        val_m = _read_system_scores(run_dir, name, "val")
        test_m = _read_system_scores(run_dir, name, "test")
        bits, norm_bits = multiclass_cllr(val_m, val_labels)
        val_cllr[name] = bits
        report = evaluate_scores(test_m, test_labels)
        test_reports[name] = report
        (run_dir / "reports" / f"{name}.test.report.txt").write_text(
            format_report(report, name)
        )
        summary.append(
            f"{name}\t{report.maf_percent:.4f}\t{report.accuracy:.4f}"
            f"\t{bits:.6f}\t{norm_bits:.6f}"
        )
    majority_maf = _majority_baseline_maf(splits)
    summary.append(f"baseline_majority\t{100 * majority_maf:.4f}\t\t\t")
    (run_dir / "reports" / "summary.tsv").write_text("\n".join(summary) + "\n")
    return EvaluationOutput(
        test_reports=test_reports,
        val_cllr_bits=val_cllr,
        majority_baseline_maf=majority_maf,
        systems=tuple(systems),
    )


# ---------------------------------------------------------------------------
# full run


@dataclass
class RunResult:
    run_dir: Path
    test_reports: dict[str, EvaluationReport]
    val_cllr_bits: dict[str, float]
    histories: dict[str, list[dict]]
    majority_baseline_maf: float
    fusion_model: FusionModel
    enabled: tuple[str, ...]


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    run_dir = Path(cfg.out_dir)
    for sub in ("features", "models", "scores", "reports", "plots"):
        (run_dir / sub).mkdir(parents=True, exist_ok=True)
    state_path = run_dir / "RUN_STATE"
    state_path.write_text("running\n")
    current_stage = "setup"

    try:
        current_stage = "ingest"
        splits = load_run_splits(cfg)
        stats = manifest_stats(splits.records)
        (run_dir / "reports" / "corpus_stats.txt").write_text(format_stats(stats))
        dump_config(cfg, run_dir / "config.yaml")
        enabled = cfg.enabled_subsystems()
        if not enabled:
            raise EmofuseError("no sub-systems enabled")
        print(
            f"[ingest] {len(splits.train)} train / {len(splits.val)} val / "
            f"{len(splits.test)} test; systems: {', '.join(enabled)}"
        )

        current_stage = "extract"
        feats = extract_features(
            splits.records, workers=cfg.workers, embedding_dim=cfg.embedding_dim
        )
        if cfg.dnn_embedding.enabled and feats.embeddings is None:
            missing = next(r.id for r in splits.records if r.embedding_path is None)
            raise EmofuseError(
                f"dnn_embedding is enabled but utterance {missing!r} has no embedding; "
                "disable the sub-system or fix the manifest"
            )
        write_feature_files(run_dir, splits.records, feats)
        # train on the serialized features (float32 round-trip) so a stored
        # run directory and the step-by-step CLI reproduce this run bit-exactly
        need = ("llds", "functionals") + (
            ("embeddings",) if feats.embeddings is not None else ()
        )
        reloaded = load_extracted(run_dir, need)
        feats = ExtractedFeatures(
            llds=reloaded.llds,
            functionals=reloaded.functionals,
            snr_db=feats.snr_db,
            embeddings=reloaded.embeddings,
        )
        print(f"[extract] {len(splits.records)} utterances featurized")

        current_stage = "train"
        histories: dict[str, list[dict]] = {}
        for system in enabled:
            trained = train_subsystem(cfg, system, splits, feats)
            save_checkpoint(
                trained_checkpoint(trained, cfg, splits),
                run_dir / "models" / f"{system}.ckpt",
            )
            for split in ("val", "test"):
                write_scores(
                    trained_scores(trained, splits, split),
                    run_dir / "scores" / f"{system}.{split}.scores",
                )
            if trained.history is not None:
                histories[system] = trained.history
                best = max((e["val_maf"] for e in trained.history), default=0.0)
                print(
                    f"[train] {system}: {len(trained.history)} epochs, "
                    f"best val MAF {best:.3f}"
                )
            else:
                print(
                    f"[train] {system}: vocab {trained.model.vocab.size}, "
                    f"final objective {trained.model.objective_history[-1]:.4f}"
                )

        current_stage = "fuse"
        fusion_model = fuse_train_run(cfg, run_dir)
        fuse_apply_run(cfg, run_dir, "test")
        alpha = fusion_model.alpha if not fusion_model.per_class else fusion_model.alpha.mean(axis=1)
        print(
            "[fuse] alpha: "
            + ", ".join(f"{n}={a:.3f}" for n, a in zip(fusion_model.system_ids, alpha))
        )

        current_stage = "evaluate"
        ev = evaluate_run(cfg, run_dir)
        for name in ev.systems:
            r = ev.test_reports[name]
            print(
                f"[evaluate] {name}: test MAF {r.maf_percent:.2f}, "
                f"acc {r.accuracy:.2f}, val Cllr {ev.val_cllr_bits[name]:.3f} bits"
            )

        if cfg.report.plots:
            current_stage = "plots"
            from emofuse import plots

            for name, report in ev.test_reports.items():
                plots.confusion_heatmap(
                    report, f"{name} (test)", run_dir / "plots" / f"{name}.confusion.png"
                )
            counts = {part: stats.partitions[part].class_counts for part in ("train", "test")}
            plots.class_distribution(counts, run_dir / "plots" / "class_distribution.png")
            plots.snr_histogram(
                [feats.snr_db[r.id] for r in splits.records],
                run_dir / "plots" / "snr_histogram.png",
            )
            if histories:
                plots.training_curves(histories, run_dir / "plots" / "training_curves.png")

        state_path.write_text("complete\n")
        return RunResult(
            run_dir=run_dir,
            test_reports=ev.test_reports,
            val_cllr_bits=ev.val_cllr_bits,
            histories=histories,
            majority_baseline_maf=ev.majority_baseline_maf,
            fusion_model=fusion_model,
            enabled=enabled,
        )
    except EmofuseError as e:
        state_path.write_text(f"failed:{current_stage}\n")
        if isinstance(e, PipelineError):
            raise
        raise PipelineError(current_stage, str(e)) from e
    except Exception as e:
        state_path.write_text(f"failed:{current_stage}\n")
        raise PipelineError(current_stage, f"unexpected {type(e).__name__}: {e}") from e
