"""Command-line surface.

Every subcommand accepts --config/--seed/--out-dir; the granular stages
(extract, train-*, score, fuse-*, evaluate) all operate on the same run
directory layout that `run` produces, so a full experiment can be driven
either in one shot or step by step. Exit code 0 only on full success.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from emofuse.config import ExperimentConfig, load_config
from emofuse.errors import EmofuseError


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out-dir", help="override the run directory")


def _resolve(args, manifest_required: bool = True) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir:
        cfg.out_dir = args.out_dir
    if getattr(args, "manifest", None):
        cfg.manifest = args.manifest
    if manifest_required and not cfg.manifest:
        raise EmofuseError("no manifest given (positional argument or config `manifest:` key)")
    return cfg


def _run_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out_dir)


def cmd_ingest(args) -> int:
    from emofuse.manifest import format_stats, load_manifest, manifest_stats

    cfg = _resolve(args)
    records = load_manifest(cfg.manifest, check_files=not args.skip_file_check)
    stats = manifest_stats(records, with_audio=args.audio_stats)
    print(format_stats(stats), end="")
    print(f"manifest ok: {len(records)} records")
    return 0


def cmd_extract(args) -> int:
    from emofuse import pipeline

    cfg = _resolve(args)
    if args.workers is not None:
        cfg.workers = args.workers
    splits = pipeline.load_run_splits(cfg)
    feats = pipeline.extract_features(
        splits.records, workers=cfg.workers, embedding_dim=cfg.embedding_dim
    )
    run_dir = _run_dir(cfg)
    pipeline.write_feature_files(run_dir, splits.records, feats)
    wrote = ["llds.feat", "functionals.feat", "snr.tsv"]
    if feats.embeddings is not None:
        wrote.append("embeddings.feat")
    print(f"extracted {len(splits.records)} utterances -> {run_dir / 'features'}")
    print("wrote: " + ", ".join(sorted(wrote)))
    return 0


def _train_one(args, system: str, need: tuple[str, ...]) -> int:
    from emofuse import pipeline
    from emofuse.checkpoint import save_checkpoint

    cfg = _resolve(args)
    run_dir = _run_dir(cfg)
    splits = pipeline.load_run_splits(cfg)
    feats = pipeline.load_extracted(run_dir, need) if need else pipeline.ExtractedFeatures(
        llds={}, functionals={}, snr_db=None, embeddings=None
    )
    trained = pipeline.train_subsystem(cfg, system, splits, feats)
    (run_dir / "models").mkdir(parents=True, exist_ok=True)
    ckpt_path = run_dir / "models" / f"{system}.ckpt"
    save_checkpoint(pipeline.trained_checkpoint(trained, cfg, splits), ckpt_path)
    if trained.history is not None:
        best = max((e["val_maf"] for e in trained.history), default=0.0)
        print(f"{system}: {len(trained.history)} epochs, best val MAF {best:.3f}")
    else:
        print(
            f"{system}: vocab {trained.model.vocab.size}, "
            f"final objective {trained.model.objective_history[-1]:.4f}"
        )
    print(f"saved {ckpt_path}")
    return 0


def cmd_train_dnn(args) -> int:
    system = "dnn_embedding" if args.variant == "embedding" else "dnn_functionals"
    need = ("embeddings",) if args.variant == "embedding" else ("functionals",)
    return _train_one(args, system, need)


def cmd_train_rnn(args) -> int:
    return _train_one(args, "attention_rnn", ("llds",))


def cmd_train_svm(args) -> int:
    return _train_one(args, "lexical_svm", ())


def cmd_score(args) -> int:
    from emofuse import pipeline
    from emofuse.scorefile import write_scores

    cfg = _resolve(args)
    run_dir = _run_dir(cfg)
    if args.model:
        ckpts = [Path(args.model)]
    else:
        ckpts = [run_dir / "models" / f"{s}.ckpt" for s in cfg.enabled_subsystems()]
        missing = [str(p) for p in ckpts if not p.exists()]
        if missing:
            raise EmofuseError("missing checkpoints: " + ", ".join(missing))
    splits = args.split or ["val", "test"]
    (run_dir / "scores").mkdir(parents=True, exist_ok=True)
    for ckpt_path in ckpts:
        for split in splits:
            matrix = pipeline.score_checkpoint(cfg, ckpt_path, split, run_dir)
            out = run_dir / "scores" / f"{matrix.model_id}.{split}.scores"
            write_scores(matrix, out)
            print(f"scored {matrix.model_id} on {split}: {len(matrix.ids)} items -> {out}")
    return 0


def cmd_fuse_train(args) -> int:
    from emofuse import pipeline

    cfg = _resolve(args)
    model = pipeline.fuse_train_run(cfg, _run_dir(cfg))
    alpha = model.alpha if not model.per_class else model.alpha.mean(axis=1)
    print(
        "fusion fitted; alpha: "
        + ", ".join(f"{n}={a:.3f}" for n, a in zip(model.system_ids, alpha))
    )
    return 0


def cmd_fuse_apply(args) -> int:
    from emofuse import pipeline

    cfg = _resolve(args)
    out = pipeline.fuse_apply_run(cfg, _run_dir(cfg), args.split)
    print(f"fused scores -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    from emofuse import pipeline

    cfg = _resolve(args)
    ev = pipeline.evaluate_run(cfg, _run_dir(cfg))
    for name in ev.systems:
        r = ev.test_reports[name]
        print(
            f"{name}: test MAF {r.maf_percent:.2f}, accuracy {r.accuracy:.2f}, "
            f"val Cllr {ev.val_cllr_bits[name]:.3f} bits"
        )
    print(f"majority baseline MAF {100 * ev.majority_baseline_maf:.2f}")
    return 0


def cmd_run(args) -> int:
    from emofuse import pipeline

    cfg = _resolve(args)
    result = pipeline.run_experiment(cfg)
    print(f"run complete -> {result.run_dir}")
    return 0


def cmd_make_corpus(args) -> int:
    from emofuse.synthetic import make_corpus

    out_dir = args.out_dir or "synthetic_corpus"
    manifest = make_corpus(out_dir, size=args.size, seed=args.seed or 0)
    print(f"synthetic corpus written; manifest: {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emofuse",
        description="Ensemble speech emotion recognition: four sub-systems fused on validation scores.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a manifest and print corpus statistics")
    p.add_argument("manifest", nargs="?", help="manifest file (or config `manifest:` key)")
    p.add_argument("--audio-stats", action="store_true", help="decode audio for SNR statistics")
    p.add_argument("--skip-file-check", action="store_true", help="skip file existence checks")
    _add_common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="write frame features, functionals, and embeddings")
    p.add_argument("manifest", nargs="?")
    p.add_argument("--workers", type=int, help="override worker thread count")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-dnn", help="train a feedforward sub-system")
    p.add_argument(
        "--variant",
        choices=("functionals", "embedding"),
        default="functionals",
        help="which vector input to train on",
    )
    _add_common(p)
    p.set_defaults(func=cmd_train_dnn)

    p = sub.add_parser("train-rnn", help="train the attention-pooling recurrent sub-system")
    _add_common(p)
    p.set_defaults(func=cmd_train_rnn)

    p = sub.add_parser("train-svm", help="train the lexical sub-system")
    _add_common(p)
    p.set_defaults(func=cmd_train_svm)

    p = sub.add_parser("score", help="score splits with stored checkpoints")
    p.add_argument("--model", help="checkpoint path (default: all enabled sub-systems)")
    p.add_argument(
        "--split",
        action="append",
        choices=("train", "val", "test"),
        help="split to score (repeatable; default val and test)",
    )
    _add_common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("fuse-train", help="fit the fusion combiner on validation scores")
    _add_common(p)
    p.set_defaults(func=cmd_fuse_train)

    p = sub.add_parser("fuse-apply", help="apply the stored fusion to a split's scores")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    _add_common(p)
    p.set_defaults(func=cmd_fuse_apply)

    p = sub.add_parser("evaluate", help="regenerate reports from stored score files")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline: extract, train, score, fuse, evaluate")
    p.add_argument("manifest", nargs="?")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("make-corpus", help="generate the synthetic benchmark corpus")
    p.add_argument("--size", type=int, default=800, help="number of utterances")
    _add_common(p)
    p.set_defaults(func=cmd_make_corpus)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EmofuseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
