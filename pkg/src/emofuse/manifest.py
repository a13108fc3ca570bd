"""Corpus manifests: one tab-separated line per utterance.

File layout:

    #EMOFUSE-MANIFEST v1
    #fields: id  audio_path  emotion  speaker_id  gender  partition  transcript  embedding_path
    utt_0001<TAB>wav/utt_0001.wav<TAB>happy<TAB>spk03<TAB>female<TAB>train<TAB>some words<TAB>emb/utt_0001.txt

transcript and embedding_path may be empty. Relative paths are resolved
against the manifest's directory on load. Lines starting with '#' after the
magic line are comments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from emofuse.errors import EmofuseError
from emofuse.labels import EMOTION_CLASSES, GENDERS

MANIFEST_MAGIC = "#EMOFUSE-MANIFEST v1"
PARTITIONS = ("train", "test")
_FIELDS = (
    "id",
    "audio_path",
    "emotion",
    "speaker_id",
    "gender",
    "partition",
    "transcript",
    "embedding_path",
)


class ManifestError(EmofuseError):
    def __init__(self, path, line_number: int | None, message: str):
        self.path = str(path)
        self.line_number = line_number
        where = f"{self.path}:{line_number}" if line_number is not None else self.path
        super().__init__(f"{where}: {message}")


@dataclass
class UtteranceRecord:
    """One corpus item. transcript/embedding_path are optional (None)."""

    id: str
    audio_path: str
    emotion: str
    speaker_id: str
    gender: str
    partition: str
    transcript: str | None = None
    embedding_path: str | None = None

    def validate(self):
        if not self.id:
            raise ValueError("empty utterance id")
        if self.emotion not in EMOTION_CLASSES:
            raise ValueError(f"unknown emotion label {self.emotion!r}")
        if self.gender not in GENDERS:
            raise ValueError(f"unknown gender label {self.gender!r}")
        if self.partition not in PARTITIONS:
            raise ValueError(f"unknown partition {self.partition!r}")


def load_manifest(path, check_files: bool = True) -> list[UtteranceRecord]:
    """Parse and validate a manifest file.

    Raises ManifestError with the offending line number for duplicate ids,
    unknown labels, and missing fields. check_files=False skips the
    existence check on referenced audio/embedding files.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(path, None, "manifest file not found")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MANIFEST_MAGIC:
        raise ManifestError(path, 1, f"missing magic line {MANIFEST_MAGIC!r}")

    base = path.parent
    records: list[UtteranceRecord] = []
    seen: dict[str, int] = {}
    for line_no, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != len(_FIELDS):
            raise ManifestError(
                path, line_no, f"expected {len(_FIELDS)} tab-separated fields, got {len(parts)}"
            )
        row = dict(zip(_FIELDS, parts))
        for required in ("id", "audio_path", "emotion", "speaker_id", "gender", "partition"):
            if not row[required]:
                raise ManifestError(path, line_no, f"missing required field {required!r}")
        rec = UtteranceRecord(
            id=row["id"],
            audio_path=str(base / row["audio_path"]),
            emotion=row["emotion"],
            speaker_id=row["speaker_id"],
            gender=row["gender"],
            partition=row["partition"],
            transcript=row["transcript"] or None,
            embedding_path=str(base / row["embedding_path"]) if row["embedding_path"] else None,
        )
        try:
            rec.validate()
        except ValueError as e:
            raise ManifestError(path, line_no, str(e)) from e
        if rec.id in seen:
            raise ManifestError(
                path, line_no, f"duplicate id {rec.id!r} (first seen on line {seen[rec.id]})"
            )
        seen[rec.id] = line_no
        if check_files:
            if not Path(rec.audio_path).is_file():
                raise ManifestError(path, line_no, f"audio file not found: {rec.audio_path}")
            if rec.embedding_path is not None and not Path(rec.embedding_path).is_file():
                raise ManifestError(
                    path, line_no, f"embedding file not found: {rec.embedding_path}"
                )
        records.append(rec)
    return records


def write_manifest(records: list[UtteranceRecord], path):
    """Write records with paths stored relative to the manifest directory."""
    path = Path(path)
    base = path.parent.resolve()
    out = [MANIFEST_MAGIC, "#fields: " + "\t".join(_FIELDS)]
    for rec in records:
        for text in (rec.transcript or "",):
            if "\t" in text or "\n" in text:
                raise ValueError(f"transcript of {rec.id!r} contains tab or newline")
        row = (
            rec.id,
            _relpath(rec.audio_path, base),
            rec.emotion,
            rec.speaker_id,
            rec.gender,
            rec.partition,
            rec.transcript or "",
            _relpath(rec.embedding_path, base) if rec.embedding_path else "",
        )
        out.append("\t".join(row))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")


def _relpath(p, base: Path) -> str:
    try:
        rel = Path(p).resolve().relative_to(base)
    except ValueError:
        return str(Path(p).resolve())
    return rel.as_posix()


@dataclass
class PartitionStats:
    total: int
    class_counts: dict[str, int]
    class_proportions: dict[str, float]
    gender_counts: dict[str, int]
    gender_ratio: dict[str, float]
    durations_s: list[float] = field(default_factory=list)
    snr_db: list[float] = field(default_factory=list)


@dataclass
class ManifestStats:
    partitions: dict[str, PartitionStats]


def manifest_stats(records: list[UtteranceRecord], with_audio: bool = False) -> ManifestStats:
    """Per-partition class counts/proportions and gender ratio.

    with_audio=True additionally decodes every file to collect duration and
    SNR histogram data (slow; used by the ingest report).
    """
    stats: dict[str, PartitionStats] = {}
    for part in PARTITIONS:
        part_recs = [r for r in records if r.partition == part]
        n = len(part_recs)
        class_counts = {c: 0 for c in EMOTION_CLASSES}
        gender_counts = {g: 0 for g in GENDERS}
        for r in part_recs:
            class_counts[r.emotion] += 1
            gender_counts[r.gender] += 1
        stats[part] = PartitionStats(
            total=n,
            class_counts=class_counts,
            class_proportions={c: (k / n if n else 0.0) for c, k in class_counts.items()},
            gender_counts=gender_counts,
            gender_ratio={g: (k / n if n else 0.0) for g, k in gender_counts.items()},
        )
    if with_audio:
        from emofuse.audio import canonicalize, decode_wav
        from emofuse.dsp import estimate_snr

        for r in records:
            w = canonicalize(decode_wav(r.audio_path))
            part = stats[r.partition]
            part.durations_s.append(w.duration)
            part.snr_db.append(estimate_snr(w))
    return ManifestStats(partitions=stats)


def format_stats(stats: ManifestStats) -> str:
    """Aligned human-readable statistics table (also machine-parsable TSV-ish)."""
    lines = []
    for part, ps in stats.partitions.items():
        lines.append(f"partition {part}: {ps.total} utterances")
        for c in EMOTION_CLASSES:
            lines.append(
                f"  {c:<10s} {ps.class_counts[c]:>6d}  {ps.class_proportions[c]:.3f}"
            )
        ratio = "  ".join(f"{g} {ps.gender_ratio[g]:.2f}" for g in GENDERS)
        lines.append(f"  gender ratio: {ratio}")
        if ps.durations_s:
            d = np.asarray(ps.durations_s)
            lines.append(
                f"  duration_s: min {d.min():.2f}  median {np.median(d):.2f}  max {d.max():.2f}"
            )
        if ps.snr_db:
            s = np.asarray(ps.snr_db)
            lines.append(
                f"  snr_db: min {s.min():.1f}  median {np.median(s):.1f}  max {s.max():.1f}"
            )
    return "\n".join(lines) + "\n"
