"""Per-system score matrices and their line-delimited file format.

    #EMOFUSE-SCORES v1
    #classes: angry,anxious,disgust,happy,neutral,sad,surprise,worried
    #model: dnn_functionals
    utt_0001<TAB>-0.31...<TAB>... (8 values, %.17g so floats round-trip)

Rows are natural-log posteriors: each log-sum-exps to 0 within 1e-6.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from emofuse.errors import EmofuseError
from emofuse.labels import EMOTION_CLASSES

SCORE_MAGIC = "#EMOFUSE-SCORES v1"
LSE_TOLERANCE = 1e-6


class ScoreFileError(EmofuseError):
    def __init__(self, path, message: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


@dataclass
class ScoreMatrix:
    """N x C log-posterior rows keyed by utterance id, from one system."""

    ids: tuple[str, ...]
    values: np.ndarray
    model_id: str

    def __post_init__(self):
        self.ids = tuple(self.ids)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.ids):
            raise ValueError(
                f"score shape {self.values.shape} does not match {len(self.ids)} ids"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate utterance ids in score matrix")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite scores")
        lse = logsumexp(self.values, axis=1)
        worst = float(np.abs(lse).max(initial=0.0))
        if worst > LSE_TOLERANCE:
            raise ValueError(
                f"rows must be log-posteriors (log-sum-exp 0 +- {LSE_TOLERANCE}); "
                f"worst deviation {worst:.3g}"
            )

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]

    def row(self, utt_id: str) -> np.ndarray:
        return self.values[self.ids.index(utt_id)]


def write_scores(scores: ScoreMatrix, path):
    path = Path(path)
    lines = [
        SCORE_MAGIC,
        "#classes: " + ",".join(EMOTION_CLASSES),
        f"#model: {scores.model_id}",
    ]
    for utt_id, row in zip(scores.ids, scores.values):
        lines.append(utt_id + "\t" + "\t".join(f"{v:.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_scores(path) -> ScoreMatrix:
    path = Path(path)
    if not path.is_file():
        raise ScoreFileError(path, "score file not found")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != SCORE_MAGIC:
        raise ScoreFileError(path, f"missing magic line {SCORE_MAGIC!r}")
    model_id = "unknown"
    ids: list[str] = []
    rows: list[list[float]] = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#classes: "):
            declared = tuple(line[len("#classes: ") :].split(","))
            if declared != EMOTION_CLASSES:
                raise ScoreFileError(path, f"line {line_no}: unexpected class list {declared}")
            continue
        if line.startswith("#model: "):
            model_id = line[len("#model: ") :]
            continue
        if line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 1 + len(EMOTION_CLASSES):
            raise ScoreFileError(
                path, f"line {line_no}: expected id + {len(EMOTION_CLASSES)} scores"
            )
        try:
            rows.append([float(v) for v in parts[1:]])
        except ValueError:
            raise ScoreFileError(path, f"line {line_no}: non-numeric score") from None
        ids.append(parts[0])
    if not ids:
        raise ScoreFileError(path, "no score rows")
    try:
        return ScoreMatrix(ids=tuple(ids), values=np.array(rows), model_id=model_id)
    except ValueError as e:
        raise ScoreFileError(path, str(e)) from None


def align_scores(matrices: list[ScoreMatrix]) -> list[ScoreMatrix]:
    """Reorder every matrix to the first one's id order; error on id-set mismatch."""
    if not matrices:
        raise ValueError("no score matrices to align")
    ref = matrices[0]
    ref_set = set(ref.ids)
    out = [ref]
    for m in matrices[1:]:
        if set(m.ids) != ref_set:
            missing = sorted(ref_set.symmetric_difference(m.ids))[:5]
            raise ValueError(
                f"systems {ref.model_id!r} and {m.model_id!r} cover different utterances "
                f"(e.g. {missing})"
            )
        index = {u: i for i, u in enumerate(m.ids)}
        order = [index[u] for u in ref.ids]
        out.append(ScoreMatrix(ids=ref.ids, values=m.values[order], model_id=m.model_id))
    return out
