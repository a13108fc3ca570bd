"""Lexical sub-system: tokenizer, TF-IDF, and a Crammer-Singer linear SVM.

Tokenization is segmentation-free: text is NFKC-normalized, CJK runs emit
character unigrams plus overlapping bigrams, and everything else splits on
whitespace and lowercases. TF-IDF uses raw counts, idf = ln(N/df), and L2
normalization. The multiclass SVM minimizes

    (lambda/2) ||W||^2 + (1/N) sum_i max(0, 1 + max_{c != y_i} W_c.x_i - W_{y_i}.x_i)

by shuffled subgradient descent with step 1/(lambda t) and full iterate
averaging; margins are mapped through a stabilized softmax so the emitted
scores share the log-posterior currency of the neural systems.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from emofuse.checkpoint import Checkpoint
from emofuse.errors import EmofuseError
from emofuse.labels import EMOTION_CLASSES
from emofuse.nn.core import log_softmax
from emofuse.scorefile import ScoreMatrix

# Unified ideographs, extension A, and the compatibility block.
_CJK_RANGES = ((0x4E00, 0x9FFF), (0x3400, 0x4DBF), (0xF900, 0xFAFF))


class LexicalError(EmofuseError):
    pass


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def tokenize(text: str) -> list[str]:
    """NFKC-normalize, then: CJK runs -> char unigrams + overlapping bigrams;
    other runs -> whitespace-split, lowercased."""
    if not text:
        return []
    text = unicodedata.normalize("NFKC", text)
    tokens: list[str] = []
    buf: list[str] = []  # pending non-CJK characters
    run: list[str] = []  # pending CJK characters

    def flush_plain():
        if buf:
            tokens.extend("".join(buf).lower().split())
            buf.clear()

    def flush_cjk():
        if run:
            tokens.extend(run)
            tokens.extend(a + b for a, b in zip(run, run[1:]))
            run.clear()

    for ch in text:
        if _is_cjk(ch):
            flush_plain()
            run.append(ch)
        else:
            flush_cjk()
            buf.append(ch)
    flush_plain()
    flush_cjk()
    return tokens


@dataclass
class TfidfVocabulary:
    term_index: dict[str, int]
    idf: np.ndarray
    doc_count: int
    df: np.ndarray

    @property
    def size(self) -> int:
        return len(self.term_index)

    def terms(self) -> list[str]:
        out = [""] * self.size
        for term, i in self.term_index.items():
            out[i] = term
        return out


def fit_tfidf(token_docs: list[list[str]], min_df: int = 1) -> TfidfVocabulary:
    """Build the vocabulary over all documents; idf(t) = ln(N/df(t))."""
    if not token_docs:
        raise LexicalError("cannot fit TF-IDF on an empty corpus")
    n = len(token_docs)
    df_counts: dict[str, int] = {}
    for doc in token_docs:
        for term in set(doc):
            df_counts[term] = df_counts.get(term, 0) + 1
    terms = sorted(t for t, c in df_counts.items() if c >= min_df)
    if not terms:
        raise LexicalError("no terms survive the document-frequency threshold")
    term_index = {t: i for i, t in enumerate(terms)}
    df = np.array([df_counts[t] for t in terms], dtype=np.float64)
    return TfidfVocabulary(term_index=term_index, idf=np.log(n / df), doc_count=n, df=df)


def transform_tfidf(tokens: list[str], vocab: TfidfVocabulary) -> sp.csr_matrix:
    """One document -> L2-normalized (1, d) sparse row. Unseen terms are
    dropped; an empty or all-unseen document stays the zero vector."""
    counts: dict[int, float] = {}
    for term in tokens:
        idx = vocab.term_index.get(term)
        if idx is not None:
            counts[idx] = counts.get(idx, 0.0) + 1.0
    if not counts:
        return sp.csr_matrix((1, vocab.size))
    cols = np.array(sorted(counts), dtype=np.int32)
    vals = np.array([counts[int(c)] for c in cols]) * vocab.idf[cols]
    norm = float(np.sqrt((vals**2).sum()))
    if norm > 0.0:
        vals = vals / norm
    return sp.csr_matrix((vals, (np.zeros_like(cols), cols)), shape=(1, vocab.size))


def transform_corpus(token_docs: list[list[str]], vocab: TfidfVocabulary) -> sp.csr_matrix:
    return sp.vstack([transform_tfidf(doc, vocab) for doc in token_docs], format="csr")


@dataclass
class CsSvmModel:
    weights: np.ndarray  # (C, d)
    lam: float
    vocab: TfidfVocabulary | None
    class_names: tuple[str, ...] = EMOTION_CLASSES
    objective_history: list[float] = field(default_factory=list)


def cs_svm_objective(w: np.ndarray, x: sp.csr_matrix, y: np.ndarray, lam: float) -> float:
    margins = np.asarray(x @ w.T)  # (N, C)
    n = x.shape[0]
    true_scores = margins[np.arange(n), y]
    rival = margins.copy()
    rival[np.arange(n), y] = -np.inf
    hinge = np.maximum(0.0, 1.0 + rival.max(axis=1) - true_scores)
    return 0.5 * lam * float((w**2).sum()) + float(hinge.mean())


def train_cs_svm(
    x: sp.csr_matrix,
    y: np.ndarray,
    lam: float = 1e-4,
    epochs: int = 50,
    seed: int = 0,
    num_classes: int = len(EMOTION_CLASSES),
    vocab: TfidfVocabulary | None = None,
) -> CsSvmModel:
    """Averaged subgradient descent on the Crammer-Singer objective.

    Per visit t: step 1/(lambda t), shrink W by (1 - step*lambda), and on a
    margin violation move W along +x for the best rival and -x for the true
    class. The model keeps the running average of all iterates; the
    objective of that average is recorded once per epoch.
    """
    n, dim = x.shape
    y = np.asarray(y, dtype=np.int64)
    if n == 0:
        raise LexicalError("empty training set")
    classes_present = np.unique(y)
    if classes_present.size < 2:
        raise LexicalError("training set contains a single class; nothing to separate")
    if lam <= 0.0:
        raise ValueError(f"regularization lambda must be positive, got {lam}")

    rng = np.random.default_rng([seed, 0x53564D])
    w = np.zeros((num_classes, dim))
    w_avg = np.zeros_like(w)
    history: list[float] = []
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            xi = x.getrow(int(i))
            scores = np.asarray(xi @ w.T).ravel()
            yi = int(y[i])
            rival_scores = scores.copy()
            rival_scores[yi] = -np.inf
            rival = int(rival_scores.argmax())
            step = 1.0 / (lam * t)
            w *= 1.0 - step * lam
            if 1.0 + scores[rival] - scores[yi] > 0.0:
                cols = xi.indices
                vals = step * xi.data
                w[rival, cols] -= vals
                w[yi, cols] += vals
            w_avg += (w - w_avg) / t
        history.append(cs_svm_objective(w_avg, x, y, lam))
    return CsSvmModel(weights=w_avg, lam=lam, vocab=vocab, objective_history=history)


def svm_scores(model: CsSvmModel, x: sp.csr_matrix, ids: tuple[str, ...], model_id: str = "lexical_svm") -> ScoreMatrix:
    """Margins W.x mapped through log-softmax; zero vectors map to the
    uniform posterior, so transcript-free utterances stay maximally vague."""
    if x.shape[1] != model.weights.shape[1]:
        raise LexicalError(
            f"vocabulary mismatch: input dim {x.shape[1]}, model dim {model.weights.shape[1]}"
        )
    margins = np.asarray(x @ model.weights.T)
    return ScoreMatrix(ids=ids, values=log_softmax(margins), model_id=model_id)


def svm_to_checkpoint(model: CsSvmModel, config_echo: dict | None = None) -> Checkpoint:
    vocab = model.vocab
    if vocab is None:
        raise LexicalError("model carries no vocabulary; attach one before saving")
    return Checkpoint(
        kind="lexical_svm",
        architecture={"num_classes": model.weights.shape[0], "dim": model.weights.shape[1]},
        params={"weights": model.weights, "idf": vocab.idf, "df": vocab.df},
        labels={"emotion": list(EMOTION_CLASSES), "terms": vocab.terms()},
        config=dict(config_echo or {}, lam=model.lam, doc_count=vocab.doc_count),
    )


def svm_from_checkpoint(ckpt: Checkpoint) -> CsSvmModel:
    if ckpt.kind != "lexical_svm":
        raise LexicalError(f"checkpoint kind {ckpt.kind!r} is not a lexical model")
    terms = ckpt.labels["terms"]
    vocab = TfidfVocabulary(
        term_index={t: i for i, t in enumerate(terms)},
        idf=ckpt.param("idf"),
        doc_count=int(ckpt.config["doc_count"]),
        df=ckpt.param("df"),
    )
    return CsSvmModel(weights=ckpt.param("weights"), lam=float(ckpt.config["lam"]), vocab=vocab)
