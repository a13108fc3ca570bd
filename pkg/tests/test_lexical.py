"""Tokenizer, TF-IDF, and multiclass SVM behavior."""

import numpy as np
import pytest
import scipy.sparse as sp

from emofuse.checkpoint import load_checkpoint, save_checkpoint
from emofuse.labels import EMOTION_CLASSES
from emofuse.lexical import (
    CsSvmModel,
    LexicalError,
    cs_svm_objective,
    fit_tfidf,
    svm_from_checkpoint,
    svm_scores,
    svm_to_checkpoint,
    tokenize,
    train_cs_svm,
    transform_corpus,
    transform_tfidf,
)

C = len(EMOTION_CLASSES)


# ---------------------------------------------------------------- tokenizer


def test_tokenize_plain_text_lowercases():
    assert tokenize("Hello  WORLD") == ["hello", "world"]


def test_tokenize_empty():
    assert tokenize("") == []
    assert tokenize("   ") == []


def test_tokenize_cjk_unigrams_and_bigrams():
    assert tokenize("今天好") == [
        "今", "天", "好", "今天", "天好",
    ]


def test_tokenize_single_cjk_char_no_bigram():
    assert tokenize("好") == ["好"]


def test_tokenize_mixed_scripts_keep_run_boundaries():
    toks = tokenize("abc今天 def")
    assert toks == ["abc", "今", "天", "今天", "def"]
    # bigrams never bridge a non-CJK interruption
    toks2 = tokenize("今 x 天")
    assert "今天" not in toks2


def test_tokenize_nfkc_folds_compatibility_forms():
    # fullwidth latin and halfwidth katakana normalize before tokenizing
    assert tokenize("ＡＢ") == ["ab"]
    # compatibility ideograph maps onto its unified codepoint
    assert tokenize("豈") == tokenize("豈")


# ------------------------------------------------------------------ tf-idf


def test_fit_tfidf_idf_values():
    docs = [["a", "b"], ["a", "c"], ["a", "b", "b"]]
    vocab = fit_tfidf(docs)
    assert vocab.doc_count == 3
    assert sorted(vocab.term_index) == ["a", "b", "c"]
    # df: a=3, b=2, c=1; idf = ln(3/df)
    by_term = {t: vocab.idf[i] for t, i in vocab.term_index.items()}
    assert by_term["a"] == pytest.approx(0.0)
    assert by_term["b"] == pytest.approx(np.log(1.5))
    assert by_term["c"] == pytest.approx(np.log(3.0))


def test_fit_tfidf_min_df_filters():
    docs = [["a", "b"], ["a", "c"]]
    vocab = fit_tfidf(docs, min_df=2)
    assert list(vocab.term_index) == ["a"]
    with pytest.raises(LexicalError, match="threshold"):
        fit_tfidf(docs, min_df=3)


def test_fit_tfidf_empty_corpus():
    with pytest.raises(LexicalError, match="empty corpus"):
        fit_tfidf([])


def test_transform_l2_normalized():
    vocab = fit_tfidf([["a", "b"], ["a", "c"], ["b", "c"]])
    row = transform_tfidf(["a", "b", "b"], vocab)
    dense = row.toarray().ravel()
    assert row.shape == (1, 3)
    assert np.linalg.norm(dense) == pytest.approx(1.0)
    # raw counts weight the duplicated term higher
    assert dense[vocab.term_index["b"]] > dense[vocab.term_index["a"]]


def test_transform_unseen_terms_drop_to_zero_vector():
    vocab = fit_tfidf([["a"], ["a", "b"]])
    row = transform_tfidf(["zzz"], vocab)
    assert row.nnz == 0
    assert transform_tfidf([], vocab).nnz == 0


def test_transform_corpus_stacks_rows():
    vocab = fit_tfidf([["a", "b"], ["b", "c"]])
    mat = transform_corpus([["a"], ["b"], []], vocab)
    assert mat.shape == (3, 3)
    assert mat.getrow(2).nnz == 0


# --------------------------------------------------------------------- svm


def _disjoint_vocab_problem(per_class=6):
    """Each class speaks its own private vocabulary: linearly separable."""
    docs = []
    labels = []
    for c in range(C):
        for j in range(per_class):
            docs.append([f"w{c}_{j % 3}", f"w{c}_shared"])
            labels.append(c)
    vocab = fit_tfidf(docs)
    x = transform_corpus(docs, vocab)
    return x, np.array(labels, dtype=np.int64), vocab, docs


def test_disjoint_vocabularies_reach_perfect_training_accuracy():
    x, y, vocab, _ = _disjoint_vocab_problem()
    model = train_cs_svm(x, y, lam=1e-4, epochs=50, seed=0, vocab=vocab)
    pred = np.asarray(x @ model.weights.T).argmax(axis=1)
    assert np.array_equal(pred, y)


def test_objective_history_monotone_after_burn_in():
    x, y, vocab, _ = _disjoint_vocab_problem()
    model = train_cs_svm(x, y, lam=1e-4, epochs=50, seed=0, vocab=vocab)
    hist = model.objective_history
    assert len(hist) == 50
    for prev, cur in zip(hist[5:], hist[6:]):
        assert cur <= prev + 1e-3


def test_training_is_seed_deterministic():
    x, y, vocab, _ = _disjoint_vocab_problem(per_class=4)
    a = train_cs_svm(x, y, lam=1e-4, epochs=10, seed=3, vocab=vocab)
    b = train_cs_svm(x, y, lam=1e-4, epochs=10, seed=3, vocab=vocab)
    c = train_cs_svm(x, y, lam=1e-4, epochs=10, seed=4, vocab=vocab)
    assert np.array_equal(a.weights, b.weights)
    assert not np.array_equal(a.weights, c.weights)


def test_objective_value_matches_direct_formula():
    x, y, vocab, _ = _disjoint_vocab_problem(per_class=3)
    model = train_cs_svm(x, y, lam=1e-3, epochs=5, seed=1, vocab=vocab)
    assert model.objective_history[-1] == pytest.approx(
        cs_svm_objective(model.weights, x, y, lam=1e-3)
    )


def test_single_class_rejected():
    x = sp.csr_matrix(np.eye(3))
    y = np.zeros(3, dtype=np.int64)
    with pytest.raises(LexicalError, match="single class"):
        train_cs_svm(x, y)


def test_empty_training_set_rejected():
    x = sp.csr_matrix((0, 4))
    with pytest.raises(LexicalError, match="empty training set"):
        train_cs_svm(x, np.zeros(0, dtype=np.int64))


def test_bad_lambda_rejected():
    x = sp.csr_matrix(np.eye(2))
    y = np.array([0, 1], dtype=np.int64)
    with pytest.raises(ValueError, match="lambda"):
        train_cs_svm(x, y, lam=0.0)


def test_zero_row_scores_uniform():
    x, y, vocab, _ = _disjoint_vocab_problem(per_class=3)
    model = train_cs_svm(x, y, lam=1e-4, epochs=10, seed=0, vocab=vocab)
    empty = sp.csr_matrix((1, x.shape[1]))
    m = svm_scores(model, empty, ("mute",))
    assert np.allclose(m.values, -np.log(C), atol=1e-12)


def test_scores_dim_mismatch():
    model = CsSvmModel(weights=np.zeros((C, 5)), lam=1e-4, vocab=None)
    with pytest.raises(LexicalError, match="vocabulary mismatch"):
        svm_scores(model, sp.csr_matrix((1, 7)), ("u",))


def test_checkpoint_roundtrip_restores_scores(tmp_path):
    x, y, vocab, docs = _disjoint_vocab_problem(per_class=4)
    model = train_cs_svm(x, y, lam=1e-4, epochs=10, seed=2, vocab=vocab)
    path = tmp_path / "svm.ckpt"
    save_checkpoint(svm_to_checkpoint(model, {"seed": 2}), path)
    back = svm_from_checkpoint(load_checkpoint(path))
    assert back.vocab.term_index == vocab.term_index
    assert np.array_equal(back.weights, model.weights)
    assert np.array_equal(back.vocab.idf, vocab.idf)
    # rebuilt vocabulary featurizes new text identically
    ids = tuple(f"u{i}" for i in range(4))
    fresh = transform_corpus(docs[:4], back.vocab)
    a = svm_scores(model, transform_corpus(docs[:4], vocab), ids)
    b = svm_scores(back, fresh, ids)
    assert np.array_equal(a.values, b.values)


def test_checkpoint_requires_vocab():
    model = CsSvmModel(weights=np.zeros((C, 3)), lam=1e-4, vocab=None)
    with pytest.raises(LexicalError, match="no vocabulary"):
        svm_to_checkpoint(model)


def test_checkpoint_wrong_kind():
    from emofuse.checkpoint import Checkpoint

    with pytest.raises(LexicalError, match="not a lexical model"):
        svm_from_checkpoint(Checkpoint(kind="fusion", architecture={}, params={}))
