import math

import numpy as np
import pytest

from icumort.textfeat import (
    SparseVector,
    TextFeatError,
    Vocabulary,
    build_vocab,
    default_stopwords,
    fuse,
    fuse_matrix,
    load_stopwords,
    preprocess_note,
    tfidf_fit,
    tfidf_transform,
    transform_corpus,
    vectors_to_csr,
)


class TestPreprocess:
    def test_mask_removal_and_stopwords(self):
        tokens = preprocess_note("Pt seen by [**First Name 123**] today", {"by"})
        assert tokens == ["pt", "seen", "today"]

    def test_empty_input(self):
        assert preprocess_note("", set()) == []

    def test_case_folding_with_stop_removal(self):
        assert preprocess_note("THE the The", {"the"}) == []

    def test_pure_digits_dropped(self):
        assert preprocess_note("bp 120 over 80 stable", set()) == \
            ["bp", "over", "stable"]

    def test_alphanumeric_kept(self):
        # mixed runs like drug codes survive the digit filter
        assert preprocess_note("gave 5mg o2 sat", set()) == \
            ["gave", "5mg", "o2", "sat"]

    def test_mask_spanning_newline(self):
        text = "seen [**Last Name\n(un) 99**] again"
        assert preprocess_note(text, set()) == ["seen", "again"]

    def test_punctuation_splits_tokens(self):
        assert preprocess_note("a.m., rounds—done", set()) == ["a", "m", "rounds", "done"]


class TestStopwords:
    def test_bundled_list_has_313_entries(self):
        sw = default_stopwords()
        assert len(sw) == 313
        assert "the" in sw
        assert all(t == t.lower() for t in sw)

    def test_loader_skips_comments(self, tmp_path):
        p = tmp_path / "sw.txt"
        p.write_text("# comment\nthe\n\nand\n")
        assert load_stopwords(p) == {"the", "and"}


class TestVocab:
    def test_min_df_excludes_rare(self):
        docs = [["word"]] * 9 + [["other"]] * 10
        v = build_vocab(docs, min_df=10)
        assert "word" not in v
        assert "other" in v

    def test_min_df_one_keeps_all(self):
        docs = [["a", "b"], ["c"]]
        v = build_vocab(docs, min_df=1)
        assert v.tokens == ("a", "b", "c")

    def test_counting_by_hand(self):
        v = build_vocab([["a", "b"], ["a"], ["c"]], min_df=2)
        assert v.tokens == ("a",)
        assert v.dfs == (2,)
        assert v.n_docs == 3

    def test_df_counts_documents_not_occurrences(self):
        v = build_vocab([["x", "x", "x"], ["y"]], min_df=1)
        assert v.dfs[v.index["x"]] == 1

    def test_empty_corpus_rejected(self):
        with pytest.raises(TextFeatError, match="empty corpus"):
            build_vocab([])

    def test_order_insensitive(self):
        rng = np.random.default_rng(0)
        docs = [["alpha", "beta"], ["beta", "gamma"], ["alpha"], ["delta", "beta"]]
        v1 = build_vocab(docs, min_df=1)
        for _ in range(5):
            perm = rng.permutation(len(docs))
            v2 = build_vocab([docs[i] for i in perm], min_df=1)
            assert v2.tokens == v1.tokens
            assert v2.dfs == v1.dfs

    def test_file_round_trip(self, tmp_path):
        v = build_vocab([["a", "b"], ["a"], ["c"]], min_df=1)
        p = tmp_path / "vocab.tsv"
        v.save(p)
        text = p.read_text()
        assert text.startswith("#N=3\n")
        assert "a\t2" in text
        again = Vocabulary.load(p)
        assert again.tokens == v.tokens
        assert again.dfs == v.dfs
        assert again.n_docs == 3


class TestTfIdf:
    def test_everywhere_token_has_unit_idf(self):
        v = build_vocab([["x"], ["x"], ["x"]], min_df=1)
        m = tfidf_fit(v)
        assert m.idf[0] == pytest.approx(1.0)

    def test_hand_worked_three_doc_corpus(self):
        """d1 over (fever, sepsis, shock) must come out (0, 0.6053, 0.7960)."""
        docs = [["sepsis", "shock"], ["sepsis", "fever"], ["fever"]]
        v = build_vocab(docs, min_df=1)
        assert v.tokens == ("fever", "sepsis", "shock")
        m = tfidf_fit(v)
        vec = tfidf_transform(m, docs[0]).to_dense()
        np.testing.assert_allclose(vec, [0.0, 0.6053, 0.7960], atol=1e-4)

    def test_oov_only_doc_gives_zero_vector(self):
        v = build_vocab([["a"], ["a"]], min_df=1)
        m = tfidf_fit(v)
        vec = tfidf_transform(m, ["zebra", "yak"])
        assert vec.dimension == 1
        assert vec.nnz == 0

    def test_unit_norm_or_zero(self):
        rng = np.random.default_rng(4)
        words = ["w%d" % i for i in range(30)]
        docs = [[words[i] for i in rng.integers(0, 30, size=rng.integers(1, 15))]
                for _ in range(40)]
        v = build_vocab(docs, min_df=1)
        m = tfidf_fit(v)
        for doc in docs:
            n = tfidf_transform(m, doc).norm()
            assert n == pytest.approx(1.0, abs=1e-12) or n == 0.0

    def test_transform_does_not_mutate_model(self):
        v = build_vocab([["a", "b"], ["b"]], min_df=1)
        m = tfidf_fit(v)
        before = m.idf.copy()
        tfidf_transform(m, ["a", "a", "b", "zzz"])
        np.testing.assert_array_equal(m.idf, before)
        assert v.dfs == (1, 2)

    def test_repeated_token_raises_tf(self):
        v = build_vocab([["a", "b"], ["a"], ["b"]], min_df=1)
        m = tfidf_fit(v)
        single = tfidf_transform(m, ["a", "b"]).to_dense()
        doubled = tfidf_transform(m, ["a", "a", "b"]).to_dense()
        assert doubled[0] / doubled[1] > single[0] / single[1]


class TestSparseVector:
    def test_invariants_enforced(self):
        with pytest.raises(TextFeatError):
            SparseVector(3, (0, 0), (1.0, 2.0))  # not strictly increasing
        with pytest.raises(TextFeatError):
            SparseVector(3, (5,), (1.0,))  # out of range
        with pytest.raises(TextFeatError):
            SparseVector(3, (1,), (0.0,))  # zero weight
        with pytest.raises(TextFeatError):
            SparseVector(3, (1,), (math.inf,))

    def test_dense_round_trip(self):
        v = SparseVector.from_dense([0.0, 2.5, 0.0, -1.0])
        assert v.indices == (1, 3)
        np.testing.assert_allclose(v.to_dense(), [0.0, 2.5, 0.0, -1.0])


class TestFuse:
    def test_dimension_additivity(self):
        text = SparseVector(100, (7,), (1.0,))
        fused = fuse(np.zeros(58), text)
        assert fused.dimension == 158

    def test_zero_structured_is_pure_shift(self):
        text = SparseVector(10, (2, 5), (0.3, -0.7))
        fused = fuse(np.zeros(58), text)
        assert fused.indices == (60, 63)
        assert fused.weights == (0.3, -0.7)

    def test_layout_trace(self):
        text = SparseVector(1, (0,), (0.8,))
        fused = fuse(np.array([1.5, -0.5]), text)
        assert fused.indices == (0, 1, 2)
        assert fused.weights == (1.5, -0.5, 0.8)

    def test_lossless_by_index_partition(self):
        rng = np.random.default_rng(9)
        s = rng.normal(size=6)
        s[2] = 0.0
        text = SparseVector.from_dense(rng.normal(size=4) * (rng.random(4) < 0.5))
        fused = fuse(s, text)
        dense = fused.to_dense()
        np.testing.assert_allclose(dense[:6], s)
        np.testing.assert_allclose(dense[6:], text.to_dense())


class TestMatrixHelpers:
    def test_vectors_to_csr(self):
        vs = [SparseVector(4, (0, 2), (1.0, 2.0)), SparseVector(4, (), ()),
              SparseVector(4, (3,), (-1.0,))]
        M = vectors_to_csr(vs)
        assert M.shape == (3, 4)
        np.testing.assert_allclose(
            M.toarray(), [[1, 0, 2, 0], [0, 0, 0, 0], [0, 0, 0, -1]])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(TextFeatError):
            vectors_to_csr([SparseVector(3, (), ()), SparseVector(4, (), ())])

    def test_transform_corpus_matches_per_doc(self):
        docs = [["sepsis", "shock"], ["sepsis", "fever"], ["fever"]]
        v = build_vocab(docs, min_df=1)
        m = tfidf_fit(v)
        M = transform_corpus(m, docs)
        for i, doc in enumerate(docs):
            np.testing.assert_allclose(M[i].toarray().ravel(),
                                       tfidf_transform(m, doc).to_dense())

    def test_fuse_matrix_blocks(self):
        S = np.array([[1.0, 0.0], [0.0, 2.0]])
        T = vectors_to_csr([SparseVector(3, (1,), (0.5,)),
                            SparseVector(3, (), ())])
        F = fuse_matrix(S, T)
        assert F.shape == (2, 5)
        np.testing.assert_allclose(F.toarray(),
                                   [[1, 0, 0, 0.5, 0], [0, 2, 0, 0, 0]])
