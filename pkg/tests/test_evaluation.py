import functools
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mem2mem.evaluation import (
    corpus_mean,
    extract_by_memory,
    gold_extract_oracle,
    lcs_length,
    ngram_copy_ratio,
    rouge_l,
    rouge_n,
    score_document,
)
from mem2mem.text import make_synthetic_corpus, tokenize

S = str.split


# ---------------------------------------------------------------- oracles


def oracle_rouge_n(cand, ref, n):
    """Explicit multiset intersection by repeated removal."""
    cg = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
    rg = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
    if not rg:
        return 0.0, 0.0, 0.0
    pool = list(rg)
    overlap = 0
    for g in cg:
        if g in pool:
            pool.remove(g)
            overlap += 1
    p = overlap / len(cg) if cg else 0.0
    r = overlap / len(rg)
    return p, r, (2 * p * r / (p + r) if p + r else 0.0)


def oracle_lcs(a, b):
    @functools.lru_cache(maxsize=None)
    def rec(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + rec(i + 1, j + 1)
        return max(rec(i + 1, j), rec(i, j + 1))

    return rec(0, 0)


def oracle_lcs_exhaustive(a, b):
    """Longest subsequence of ``a`` that is also a subsequence of ``b``."""

    def is_subseq(s, t):
        it = iter(t)
        return all(x in it for x in s)

    for k in range(min(len(a), len(b)), 0, -1):
        if any(is_subseq(c, b) for c in itertools.combinations(a, k)):
            return k
    return 0


# ---------------------------------------------------------------- ROUGE


class TestRougeN:
    def test_identical(self):
        s = rouge_n(S("a b c"), S("a b c"), 2)
        assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)

    def test_disjoint(self):
        assert rouge_n(S("a b"), S("c d"), 1).f1 == 0.0

    def test_hand_unigram(self):
        s = rouge_n(S("a b c"), S("a b d"), 1)
        assert s.precision == pytest.approx(2 / 3) and s.recall == pytest.approx(2 / 3) and s.f1 == pytest.approx(2 / 3)

    def test_hand_bigram(self):
        s = rouge_n(S("a b c"), S("a b d"), 2)
        assert (s.precision, s.recall, s.f1) == (0.5, 0.5, 0.5)

    def test_clipping(self):
        s = rouge_n(S("a a a"), S("a b"), 1)
        assert s.precision == pytest.approx(1 / 3) and s.recall == 0.5

    def test_short_reference_flagged(self):
        s = rouge_n(S("a b"), S("a"), 2)
        assert s.f1 == 0.0 and not s.defined

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            rouge_n(["a"], ["a"], 0)

    def test_ids_and_strings_agree(self):
        words = S("x y z x y")
        ids = [{"x": 1, "y": 2, "z": 3}[w] for w in words]
        assert rouge_n(words, words[::-1], 2) == rouge_n(ids, ids[::-1], 2)


class TestRougeL:
    def test_identical(self):
        assert rouge_l(S("a b c"), S("a b c")).f1 == 1.0

    def test_hand(self):
        s = rouge_l(S("a c b"), S("a b c"))
        assert s.precision == pytest.approx(2 / 3) and s.recall == pytest.approx(2 / 3)

    def test_single_token(self):
        s = rouge_l(["a"], S("a b c d"))
        assert s.precision == 1.0 and s.recall == 0.25

    def test_empty(self):
        assert rouge_l([], S("a")).f1 == 0.0
        assert rouge_l(S("a"), []).f1 == 0.0


@pytest.mark.parametrize("seed", range(200))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    alphabet = list("abcde")[: int(rng.integers(2, 6))]
    cand = [str(x) for x in rng.choice(alphabet, size=int(rng.integers(0, 13)))]
    ref = [str(x) for x in rng.choice(alphabet, size=int(rng.integers(1, 13)))]
    for n in (1, 2):
        s = rouge_n(cand, ref, n)
        assert (s.precision, s.recall, s.f1) == oracle_rouge_n(cand, ref, n)
    lcs = oracle_lcs(tuple(cand), tuple(ref))
    assert lcs_length(cand, ref) == lcs
    if len(cand) <= 8:
        assert oracle_lcs_exhaustive(cand, ref) == lcs
    s = rouge_l(cand, ref)
    p = lcs / len(cand) if cand else 0.0
    r = lcs / len(ref)
    assert (s.precision, s.recall, s.f1) == (p, r, 2 * p * r / (p + r) if p + r else 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from("abcd"), min_size=2, max_size=12), st.lists(st.sampled_from("abcd"), min_size=2, max_size=12))
def test_f1_symmetric(a, b):
    for n in (1, 2):
        x, y = rouge_n(a, b, n), rouge_n(b, a, n)
        assert x.precision == y.recall and x.recall == y.precision
        assert x.f1 == pytest.approx(y.f1, abs=1e-15)
    x, y = rouge_l(a, b), rouge_l(b, a)
    assert x.f1 == pytest.approx(y.f1, abs=1e-15)
    assert 0.0 <= x.f1 <= 1.0


# ---------------------------------------------------------------- copy ratio


class TestCopyRatio:
    def test_verbatim(self):
        art = S("the quick brown fox jumps over the lazy dog today")
        for n in (1, 3, 5):
            assert ngram_copy_ratio(art[2:8], art, n) == 100.0

    def test_disjoint(self):
        assert ngram_copy_ratio(S("a b c d e f"), S("u v w x y z"), 5) == 0.0

    def test_too_short(self):
        assert ngram_copy_ratio(S("a b"), S("a b c"), 5) is None

    def test_multiplicity(self):
        # bigrams: (a b) x2 found, (b c) not found, (b a) not found
        assert ngram_copy_ratio(S("a b a b c"), S("a b"), 2) == 50.0


# ---------------------------------------------------------------- extraction


class TestExtraction:
    def test_one_hot_rows(self):
        A = np.array([[0, 0, 1.0], [1.0, 0, 0]])
        rep = extract_by_memory(A, ["s0", "s1", "s2"])
        assert rep.indices == [0, 2] and rep.summary == "s0 s2"

    def test_all_heads_same_sentence(self):
        assert extract_by_memory(np.tile([[1.0, 0.0]], (3, 1)), ["x", "y"]).indices == [0]

    def test_hand(self):
        assert extract_by_memory(np.array([[0.6, 0.4], [0.3, 0.7]]), ["a", "b"]).indices == [0, 1]

    def test_ties_lowest_index(self):
        assert extract_by_memory(np.array([[0.5, 0.5]]), ["a", "b"]).indices == [0]

    def test_head_order_irrelevant(self):
        rng = np.random.default_rng(0)
        A = rng.random((4, 9))
        sents = [f"s{i}" for i in range(9)]
        assert extract_by_memory(A, sents) == extract_by_memory(A[::-1], sents)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            extract_by_memory(np.ones(3), ["a"])


class TestGoldOracle:
    def test_reference_is_one_sentence(self):
        sents = [S("a b"), S("c d e"), S("f")]
        assert gold_extract_oracle(sents, S("c d e"), 2) == [1]

    def test_k_zero(self):
        with pytest.raises(ValueError):
            gold_extract_oracle([S("a")], S("a"), 0)

    def test_recovers_marked_sentences(self):
        docs, sums = make_synthetic_corpus(3, 30)
        for d, s in zip(docs, sums):
            sents = [tokenize(x) for sec in d["sections"] for x in sec]
            ref = [t for x in s for t in tokenize(x)]
            assert gold_extract_oracle(sents, ref, len(d["salient"])) == d["salient"]


class TestReports:
    def test_document_report_shape(self):
        rep = score_document(S("a b c d e f"), S("a b c d e g"), S("a b c d e f g"))
        assert set(rep) == {"rouge1", "rouge2", "rougeL", "copy_ratio"}
        assert set(rep["rouge1"]) == {"p", "r", "f"}
        assert rep["copy_ratio"]["5"] == 100.0 and rep["copy_ratio"]["10"] is None

    def test_corpus_mean(self):
        a = score_document(S("a b"), S("a b"))
        b = score_document(S("c d"), S("a b"))
        m = corpus_mean([a, b])
        assert m["rouge1"]["f"] == 0.5
        assert m["copy_ratio"]["5"] is None
