import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from polyir.corpus import (
    CorpusStats,
    Document,
    TokenizerConfig,
    compute_stats,
    idf,
    load_corpus,
    tfidf_weight,
    tokenize,
)
from polyir.errors import CorpusFormatError, DuplicateDocumentError

from conftest import write_jsonl


class TestTokenize:
    def test_lowercase_and_punctuation(self):
        assert tokenize("The cat sat.") == ["the", "cat", "sat"]

    def test_empty(self):
        assert tokenize("") == []

    def test_internal_hyphen_min_len_and_stopwords(self):
        config = TokenizerConfig(min_token_len=2, stopwords={"rise"})
        assert tokenize("IL-6 levels rise", config) == ["il-6", "levels"]

    def test_edge_hyphens_are_stripped(self):
        assert tokenize("-x- well-known--thing") == ["x", "well-known", "thing"]

    def test_unicode_lowercasing(self):
        assert tokenize("Ärger ÜBER Straße") == ["ärger", "über", "straße"]

    def test_stopwords_apply_after_lowercasing(self):
        assert tokenize("The THE the cat", TokenizerConfig(stopwords={"the"})) == ["cat"]

    def test_min_len_runs_after_stopwords(self):
        config = TokenizerConfig(min_token_len=3, stopwords={"cat"})
        assert tokenize("a cat is here", config) == ["here"]

    def test_no_punctuation_stripping_splits_on_whitespace(self):
        assert tokenize("Hi, there!", TokenizerConfig(strip_punctuation=False)) == ["hi,", "there!"]

    def test_invalid_min_len(self):
        with pytest.raises(ValueError):
            TokenizerConfig(min_token_len=0)

    @given(
        st.text(),
        st.booleans(),
        st.booleans(),
        st.integers(min_value=1, max_value=4),
        st.frozensets(st.sampled_from(["a", "the", "of", "x1"])),
    )
    def test_deterministic_and_idempotent(self, text, lower, strip, min_len, stop):
        config = TokenizerConfig(lower, strip, stop, min_len)
        once = tokenize(text, config)
        assert once == tokenize(text, config)
        assert tokenize(" ".join(once), config) == once


class TestLoadCorpus:
    def test_two_docs_mean_length(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [{"id": "d1", "title": "", "text": "a b c"}, {"id": "d2", "title": "", "text": "a b c d e"}])
        docs, stats = load_corpus(path)
        assert [d.doc_id for d in docs] == ["d1", "d2"]
        assert stats.n_docs == 2
        assert stats.avg_doc_len == 4.0

    def test_single_doc_frequencies(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [{"id": "d1", "title": "t", "text": "a b a"}])
        _, stats = load_corpus(path)
        assert dict(stats.doc_freq) == {"a": 1, "b": 1}
        assert dict(stats.doc_len) == {"d1": 3}

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [{"id": "d1", "title": "", "text": "x"}, {"id": "d1", "title": "", "text": "y"}])
        with pytest.raises(DuplicateDocumentError, match="d1"):
            load_corpus(path)

    @pytest.mark.parametrize(
        "bad_line",
        ['{"id": "d2", "title": ""', '{"id": "d2", "text": "x"}', '["d2"]', '{"id": "d2", "title": "", "text": ""}'],
    )
    def test_malformed_line_names_line_number(self, tmp_path, bad_line):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "d1", "title": "", "text": "x"}\n' + bad_line + "\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError) as err:
            load_corpus(path)
        assert err.value.line_no == 2
        assert "line 2" in str(err.value)

    def test_caption_is_optional(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [{"id": "d1", "title": "", "text": "x", "caption": "a dog"}])
        docs, _ = load_corpus(path)
        assert docs[0].caption == "a dog"

    def test_stats_recomputed_identically(self, corpus_file):
        assert load_corpus(corpus_file)[1] == load_corpus(corpus_file)[1]

    def test_stats_invariants(self, toy_docs):
        stats = compute_stats(toy_docs)
        assert stats.n_docs == len(toy_docs)
        assert all(0 < df <= stats.n_docs for df in stats.doc_freq.values())
        assert stats.avg_doc_len == pytest.approx(sum(stats.doc_len.values()) / len(stats.doc_len))

    def test_threads_do_not_change_stats(self, toy_docs):
        assert compute_stats(toy_docs, threads=4) == compute_stats(toy_docs)

    def test_document_invariants(self):
        with pytest.raises(ValueError):
            Document("", "t", "body")
        with pytest.raises(ValueError):
            Document("d", "t", "   ")


def _stats(n_docs, doc_freq):
    return CorpusStats(n_docs=n_docs, doc_freq=doc_freq, avg_doc_len=1.0, doc_len={})


class TestTfidf:
    def test_zero_tf(self):
        assert tfidf_weight("x", 0, _stats(5, {"x": 2})) == 0.0

    def test_single_doc(self):
        assert tfidf_weight("x", 2, _stats(1, {"x": 1})) == 2.0

    def test_reference_value(self):
        # ln(11/4) + 1, evaluated with mpmath at 30 digits
        assert tfidf_weight("x", 1, _stats(10, {"x": 3})) == pytest.approx(2.01160091167847992522747933505, abs=1e-12)

    def test_unseen_term_is_finite(self):
        assert idf("nope", _stats(10, {})) == pytest.approx(math.log(11) + 1)

    def test_negative_tf_rejected(self):
        with pytest.raises(ValueError):
            tfidf_weight("x", -1, _stats(1, {}))

    @given(st.integers(1, 1000), st.data())
    def test_idf_strictly_decreasing_in_df(self, n, data):
        df = data.draw(st.integers(0, n - 1))
        assert idf("t", _stats(n, {"t": df})) > idf("t", _stats(n, {"t": df + 1}))

    @given(st.integers(0, 50), st.integers(0, 50))
    def test_linear_in_tf(self, a, b):
        stats = _stats(20, {"t": 4})
        assert tfidf_weight("t", a + b, stats) == pytest.approx(tfidf_weight("t", a, stats) + tfidf_weight("t", b, stats))
