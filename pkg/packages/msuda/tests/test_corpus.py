"""
Blitzer corpus parsing, vocabulary, vectorization and splits
"""

from pathlib import Path

import numpy as np
import pytest

from models.data_models import UNLABELED, RawExample, SentimentLabel, Vocabulary
from services.corpus_service import (
    attach_labels,
    build_vocabulary,
    load_corpus,
    load_corpus_files,
    parse_blitzer,
    parse_blitzer_line,
    parse_blitzer_lines,
    read_label_sidecar,
    split,
    split_indices,
    vectorize,
    vectorize_corpus,
    write_blitzer,
    write_label_sidecar,
)
from utils.errors import ConfigurationError, DataFormatError, DimensionError

GOLDEN = Path(__file__).parent / "data" / "golden.review"


class TestParsing:

    def test_labeled_line(self):
        example = parse_blitzer_line("great:2 not_bad:1 #label#:positive")
        assert example.counts == {"great": 2, "not_bad": 1}
        assert example.label == SentimentLabel.POSITIVE

    def test_unlabeled_line(self):
        assert parse_blitzer_line("awful:3").label is None

    def test_duplicate_tokens_are_summed(self):
        assert parse_blitzer_line("a:1 b:4 a:2").counts == {"a": 3, "b": 4}

    @pytest.mark.parametrize("line", [
        "great",
        ":3",
        "great:0",
        "great:-1",
        "great:1.5",
        "a:b:1",
        "#label#:positive great:1",
        "great:1 #label#:neutral",
    ])
    def test_malformed_lines(self, line):
        with pytest.raises(DataFormatError):
            parse_blitzer_line(line, "corpus.review", 7)

    def test_error_names_location(self):
        with pytest.raises(DataFormatError, match="corpus.review:7"):
            parse_blitzer_line("great:x", "corpus.review", 7)

    def test_empty_lines_skipped(self):
        examples = parse_blitzer_lines(["a:1 #label#:negative", "   ", "b:2"])
        assert [e.counts for e in examples] == [{"a": 1}, {"b": 2}]

    @pytest.mark.parametrize("inner", ["\u00a0", "\u001c", "\u001f", "\u2028"])
    def test_only_ascii_whitespace_separates_pairs(self, inner):
        example = parse_blitzer_line(f"caf{inner}au:2\tlait:1 #label#:positive")
        assert example.counts == {f"caf{inner}au": 2, "lait": 1}


class TestGoldenFile:

    def test_parses_every_line(self):
        examples = parse_blitzer(GOLDEN)
        assert len(examples) == 50
        assert all(example.label is not None for example in examples)

    def test_balanced_labels(self):
        labels = [example.label for example in parse_blitzer(GOLDEN)]
        assert labels.count(SentimentLabel.POSITIVE) == 25
        assert labels.count(SentimentLabel.NEGATIVE) == 25

    def test_first_and_last_documents(self):
        examples = parse_blitzer(GOLDEN)
        assert examples[0].counts == {"great": 2, "works_well": 1, "doc1": 2, "the": 1}
        assert examples[-1].counts == {"poor": 3, "broke_after": 1, "doc50": 1, "the": 50}
        assert examples[-1].label == SentimentLabel.NEGATIVE

    def test_write_then_parse(self, tmp_path):
        examples = parse_blitzer(GOLDEN)
        path = tmp_path / "copy.review"
        write_blitzer(path, examples)
        assert parse_blitzer(path) == examples

    def test_multi_file_order(self, tmp_path):
        second = tmp_path / "second.review"
        second.write_text("tail:1\n", encoding="utf-8")
        examples = load_corpus_files([GOLDEN, second], workers=2)
        assert len(examples) == 51
        assert examples[-1].counts == {"tail": 1}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            parse_blitzer(tmp_path / "absent.review")

    def test_non_utf8_tokens_survive(self, tmp_path):
        path = tmp_path / "latin.review"
        path.write_bytes(b"caf\xe9:2 #label#:positive\n")
        (example,) = parse_blitzer(path)
        assert sum(example.counts.values()) == 2


class TestLabelSidecar:

    def test_attach(self, tmp_path):
        path = tmp_path / "target.labels"
        write_label_sidecar(path, [1, 0])
        labels = read_label_sidecar(path)
        examples = attach_labels([RawExample({"a": 1}), RawExample({"b": 1})], labels, path)
        assert [e.label for e in examples] == [SentimentLabel.POSITIVE, SentimentLabel.NEGATIVE]

    def test_length_mismatch(self, tmp_path):
        with pytest.raises(DataFormatError):
            attach_labels([RawExample({"a": 1})], [SentimentLabel.POSITIVE] * 2, tmp_path / "x.labels")

    def test_unknown_label(self, tmp_path):
        path = tmp_path / "bad.labels"
        path.write_text("positive\nmaybe\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="bad.labels:2"):
            read_label_sidecar(path)


class TestVectorization:

    def test_vocabulary_ranking_breaks_ties_lexicographically(self):
        corpora = [[RawExample({"b": 2, "a": 1})], [RawExample({"a": 1, "c": 1, "d": 5})]]
        vocabulary = build_vocabulary(corpora, size=3)
        assert vocabulary.tokens == ["d", "a", "b"]

    def test_small_vocabulary(self):
        assert len(build_vocabulary([[RawExample({"x": 1})]], size=10)) == 1

    def test_vocabulary_ignores_file_order(self, tmp_path):
        first, second = tmp_path / "a.review", tmp_path / "b.review"
        first.write_text("good:3 fine:1 #label#:positive\nbad:2 #label#:negative\n", encoding="utf-8")
        second.write_text("fine:2 meh:2\nworse:1 bad:1\n", encoding="utf-8")
        forward = build_vocabulary([load_corpus_files([first, second])], size=4)
        backward = build_vocabulary([load_corpus_files([second, first])], size=4)
        assert forward.tokens == backward.tokens == ["bad", "fine", "good", "meh"]
        assert forward.sha256 == backward.sha256

    def test_parse_vectorize_densify(self):
        vocabulary = build_vocabulary([parse_blitzer(GOLDEN)], size=20)
        for example in parse_blitzer(GOLDEN):
            dense = vectorize(example, vocabulary).densify(len(vocabulary))
            expected = np.zeros(len(vocabulary))
            for token, count in example.counts.items():
                if token in vocabulary:
                    expected[vocabulary.index[token]] = np.log1p(count)
            np.testing.assert_allclose(dense, expected, rtol=0, atol=0)

    def test_densify_rejects_short_dimension(self):
        vector = vectorize(RawExample({"okay": 1}), Vocabulary(["good", "bad", "okay"]))
        with pytest.raises(DimensionError):
            vector.densify(2)

    def test_log_counts_and_oov(self):
        vocabulary = Vocabulary(["good", "bad", "okay"])
        vector = vectorize(RawExample({"okay": 3, "unknown": 9, "good": 1}), vocabulary)
        np.testing.assert_array_equal(vector.indices, [0, 2])
        np.testing.assert_allclose(vector.counts, [np.log(2.0), np.log(4.0)])

    def test_corpus_matrix(self):
        vocabulary = Vocabulary(["good", "bad"])
        corpus = vectorize_corpus(
            [RawExample({"good": 1}, SentimentLabel.POSITIVE), RawExample({"meh": 1})], vocabulary, "d", 0
        )
        assert corpus.features.shape == (2, 2)
        assert corpus.features[1].nnz == 0
        np.testing.assert_array_equal(corpus.labels, [1, UNLABELED])

    def test_load_corpus_rejects_foreign_vocabulary(self):
        with pytest.raises(ConfigurationError):
            load_corpus([GOLDEN], Vocabulary(["zzz"]), "eval", 0)

    def test_load_corpus(self):
        vocabulary = build_vocabulary([parse_blitzer(GOLDEN)], size=5)
        corpus = load_corpus([GOLDEN], vocabulary, "golden", 1)
        assert len(corpus) == 50
        assert corpus.dim == 5
        assert corpus.is_fully_labeled


class TestSplits:

    def test_sizes(self):
        train, val, test = split_indices(2000, (0.8, 0.1, 0.1), seed=0)
        assert (train.size, val.size, test.size) == (1600, 200, 200)
        combined = np.concatenate([train, val, test])
        np.testing.assert_array_equal(np.sort(combined), np.arange(2000))

    def test_seeded(self):
        a = split_indices(100, (0.5, 0.5), seed=4)
        b = split_indices(100, (0.5, 0.5), seed=4)
        c = split_indices(100, (0.5, 0.5), seed=5)
        np.testing.assert_array_equal(a[0], b[0])
        assert not np.array_equal(a[0], c[0])

    def test_bad_fractions(self):
        with pytest.raises(ConfigurationError):
            split_indices(10, (0.5, 0.6), seed=0)

    def test_too_small(self):
        with pytest.raises(DataFormatError):
            split_indices(2, (0.8, 0.1, 0.1), seed=0)

    @pytest.mark.parametrize("n, fractions, sizes", [
        (3, (0.5, 0.5, 0.0), (2, 1, 0)),
        (5, (0.5, 0.5), (3, 2)),
        (7, (0.1, 0.9), (1, 6)),
        (10, (0.34, 0.33, 0.33), (4, 3, 3)),
    ])
    def test_largest_remainder_sizes(self, n, fractions, sizes):
        parts = split_indices(n, fractions, seed=0)
        assert tuple(part.size for part in parts) == sizes
        np.testing.assert_array_equal(np.sort(np.concatenate(parts)), np.arange(n))

    def test_named_parts(self, small_bundle):
        parts = split(small_bundle.sources[0], (0.8, 0.1, 0.1), seed=0)
        assert [part.name for part in parts] == ["source0.train", "source0.val", "source0.test"]
        assert sum(len(part) for part in parts) == len(small_bundle.sources[0])
