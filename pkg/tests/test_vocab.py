"""Dictionary construction, serialization, and pretrained embedding loading."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from greedyparse.treebank import parse_trees
from greedyparse.vocab import (
    DimensionMismatch,
    EmptyCorpus,
    MalformedLine,
    PADDING_WORD,
    UNKNOWN_WORD,
    UnknownLabel,
    UnknownPosTag,
    bioes_alphabet,
    build_tagset,
    load_pretrained_embeddings,
    load_tagset,
    save_tagset,
)

from helpers import tiny_corpus, tiny_tagset


class TestBuild:
    def test_bioes_size_two_labels(self):
        trees = parse_trees(
            "(S (NP (NN dog)) (VP (VB runs)))\n(S (NP (NN cat)) (VP (VB sits)))"
        )
        # labels observed: S, NP, VP -> drop S by hand-checking only the formula
        tagset = build_tagset(trees)
        assert tagset.n_bioes == 4 * tagset.n_labels + 1
        alphabet = bioes_alphabet(["NP", "VP"])
        assert set(alphabet) == {
            "B-NP", "I-NP", "E-NP", "S-NP",
            "B-VP", "I-VP", "E-VP", "S-VP",
            "O",
        }
        assert alphabet["O"] == 8

    def test_case_folding(self):
        trees = parse_trees("(S (NP (DT The) (NN dog)) (VP (VB the)))")
        tagset = build_tagset(trees)
        assert "the" in tagset.words
        assert "The" not in tagset.words
        assert tagset.word_index("THE") == tagset.word_index("the")

    def test_min_word_count_maps_to_unk(self):
        trees = parse_trees(
            "(S (NP (NN dog)) (VP (VB runs)))\n(S (NP (NN dog)) (VP (VB sits)))"
        )
        tagset = build_tagset(trees, min_word_count=2)
        assert tagset.word_index("dog") != tagset.words[UNKNOWN_WORD]
        assert tagset.word_index("runs") == tagset.words[UNKNOWN_WORD]

    def test_reserved_entries(self):
        tagset = tiny_tagset()
        assert tagset.words[PADDING_WORD] == 0
        assert tagset.words[UNKNOWN_WORD] == 1

    def test_empty_corpus_raises(self):
        with pytest.raises(EmptyCorpus):
            build_tagset([])

    def test_unknown_lookups_raise(self):
        tagset = tiny_tagset()
        with pytest.raises(UnknownPosTag):
            tagset.pos_tag_index("XX")
        with pytest.raises(UnknownLabel):
            tagset.label_tag_index("XX")

    def test_combined_tag_indices(self):
        tagset = tiny_tagset()
        for label, index in tagset.parse_labels.items():
            assert tagset.label_tag_index(label) == tagset.n_pos + index

    def test_root_label_most_frequent(self):
        tagset = tiny_tagset()
        assert tagset.root_label == "S"

    @given(st.integers(min_value=1, max_value=12))
    def test_bioes_algebra(self, n_labels):
        labels = [f"L{i}" for i in range(n_labels)]
        assert len(bioes_alphabet(labels)) == 4 * n_labels + 1


class TestSerialization:
    def test_round_trip(self, tmp_path):
        tagset = tiny_tagset()
        path = tmp_path / "tagset.txt"
        save_tagset(tagset, path)
        loaded = load_tagset(path)
        assert loaded == tagset

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        save_tagset(build_tagset(tiny_corpus()), a)
        save_tagset(build_tagset(tiny_corpus()), b)
        assert a.read_bytes() == b.read_bytes()


class TestEmbeddings:
    def _write(self, tmp_path, text):
        path = tmp_path / "vectors.txt"
        path.write_text(text, encoding="utf-8")
        return path

    def test_matched_column(self, tmp_path):
        tagset = tiny_tagset()
        values = " ".join(str(0.1 * i) for i in range(4))
        path = self._write(tmp_path, f"dog {values}\n")
        table, report = load_pretrained_embeddings(path, tagset, 4)
        np.testing.assert_allclose(
            table[:, tagset.word_index("dog")], [0.0, 0.1, 0.2, 0.3]
        )
        assert report.loaded == 1
        assert report.missing == tagset.n_words - 1

    def test_empty_file_all_default(self, tmp_path):
        tagset = tiny_tagset()
        path = self._write(tmp_path, "")
        table, report = load_pretrained_embeddings(path, tagset, 4)
        assert table.shape == (4, tagset.n_words)
        assert report.loaded == 0
        assert report.missing == tagset.n_words
        assert (np.abs(table) <= 0.1).all()

    def test_unknown_word_skipped_and_counted(self, tmp_path):
        tagset = tiny_tagset()
        lines = "\n".join(
            f"{w} 1 2 3 4" for w in ["dog", "zzzz", "cat", "qqqq", "wwww"]
        )
        path = self._write(tmp_path, lines + "\n")
        _, report = load_pretrained_embeddings(path, tagset, 4)
        assert report.skipped == 3
        assert report.loaded == 2

    def test_dimension_mismatch(self, tmp_path):
        tagset = tiny_tagset()
        path = self._write(tmp_path, "dog 1 2 3\n")
        with pytest.raises(DimensionMismatch):
            load_pretrained_embeddings(path, tagset, 4)

    def test_malformed_line(self, tmp_path):
        tagset = tiny_tagset()
        path = self._write(tmp_path, "dog 1 2 x 4\n")
        with pytest.raises(MalformedLine):
            load_pretrained_embeddings(path, tagset, 4)
