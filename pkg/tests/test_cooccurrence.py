"""Co-occurrence mining against a quadratic brute-force oracle.

The oracle enumerates position pairs directly and never shares code with
the miner; hypothesis drives it over random mini-corpora.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scene_robust.captions import CaptionRecord
from scene_robust.cooccurrence import (
    CoOccurrenceStats,
    count_tokens,
    edge_weights,
    load_stats,
    merge_stats,
    mine_cooccurrence,
    save_stats,
    word_edge_weights,
)
from scene_robust.errors import DataError, FormatError


def brute_force_counts(token_lists, labels, window, num_scenes):
    """Independent oracle: quadratic enumeration of token-position pairs."""
    vocab = sorted({t for tokens in token_lists for t in tokens})
    index = {w: i for i, w in enumerate(vocab)}
    scene = np.zeros((len(vocab), num_scenes), dtype=np.uint64)
    word = np.zeros((len(vocab), len(vocab)), dtype=np.uint64)
    for tokens, label in zip(token_lists, labels):
        for t in tokens:
            scene[index[t], label] += 1
        for p in range(len(tokens)):
            for q in range(len(tokens)):
                if p != q and abs(p - q) <= window - 1:
                    word[index[tokens[p]], index[tokens[q]]] += 1
    return vocab, scene, word


words_strategy = st.lists(
    st.sampled_from([f"w{i}" for i in range(20)]), min_size=0, max_size=12
)
corpus_strategy = st.lists(
    st.tuples(words_strategy, st.integers(min_value=0, max_value=7)),
    min_size=0,
    max_size=50,
)


class TestCountTokens:
    def test_scene_counts_example(self):
        stats = count_tokens([["sink", "mirror"], ["sink", "table"]], [0, 0], window=3, num_scenes=4)
        i = stats.index
        assert stats.scene_counts[i["sink"], 0] == 2
        assert stats.scene_counts[i["mirror"], 0] == 1
        assert stats.scene_counts[i["table"], 0] == 1

    def test_window_example(self):
        """[a, b, c] with window 2 pairs only adjacent positions."""
        stats = count_tokens([["a", "b", "c"]], [0], window=2, num_scenes=2)
        i = stats.index
        assert stats.word_counts[i["a"], i["b"]] == 1
        assert stats.word_counts[i["b"], i["c"]] == 1
        assert stats.word_counts[i["a"], i["c"]] == 0

    def test_empty_stream(self):
        stats = mine_cooccurrence([], window=3, num_scenes=148)
        assert stats.vocab == []
        assert stats.scene_counts.shape == (0, 148)
        assert stats.word_counts.shape == (0, 0)

    def test_unlabeled_record_rejected(self):
        with pytest.raises(DataError, match="unlabeled"):
            mine_cooccurrence([CaptionRecord("x", "a sink")], window=3)

    def test_window_below_two_rejected(self):
        with pytest.raises(DataError, match="window"):
            count_tokens([["a"]], [0], window=1, num_scenes=2)

    @given(corpus_strategy, st.integers(min_value=2, max_value=6))
    @settings(max_examples=150, deadline=None)
    def test_matches_brute_force_oracle(self, corpus, window):
        token_lists = [tokens for tokens, _ in corpus]
        labels = [label for _, label in corpus]
        stats = count_tokens(token_lists, labels, window=window, num_scenes=8)
        vocab, scene, word = brute_force_counts(token_lists, labels, window, 8)
        assert stats.vocab == vocab
        assert np.array_equal(stats.scene_counts, scene)
        assert np.array_equal(stats.word_counts, word)

    @given(corpus_strategy)
    @settings(max_examples=60, deadline=None)
    def test_word_matrix_symmetric(self, corpus):
        token_lists = [tokens for tokens, _ in corpus]
        labels = [label for _, label in corpus]
        stats = count_tokens(token_lists, labels, window=3, num_scenes=8)
        assert np.array_equal(stats.word_counts, stats.word_counts.T)

    def test_scene_row_sums_equal_occurrences(self):
        token_lists = [["a", "a", "b"], ["a"]]
        stats = count_tokens(token_lists, [0, 3], window=2, num_scenes=5)
        assert stats.scene_counts[stats.index["a"]].sum() == 3
        assert stats.scene_counts[stats.index["b"]].sum() == 1


class TestMerge:
    def test_merge_equals_single_pass(self):
        """Thread-local partial counts merge to the single-writer result."""
        corpora = [
            ([["a", "b"], ["b", "c", "a"]], [0, 1]),
            ([["c", "d"]], [2]),
            ([], []),
        ]
        parts = [count_tokens(t, l, 3, 8) if t else
                 CoOccurrenceStats([], np.zeros((0, 8), np.uint64), np.zeros((0, 0), np.uint64), 3)
                 for t, l in corpora]
        merged = merge_stats(parts)
        merged_rev = merge_stats(parts[::-1])
        all_tokens = [t for ts, _ in corpora for t in ts]
        all_labels = [l for _, ls in corpora for l in ls]
        single = count_tokens(all_tokens, all_labels, 3, 8)
        for result in (merged, merged_rev):
            assert result.vocab == single.vocab
            assert np.array_equal(result.scene_counts, single.scene_counts)
            assert np.array_equal(result.word_counts, single.word_counts)


class TestEdgeWeights:
    def _stats(self, row):
        counts = np.array([row], dtype=np.uint64)
        return CoOccurrenceStats(["w"], counts, np.zeros((1, 1), np.uint64), 3)

    def test_single_scene(self):
        w = edge_weights(self._stats([4, 0, 0, 0]), "w")
        assert np.allclose(w, [1.0, 0.0, 0.0, 0.0])

    def test_direct_arithmetic(self):
        w = edge_weights(self._stats([2, 1, 1, 0]), "w")
        assert np.allclose(w, [0.5, 0.25, 0.25, 0.0])

    def test_zero_row_uniform(self):
        w = edge_weights(self._stats([0, 0, 0, 0]), "w")
        assert np.allclose(w, 0.25)

    def test_unseen_word_uniform(self):
        w = edge_weights(self._stats([1, 2, 3, 4]), "unseen")
        assert np.allclose(w, 0.25)

    def test_weights_always_sum_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            row = rng.integers(0, 50, size=9)
            w = edge_weights(
                CoOccurrenceStats(["w"], np.array([row], dtype=np.uint64),
                                  np.zeros((1, 1), np.uint64), 3),
                "w",
            )
            assert abs(w.sum() - 1.0) <= 1e-9

    def test_word_edge_weights_normalized(self):
        counts = np.array([[0, 2], [2, 0]], dtype=np.uint64)
        stats = CoOccurrenceStats(["a", "b"], np.zeros((2, 3), np.uint64), counts, 3)
        assert np.allclose(word_edge_weights(stats, "a"), [0.0, 1.0])


class TestPersistence:
    def test_round_trip(self, tmp_path):
        stats = count_tokens([["sink", "mirror"], ["table"]], [0, 2], window=4, num_scenes=6)
        path = tmp_path / "stats.bin"
        save_stats(stats, path)
        loaded = load_stats(path)
        assert loaded.vocab == stats.vocab
        assert loaded.window == stats.window
        assert np.array_equal(loaded.scene_counts, stats.scene_counts)
        assert np.array_equal(loaded.word_counts, stats.word_counts)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(FormatError, match="P148COOC"):
            load_stats(path)

    def test_truncation_detected(self, tmp_path):
        stats = count_tokens([["sink", "mirror"]], [0], window=3, num_scenes=6)
        path = tmp_path / "stats.bin"
        save_stats(stats, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-9])
        with pytest.raises(FormatError):
            load_stats(path)
