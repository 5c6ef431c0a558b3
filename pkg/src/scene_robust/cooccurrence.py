"""Co-occurrence mining over labeled captions.

Two count matrices are produced: word x scene counts (every occurrence of a
valid word in a caption labeled with that scene) and word x word counts
(every ordered pair of valid-word positions closer than the window size).
The word matrix is symmetric by construction.  Row-normalizing the scene
matrix yields the conditional edge weights used by the knowledge graph;
zero-count rows fall back to the uniform distribution so the graph stays
connected and the weights remain a probability vector.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .captions import CaptionRecord, iter_labeled, preprocess_caption
from .errors import DataError, FormatError
from .validation import check_labels

DEFAULT_WINDOW = 3
DEFAULT_NUM_SCENES = 148

_MAGIC = b"P148COOC"
_VERSION = 1


@dataclass
class CoOccurrenceStats:
    """Vocabularies plus the two integer count matrices."""

    vocab: list[str]
    scene_counts: np.ndarray  # (W, Y) uint64
    word_counts: np.ndarray  # (W, W) uint64, symmetric
    window: int

    def __post_init__(self) -> None:
        w = len(self.vocab)
        if self.scene_counts.shape[0] != w or self.word_counts.shape != (w, w):
            raise DataError("count matrix shapes do not match the vocabulary size")
        self.index = {word: i for i, word in enumerate(self.vocab)}
        if len(self.index) != w:
            raise DataError("vocabulary contains duplicates")

    @property
    def num_scenes(self) -> int:
        return self.scene_counts.shape[1]


def count_tokens(
    token_lists: Sequence[Sequence[str]],
    labels: Sequence[int],
    window: int,
    num_scenes: int,
) -> CoOccurrenceStats:
    """Count scene and window co-occurrences over pre-tokenized captions."""
    if window < 2:
        raise DataError(f"window size must be >= 2, got {window}")
    labels = check_labels(labels, num_scenes)
    if len(token_lists) != len(labels):
        raise DataError("token lists and labels differ in length")

    vocab = sorted({tok for tokens in token_lists for tok in tokens})
    index = {word: i for i, word in enumerate(vocab)}
    w = len(vocab)
    scene_counts = np.zeros((w, num_scenes), dtype=np.uint64)
    word_counts = np.zeros((w, w), dtype=np.uint64)

    for tokens, label in zip(token_lists, labels):
        ids = [index[t] for t in tokens]
        for i in ids:
            scene_counts[i, label] += 1
        for p in range(len(ids)):
            for q in range(p + 1, min(p + window, len(ids))):
                word_counts[ids[p], ids[q]] += 1
                word_counts[ids[q], ids[p]] += 1

    return CoOccurrenceStats(vocab, scene_counts, word_counts, window)


def mine_cooccurrence(
    records: Iterable[CaptionRecord],
    window: int = DEFAULT_WINDOW,
    num_scenes: int = DEFAULT_NUM_SCENES,
    preprocess: Callable[[str], list[str]] = preprocess_caption,
) -> CoOccurrenceStats:
    """Preprocess labeled records and mine both co-occurrence matrices."""
    token_lists: list[list[str]] = []
    labels: list[int] = []
    for rec in iter_labeled(records):
        token_lists.append(preprocess(rec.caption))
        labels.append(rec.label_id)
    if not token_lists:
        return CoOccurrenceStats(
            [],
            np.zeros((0, num_scenes), dtype=np.uint64),
            np.zeros((0, 0), dtype=np.uint64),
            window,
        )
    return count_tokens(token_lists, labels, window, num_scenes)


def merge_stats(parts: Sequence[CoOccurrenceStats]) -> CoOccurrenceStats:
    """Elementwise-add partial counts (thread-local accumulation support).

    The merge is order-independent: vocabularies are unioned and re-indexed
    canonically before adding.
    """
    if not parts:
        raise DataError("nothing to merge")
    window = parts[0].window
    num_scenes = parts[0].num_scenes
    for part in parts:
        if part.window != window or part.num_scenes != num_scenes:
            raise DataError("cannot merge stats with differing window or scene count")
    vocab = sorted(set().union(*(part.vocab for part in parts)))
    index = {word: i for i, word in enumerate(vocab)}
    w = len(vocab)
    scene_counts = np.zeros((w, num_scenes), dtype=np.uint64)
    word_counts = np.zeros((w, w), dtype=np.uint64)
    for part in parts:
        rows = np.array([index[word] for word in part.vocab], dtype=np.int64)
        if rows.size:
            scene_counts[rows] += part.scene_counts
            word_counts[np.ix_(rows, rows)] += part.word_counts
    return CoOccurrenceStats(vocab, scene_counts, word_counts, window)


def edge_weights(stats: CoOccurrenceStats, word: str) -> np.ndarray:
    """Scene edge weights for one word: its normalized scene-count row.

    Unseen words and zero-count rows receive the uniform vector so the
    result is always a probability distribution over scenes.
    """
    y = stats.num_scenes
    row_idx = stats.index.get(word)
    if row_idx is None:
        return np.full(y, 1.0 / y)
    row = stats.scene_counts[row_idx].astype(np.float64)
    total = row.sum()
    if total <= 0:
        return np.full(y, 1.0 / y)
    return row / total


def word_edge_weights(stats: CoOccurrenceStats, word: str) -> np.ndarray:
    """Row-normalized word-window counts (optional word-word edges)."""
    w = len(stats.vocab)
    row_idx = stats.index.get(word)
    if row_idx is None or w == 0:
        return np.zeros(w)
    row = stats.word_counts[row_idx].astype(np.float64)
    total = row.sum()
    return row / total if total > 0 else np.zeros(w)


# ---------------------------------------------------------------------------
# persistence: magic, version, window, dimensions, vocab, row-major u64 counts
# ---------------------------------------------------------------------------


def save_stats(stats: CoOccurrenceStats, path: str | Path) -> None:
    path = Path(path)
    w = len(stats.vocab)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIQQ", _VERSION, stats.window, w, stats.num_scenes))
        for word in stats.vocab:
            encoded = word.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
        fh.write(np.ascontiguousarray(stats.scene_counts, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(stats.word_counts, dtype="<u8").tobytes())


def load_stats(path: str | Path) -> CoOccurrenceStats:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read stats {path}: {exc}") from exc

    view = memoryview(blob)
    if len(view) < len(_MAGIC) + 24 or bytes(view[:8]) != _MAGIC:
        raise FormatError(f"{path}: not a {_MAGIC.decode()} file")
    version, window, w, y = struct.unpack_from("<IIQQ", view, 8)
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 32
    vocab: list[str] = []
    try:
        for _ in range(w):
            (length,) = struct.unpack_from("<H", view, offset)
            offset += 2
            vocab.append(bytes(view[offset : offset + length]).decode("utf-8"))
            offset += length
        scene_n = w * y * 8
        scene_counts = (
            np.frombuffer(view[offset : offset + scene_n], dtype="<u8").reshape(w, y).copy()
        )
        offset += scene_n
        word_n = w * w * 8
        word_counts = (
            np.frombuffer(view[offset : offset + word_n], dtype="<u8").reshape(w, w).copy()
        )
        offset += word_n
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated or corrupt stats file") from exc
    if offset != len(view):
        raise FormatError(f"{path}: trailing bytes after counts")
    return CoOccurrenceStats(vocab, scene_counts, word_counts, window)
