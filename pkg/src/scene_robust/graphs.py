"""Per-caption knowledge graphs.

A graph holds one node per distinct valid word (50-d embedding features)
plus one node per scene class, with a weighted directed edge from every word
node to every scene node.  Edge weights are the word's conditional scene
distribution from the mined counts.  Scene node features are the mean of
the embedding vectors of the scene name's tokens (fallback draws are used
for unknown tokens); the graph is built per caption, on demand.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .cooccurrence import CoOccurrenceStats, edge_weights, word_edge_weights
from .embeddings import EmbeddingTable
from .errors import ContractError, EmptyCaptionError
from .validation import EMBEDDING_DIM

_NAME_TOKEN_RE = re.compile(r"[a-z]+")


@dataclass
class KnowledgeGraph:
    """Word nodes followed by scene nodes; edges reference node indices."""

    words: list[str]
    features: np.ndarray  # (num_word_nodes + num_scenes, 50) float64
    edge_src: np.ndarray  # (E,) int64
    edge_dst: np.ndarray  # (E,) int64
    edge_weight: np.ndarray  # (E,) float64
    num_scenes: int
    label_id: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        n = len(self.words) + self.num_scenes
        if self.features.shape != (n, EMBEDDING_DIM):
            raise ContractError(
                f"graph features must have shape ({n}, {EMBEDDING_DIM}), got {self.features.shape}"
            )
        if not (len(self.edge_src) == len(self.edge_dst) == len(self.edge_weight)):
            raise ContractError("edge arrays must have equal length")
        if len(self.edge_dst) and (self.edge_dst.max() >= n or self.edge_src.max() >= n):
            raise ContractError("edge endpoints out of range")

    @property
    def num_word_nodes(self) -> int:
        return len(self.words)

    @property
    def num_nodes(self) -> int:
        return len(self.words) + self.num_scenes

    @property
    def num_edges(self) -> int:
        return len(self.edge_src)


def scene_feature(name: str, embeddings: EmbeddingTable) -> np.ndarray:
    """Mean embedding of the scene name's alphabetic tokens."""
    tokens = _NAME_TOKEN_RE.findall(name.lower())
    if not tokens:
        return embeddings.lookup(name.lower())
    return np.mean([embeddings.lookup(tok) for tok in tokens], axis=0)


def scene_feature_matrix(scene_names: list[str], embeddings: EmbeddingTable) -> np.ndarray:
    return np.stack([scene_feature(name, embeddings) for name in scene_names])


def build_graph(
    valid_words: list[str],
    stats: CoOccurrenceStats,
    embeddings: EmbeddingTable,
    scene_names: list[str],
    include_word_edges: bool = False,
    scene_features: np.ndarray | None = None,
    label_id: int | None = None,
) -> KnowledgeGraph:
    """Construct the knowledge graph for one caption's valid words.

    ``scene_features`` may be precomputed (see :func:`scene_feature_matrix`)
    to avoid recomputing the identical scene block for every caption.
    ``include_word_edges`` additionally wires word->word edges weighted by
    the row-normalized window counts (off by default).
    """
    if not valid_words:
        raise EmptyCaptionError("caption has no valid words; no graph to build")
    num_scenes = len(scene_names)
    if num_scenes != stats.num_scenes:
        raise ContractError(
            f"scene name list ({num_scenes}) does not match mined stats ({stats.num_scenes})"
        )

    words = list(dict.fromkeys(valid_words))  # distinct, first-occurrence order
    n_words = len(words)

    if scene_features is None:
        scene_features = scene_feature_matrix(scene_names, embeddings)
    features = np.empty((n_words + num_scenes, EMBEDDING_DIM))
    for i, word in enumerate(words):
        features[i] = embeddings.lookup(word)
    features[n_words:] = scene_features

    src = np.repeat(np.arange(n_words, dtype=np.int64), num_scenes)
    dst = np.tile(np.arange(num_scenes, dtype=np.int64) + n_words, n_words)
    weight = np.concatenate([edge_weights(stats, word) for word in words]) if n_words else np.zeros(0)

    if include_word_edges:
        extra_src, extra_dst, extra_w = [], [], []
        for i, word in enumerate(words):
            row = word_edge_weights(stats, word)
            for j, other in enumerate(words):
                if i == j or other not in stats.index:
                    continue
                w = row[stats.index[other]]
                if w > 0:
                    extra_src.append(i)
                    extra_dst.append(j)
                    extra_w.append(w)
        if extra_src:
            src = np.concatenate([src, np.asarray(extra_src, dtype=np.int64)])
            dst = np.concatenate([dst, np.asarray(extra_dst, dtype=np.int64)])
            weight = np.concatenate([weight, np.asarray(extra_w)])

    return KnowledgeGraph(
        words=words,
        features=features,
        edge_src=src,
        edge_dst=dst,
        edge_weight=weight,
        num_scenes=num_scenes,
        label_id=label_id,
    )
