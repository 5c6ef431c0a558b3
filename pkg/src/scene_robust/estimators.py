"""Scikit-learn style estimators over the functional core.

These wrappers follow the sklearn contract (``get_params``/``set_params``
via ``BaseEstimator``, state learned in ``fit`` stored in trailing-
underscore attributes) so the pipeline composes with the wider ecosystem:
the preprocessor and graph builder are transformers, the miner is a fitted
statistic, and the two models are classifiers.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .captions import CaptionRecord, preprocess_caption
from .cooccurrence import DEFAULT_NUM_SCENES, DEFAULT_WINDOW, count_tokens
from .corruption.engine import apply_corruption
from .corruption.severity import load_severity_table
from .dataset import ClassMap, shipped_class_map
from .embeddings import EmbeddingTable
from .errors import ContractError
from .fusion import rank_topk
from .graphs import KnowledgeGraph, build_graph, scene_feature_matrix
from .images import ImageBuffer
from .nn.gin import GinConfig
from .seeds import derive_seed
from .training import (
    TrainHyper,
    TrainResult,
    encode_graphs,
    train_high_level,
)
from .validation import check_labels, check_token_lists


def _require_fitted(estimator, attr: str) -> None:
    if not hasattr(estimator, attr):
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet")


class CaptionPreprocessor(TransformerMixin, BaseEstimator):
    """Stateless transformer: raw captions -> ordered valid-word lists."""

    def __init__(self, extra_person_nouns: tuple[str, ...] = ()):
        self.extra_person_nouns = extra_person_nouns

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[list[str]]:
        return [
            preprocess_caption(caption, person_nouns=self.extra_person_nouns)
            for caption in X
        ]


class CoOccurrenceMiner(BaseEstimator):
    """Fits the word/scene and word/word count matrices from token lists."""

    def __init__(self, window: int = DEFAULT_WINDOW, num_scenes: int = DEFAULT_NUM_SCENES):
        self.window = window
        self.num_scenes = num_scenes

    def fit(self, X, y):
        token_lists = check_token_lists(X)
        labels = check_labels(y, self.num_scenes)
        self.stats_ = count_tokens(token_lists, labels, self.window, self.num_scenes)
        self.vocab_ = list(self.stats_.vocab)
        return self


class KnowledgeGraphBuilder(TransformerMixin, BaseEstimator):
    """Transformer: valid-word lists -> per-caption knowledge graphs."""

    def __init__(
        self,
        stats=None,
        embeddings: EmbeddingTable | None = None,
        class_map: ClassMap | None = None,
        include_word_edges: bool = False,
    ):
        self.stats = stats
        self.embeddings = embeddings
        self.class_map = class_map
        self.include_word_edges = include_word_edges

    def fit(self, X=None, y=None):
        if self.stats is None or self.embeddings is None:
            raise ContractError("KnowledgeGraphBuilder requires stats and embeddings")
        self.class_map_ = self.class_map or shipped_class_map()
        self.scene_features_ = scene_feature_matrix(list(self.class_map_.names), self.embeddings)
        return self

    def transform(self, X) -> list[KnowledgeGraph]:
        _require_fitted(self, "scene_features_")
        token_lists = check_token_lists(X)
        return [
            build_graph(
                tokens,
                self.stats,
                self.embeddings,
                list(self.class_map_.names),
                include_word_edges=self.include_word_edges,
                scene_features=self.scene_features_,
            )
            for tokens in token_lists
        ]


class HighLevelGraphClassifier(ClassifierMixin, BaseEstimator):
    """The five-block graph encoder exposed as a 148-way classifier.

    ``fit`` consumes labeled caption records together with mined stats and
    embeddings (pass them at construction); ``predict`` and ``encode`` run
    eval-mode forward passes.
    """

    def __init__(
        self,
        stats=None,
        embeddings: EmbeddingTable | None = None,
        class_map: ClassMap | None = None,
        hidden_dim: int = 64,
        descriptor_dim: int = 128,
        dropout_rate: float = 0.5,
        lr: float = 1e-4,
        weight_decay: float = 6e-4,
        epochs: int = 15,
        batch_size: int = 64,
        seed: int = 0,
    ):
        self.stats = stats
        self.embeddings = embeddings
        self.class_map = class_map
        self.hidden_dim = hidden_dim
        self.descriptor_dim = descriptor_dim
        self.dropout_rate = dropout_rate
        self.lr = lr
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _config(self) -> GinConfig:
        return GinConfig(
            hidden_dim=self.hidden_dim,
            descriptor_dim=self.descriptor_dim,
            dropout_rate=self.dropout_rate,
        )

    def fit(self, X: Sequence[CaptionRecord], y=None):
        class_map = self.class_map or shipped_class_map()
        records = list(X)
        if y is not None:
            labels = check_labels(y, len(class_map.names))
            records = [
                CaptionRecord(r.image_id, r.caption, int(label))
                for r, label in zip(records, labels)
            ]
        hyper = TrainHyper(
            lr=self.lr,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )
        self.result_ = train_high_level(
            records, [], self.stats, self.embeddings, class_map, self._config(), hyper
        )
        self.class_map_ = class_map
        self.classes_ = np.arange(len(class_map.names))
        return self

    def _encode_records(self, X: Sequence[CaptionRecord]):
        from .training import graphs_for_records

        graphs, _ = graphs_for_records(list(X), self.stats, self.embeddings, self.class_map_)
        return encode_graphs(
            graphs, self.result_.params, self.result_.state, self.result_.config
        )

    def decision_function(self, X) -> np.ndarray:
        _require_fitted(self, "result_")
        logits, _ = self._encode_records(X)
        return logits

    def predict(self, X) -> np.ndarray:
        ranked, _ = rank_topk(self.decision_function(X), 1)
        return ranked[:, 0]

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        shift = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shift)
        return exp / exp.sum(axis=1, keepdims=True)

    def encode(self, X) -> np.ndarray:
        """Fusion descriptors (the high-level stream's output vector)."""
        _require_fitted(self, "result_")
        _, descriptors = self._encode_records(X)
        return descriptors


class LateFusionClassifier(ClassifierMixin, BaseEstimator):
    """Linear head over fused vectors z = h || l (one layer, 256 -> classes)."""

    def __init__(
        self,
        num_classes: int = 148,
        lr: float = 1e-4,
        weight_decay: float = 6e-4,
        epochs: int = 15,
        batch_size: int = 64,
        seed: int = 0,
    ):
        self.num_classes = num_classes
        self.lr = lr
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        from .nn.gin import cross_entropy
        from .nn.optim import AdamW
        from .seeds import stream_rng
        from .training import _init_head

        z = np.asarray(X, dtype=np.float64)
        if z.ndim != 2:
            raise ContractError(f"fused input must be 2-d, got shape {z.shape}")
        labels = check_labels(y, self.num_classes)
        head = _init_head(z.shape[1], self.num_classes, self.seed)
        optimizer = AdamW(lr=self.lr, weight_decay=self.weight_decay)
        n = z.shape[0]
        for epoch in range(self.epochs):
            order = stream_rng(self.seed, "shuffle", epoch).permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                logits = z[idx] @ head["head.w"] + head["head.b"]
                _, dlogits = cross_entropy(logits, labels[idx])
                grads = {"head.w": z[idx].T @ dlogits, "head.b": dlogits.sum(axis=0)}
                optimizer.step(head, grads, {"head.w", "head.b"})
        self.head_ = head
        self.classes_ = np.arange(self.num_classes)
        return self

    def decision_function(self, X) -> np.ndarray:
        _require_fitted(self, "head_")
        z = np.asarray(X, dtype=np.float64)
        return z @ self.head_["head.w"] + self.head_["head.b"]

    def predict(self, X) -> np.ndarray:
        ranked, _ = rank_topk(self.decision_function(X), 1)
        return ranked[:, 0]

    def predict_topk(self, X, k: int) -> tuple[np.ndarray, np.ndarray]:
        return rank_topk(self.decision_function(X), k)


class ImageCorruptor(TransformerMixin, BaseEstimator):
    """Transformer applying one (kind, level) corruption with derived seeds."""

    def __init__(
        self,
        kind: str = "gaussian_noise",
        level: int = 3,
        global_seed: int = 0,
        severity_config: str | None = None,
    ):
        self.kind = kind
        self.level = level
        self.global_seed = global_seed
        self.severity_config = severity_config

    def fit(self, X=None, y=None):
        self.table_ = load_severity_table(self.severity_config)
        return self

    def transform(self, X: Sequence[ImageBuffer]) -> list[ImageBuffer]:
        _require_fitted(self, "table_")
        out = []
        for image in X:
            seed = derive_seed(self.global_seed, image.image_id, self.kind, self.level)
            out.append(apply_corruption(image, self.kind, self.level, seed, self.table_))
        return out
