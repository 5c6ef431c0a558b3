"""Training orchestration for the caption-graph encoder and the fusion head.

Both stages are deterministic for a fixed seed: shuffling, dropout, and
initialization all draw from named substreams of the seed, batches reduce
serially, and the optimizer visits parameters in sorted order.  The
high-level stage trains the full encoder; the fusion stage freezes it and
fits one linear layer over concatenated descriptors and low-level features.
Captions that preprocess to nothing contribute a zero descriptor and zero
logits at inference time and are dropped from training batches.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .captions import CaptionRecord, preprocess_caption
from .cooccurrence import CoOccurrenceStats
from .dataset import ClassMap
from .embeddings import EmbeddingTable
from .errors import DataError, NumericError
from .fusion import FeatureSet, fuse, rank_topk
from .graphs import KnowledgeGraph, build_graph, scene_feature_matrix
from .metrics import topk_accuracy
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.gin import (
    GinConfig,
    GraphBatch,
    cross_entropy,
    encoder_backward,
    encoder_forward,
    init_params,
    loss_and_grad,
    parameter_names,
    state_names,
    trainable_names,
)
from .nn.optim import AdamW
from .seeds import stable_hash64, stream_rng


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 1e-4
    weight_decay: float = 6e-4
    epochs: int = 15
    batch_size: int = 64
    seed: int = 0


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    state: dict[str, np.ndarray]
    config: GinConfig
    log: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


def config_hash(config: GinConfig) -> str:
    return hashlib.sha256(
        json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]


def write_training_log(rows: Sequence[dict], path: str | Path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# graph preparation
# ---------------------------------------------------------------------------


def graphs_for_records(
    records: Sequence[CaptionRecord],
    stats: CoOccurrenceStats,
    embeddings: EmbeddingTable,
    class_map: ClassMap,
) -> tuple[list[KnowledgeGraph | None], np.ndarray]:
    """Build one graph per record; empty captions map to ``None``.

    The scene feature block is computed once and shared across graphs.
    """
    scene_names = list(class_map.names)
    scene_feats = scene_feature_matrix(scene_names, embeddings)
    graphs: list[KnowledgeGraph | None] = []
    labels = np.full(len(records), -1, dtype=np.int64)
    for i, rec in enumerate(records):
        words = preprocess_caption(rec.caption)
        if rec.label_id is not None:
            labels[i] = rec.label_id
        if not words:
            graphs.append(None)
            continue
        graphs.append(
            build_graph(
                words,
                stats,
                embeddings,
                scene_names,
                scene_features=scene_feats,
                label_id=rec.label_id,
            )
        )
    return graphs, labels


def encode_graphs(
    graphs: Sequence[KnowledgeGraph | None],
    params: dict[str, np.ndarray],
    state: dict[str, np.ndarray],
    config: GinConfig,
    batch_size: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode logits and descriptors; empty-caption slots come back zero."""
    n = len(graphs)
    logits = np.zeros((n, config.readout_dim))
    descriptors = np.zeros((n, config.descriptor_dim))
    present = [i for i, g in enumerate(graphs) if g is not None]
    for start in range(0, len(present), batch_size):
        idx = present[start : start + batch_size]
        result = encoder_forward(
            GraphBatch.from_graphs([graphs[i] for i in idx]), params, state, config, mode="eval"
        )
        logits[idx] = result.logits
        descriptors[idx] = result.descriptor
    return logits, descriptors


def _epoch_metrics(logits: np.ndarray, labels: np.ndarray) -> dict[str, float]:
    out = {}
    for k in (1, 3, 5):
        ranked, _ = rank_topk(logits, min(k, logits.shape[1]))
        out[f"top{k}"] = topk_accuracy(ranked, labels, k)
    return out


# ---------------------------------------------------------------------------
# high-level stage
# ---------------------------------------------------------------------------


def train_high_level(
    train_records: Sequence[CaptionRecord],
    val_records: Sequence[CaptionRecord],
    stats: CoOccurrenceStats,
    embeddings: EmbeddingTable,
    class_map: ClassMap,
    config: GinConfig | None = None,
    hyper: TrainHyper | None = None,
) -> TrainResult:
    config = config or GinConfig()
    hyper = hyper or TrainHyper()
    if not train_records:
        raise DataError("training set is empty")

    graphs, labels = graphs_for_records(train_records, stats, embeddings, class_map)
    usable = [i for i, g in enumerate(graphs) if g is not None and labels[i] >= 0]
    if not usable:
        raise DataError("no training caption survived preprocessing")
    val_graphs, val_labels = graphs_for_records(val_records, stats, embeddings, class_map)

    params, state = init_params(config, hyper.seed)
    optimizer = AdamW(lr=hyper.lr, weight_decay=hyper.weight_decay)
    trainable = trainable_names(config)

    log: list[dict] = []
    for epoch in range(hyper.epochs):
        t0 = time.perf_counter()
        order = stream_rng(hyper.seed, "shuffle", epoch).permutation(len(usable))
        epoch_loss = 0.0
        for batch_idx, start in enumerate(range(0, len(usable), hyper.batch_size)):
            chosen = [usable[j] for j in order[start : start + hyper.batch_size]]
            batch_graphs = [graphs[i] for i in chosen]
            batch_labels = labels[chosen]
            loss, grads, state = loss_and_grad(
                batch_graphs,
                batch_labels,
                params,
                state,
                config,
                dropout_key=stable_hash64(hyper.seed, "dropout", epoch, batch_idx),
            )
            optimizer.step(params, grads, trainable)
            epoch_loss += loss * len(chosen)
        epoch_loss /= len(usable)

        row = {"epoch": epoch + 1, "train_loss": epoch_loss}
        if val_records:
            val_logits, _ = encode_graphs(val_graphs, params, state, config)
            metrics = _epoch_metrics(val_logits, val_labels)
            row.update({f"val_{k}": v for k, v in metrics.items()})
        row["wall_ms"] = int((time.perf_counter() - t0) * 1000)
        log.append(row)

    metadata = {
        "kind": "high",
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "epoch": hyper.epochs,
        "seed": hyper.seed,
    }
    return TrainResult(params=params, state=state, config=config, log=log, metadata=metadata)


def save_high_checkpoint(result: TrainResult, path: str | Path) -> None:
    tensors = dict(result.params)
    tensors.update(result.state)
    save_checkpoint(path, tensors, result.metadata)


def load_high_checkpoint(path: str | Path) -> TrainResult:
    config_probe = load_checkpoint(path)[1]
    if config_probe.get("kind") != "high":
        raise DataError(f"{path}: expected a high-level checkpoint, got {config_probe.get('kind')!r}")
    config = GinConfig.from_dict(config_probe["config"])
    expected = set(parameter_names(config)) | set(state_names(config))
    tensors, metadata = load_checkpoint(path, expected_names=expected)
    params = {k: tensors[k].astype(np.float64) for k in parameter_names(config)}
    state = {k: tensors[k].astype(np.float64) for k in state_names(config)}
    return TrainResult(params=params, state=state, config=config, metadata=metadata)


# ---------------------------------------------------------------------------
# fusion stage
# ---------------------------------------------------------------------------

FUSION_HEAD_NAMES = {"head.w", "head.b"}


def _init_head(z_dim: int, num_classes: int, seed: int) -> dict[str, np.ndarray]:
    rng = stream_rng(seed, "init", "fusion-head")
    bound = 1.0 / np.sqrt(z_dim)
    return {
        "head.w": rng.uniform(-bound, bound, size=(z_dim, num_classes)),
        "head.b": rng.uniform(-bound, bound, size=(num_classes,)),
    }


def fusion_logits(z: np.ndarray, head: dict[str, np.ndarray]) -> np.ndarray:
    return z @ head["head.w"] + head["head.b"]


def _fused_matrix(
    records: Sequence[CaptionRecord],
    descriptors: np.ndarray,
    features: FeatureSet,
    config: GinConfig,
) -> np.ndarray:
    missing = features.missing_ids([rec.image_id for rec in records])
    if missing:
        raise DataError(
            f"{len(missing)} labeled images have no feature vector: {missing[:10]}"
            + (" ..." if len(missing) > 10 else "")
        )
    lows = np.stack([features[rec.image_id] for rec in records]).astype(np.float64)
    return fuse(descriptors, lows, descriptor_dim=config.descriptor_dim)


def train_fusion(
    train_records: Sequence[CaptionRecord],
    val_records: Sequence[CaptionRecord],
    features: FeatureSet,
    high: TrainResult,
    stats: CoOccurrenceStats,
    embeddings: EmbeddingTable,
    class_map: ClassMap,
    hyper: TrainHyper | None = None,
) -> TrainResult:
    """Fit the 256->148 fusion head with the encoder frozen.

    Only head tensors receive updates; the encoder tensors are embedded in
    the resulting checkpoint byte-for-byte unchanged.
    """
    hyper = hyper or TrainHyper()
    config = high.config
    if not train_records:
        raise DataError("training set is empty")

    graphs, labels = graphs_for_records(train_records, stats, embeddings, class_map)
    _, descriptors = encode_graphs(graphs, high.params, high.state, config)
    z_train = _fused_matrix(train_records, descriptors, features, config)
    usable = np.nonzero(labels >= 0)[0]
    if usable.size == 0:
        raise DataError("no labeled training records")

    val_z = None
    val_labels = None
    if val_records:
        val_graphs, val_labels = graphs_for_records(val_records, stats, embeddings, class_map)
        _, val_desc = encode_graphs(val_graphs, high.params, high.state, config)
        val_z = _fused_matrix(val_records, val_desc, features, config)

    num_classes = config.readout_dim
    head = _init_head(z_train.shape[1], num_classes, hyper.seed)
    optimizer = AdamW(lr=hyper.lr, weight_decay=hyper.weight_decay)

    log: list[dict] = []
    for epoch in range(hyper.epochs):
        t0 = time.perf_counter()
        order = stream_rng(hyper.seed, "shuffle", epoch).permutation(usable.size)
        epoch_loss = 0.0
        for start in range(0, usable.size, hyper.batch_size):
            idx = usable[order[start : start + hyper.batch_size]]
            logits = fusion_logits(z_train[idx], head)
            loss, dlogits = cross_entropy(logits, labels[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite fusion loss: {loss}")
            grads = {
                "head.w": z_train[idx].T @ dlogits,
                "head.b": dlogits.sum(axis=0),
            }
            optimizer.step(head, grads, FUSION_HEAD_NAMES)
            epoch_loss += loss * idx.size
        epoch_loss /= usable.size

        row = {"epoch": epoch + 1, "train_loss": epoch_loss}
        if val_z is not None:
            metrics = _epoch_metrics(fusion_logits(val_z, head), val_labels)
            row.update({f"val_{k}": v for k, v in metrics.items()})
        row["wall_ms"] = int((time.perf_counter() - t0) * 1000)
        log.append(row)

    params = {f"encoder.{k}": v for k, v in high.params.items()}
    params.update(head)
    state = {f"encoder.{k}": v for k, v in high.state.items()}
    metadata = {
        "kind": "fusion",
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "epoch": hyper.epochs,
        "seed": hyper.seed,
        "feature_source": features.source,
    }
    return TrainResult(params=params, state=state, config=config, log=log, metadata=metadata)


def save_fusion_checkpoint(result: TrainResult, path: str | Path) -> None:
    tensors = dict(result.params)
    tensors.update(result.state)
    save_checkpoint(path, tensors, result.metadata)


def load_fusion_checkpoint(path: str | Path) -> TrainResult:
    metadata_probe = load_checkpoint(path)[1]
    if metadata_probe.get("kind") != "fusion":
        raise DataError(f"{path}: expected a fusion checkpoint, got {metadata_probe.get('kind')!r}")
    config = GinConfig.from_dict(metadata_probe["config"])
    expected = (
        {f"encoder.{n}" for n in parameter_names(config)}
        | {f"encoder.{n}" for n in state_names(config)}
        | FUSION_HEAD_NAMES
    )
    tensors, metadata = load_checkpoint(path, expected_names=expected)
    params = {k: v.astype(np.float64) for k, v in tensors.items() if k not in state_names_set(config)}
    state = {k: v.astype(np.float64) for k, v in tensors.items() if k in state_names_set(config)}
    return TrainResult(params=params, state=state, config=config, metadata=metadata)


def state_names_set(config: GinConfig) -> set[str]:
    return {f"encoder.{n}" for n in state_names(config)}


def split_fusion_result(result: TrainResult) -> tuple[TrainResult, dict[str, np.ndarray]]:
    """Unpack a fusion TrainResult into the frozen encoder and the head."""
    encoder_params = {
        k.removeprefix("encoder."): v
        for k, v in result.params.items()
        if k.startswith("encoder.")
    }
    encoder_state = {
        k.removeprefix("encoder."): v
        for k, v in result.state.items()
        if k.startswith("encoder.")
    }
    head = {k: v for k, v in result.params.items() if k in FUSION_HEAD_NAMES}
    encoder = TrainResult(
        params=encoder_params, state=encoder_state, config=result.config, metadata=result.metadata
    )
    return encoder, head
