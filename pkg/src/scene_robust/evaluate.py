"""Scoring a model over the 76-subset corrupted benchmark.

For each subset the captions are turned into graphs and encoded; a fusion
model additionally consumes that subset's low-level feature file.  The
resulting top-1 errors feed the corruption-error metrics against a supplied
baseline table, and precision-recall curves are computed on the clean subset
from softmax scores.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from .captions import CaptionRecord, read_caption_records
from .cooccurrence import CoOccurrenceStats
from .corruption.severity import CORRUPTION_KINDS, SEVERITY_LEVELS
from .dataset import ClassMap, Manifest, ManifestRecord, subset_name
from .embeddings import EmbeddingTable
from .errors import DataError
from .fusion import FeatureSet, fuse, ingest_features, rank_topk
from .metrics import (
    ErrorTable,
    EvalReport,
    corruption_error,
    mean_ce,
    mean_rce,
    pr_curve,
    relative_corruption_error,
    topk_accuracy,
)
from .training import (
    TrainResult,
    encode_graphs,
    fusion_logits,
    graphs_for_records,
    split_fusion_result,
)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shift = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shift)
    return exp / exp.sum(axis=1, keepdims=True)


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class CaptionSource:
    """Per-subset caption lookup with fallback to a shared caption file.

    A directory may hold ``<subset>.jsonl`` files (captions regenerated on the
    corrupted images); a single file serves every subset (clean captions
    reused, the desk-scale fixture mode).
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._cache: dict[str, dict[str, CaptionRecord]] = {}
        if not self.path.exists():
            raise DataError(f"caption source {self.path} does not exist")

    def _load(self, name: str) -> dict[str, CaptionRecord]:
        if name not in self._cache:
            if self.path.is_dir():
                candidate = self.path / f"{name}.jsonl"
                if not candidate.exists():
                    candidate = self.path / "captions.jsonl"
                if not candidate.exists():
                    raise DataError(f"no captions for subset {name!r} under {self.path}")
            else:
                candidate = self.path
            self._cache[name] = {rec.image_id: rec for rec in read_caption_records(candidate)}
        return self._cache[name]

    def for_subset(self, name: str, records: Sequence[ManifestRecord]) -> list[CaptionRecord]:
        table = self._load(name)
        missing = [r.image_id for r in records if r.image_id not in table]
        if missing:
            raise DataError(f"subset {name!r}: captions missing for {missing[:10]}")
        return [table[r.image_id] for r in records]


class FeatureSource:
    """Per-subset P148FEAT lookup under a directory."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.is_dir():
            raise DataError(f"feature directory {self.path} does not exist")
        self._cache: dict[str, FeatureSet] = {}

    def for_subset(self, name: str) -> FeatureSet:
        if name not in self._cache:
            candidate = self.path / f"{name}.p148feat"
            if not candidate.exists():
                raise DataError(f"no feature file for subset {name!r} under {self.path}")
            self._cache[name] = ingest_features(candidate)
        return self._cache[name]


def _subset_logits(
    records: Sequence[ManifestRecord],
    captions: Sequence[CaptionRecord],
    model: TrainResult,
    head: dict[str, np.ndarray] | None,
    features: FeatureSet | None,
    stats: CoOccurrenceStats,
    embeddings: EmbeddingTable,
    class_map: ClassMap,
) -> np.ndarray:
    graphs, _ = graphs_for_records(captions, stats, embeddings, class_map)
    logits, descriptors = encode_graphs(graphs, model.params, model.state, model.config)
    if head is None:
        return logits
    missing = features.missing_ids([r.image_id for r in records])
    if missing:
        raise DataError(f"features missing for {missing[:10]}")
    lows = np.stack([features[r.image_id] for r in records]).astype(np.float64)
    return fusion_logits(fuse(descriptors, lows, model.config.descriptor_dim), head)


def evaluate_benchmark(
    benchmark: Manifest,
    model: TrainResult,
    baseline: ErrorTable,
    captions: CaptionSource,
    stats: CoOccurrenceStats,
    embeddings: EmbeddingTable,
    class_map: ClassMap,
    features: FeatureSource | None = None,
    provenance: dict | None = None,
    model_name: str = "model",
    jobs: int = 1,
) -> EvalReport:
    """Accuracy grid, CE/RCE/mCE/mRCE against the baseline, and clean-subset
    PR curves for either a high-level or a fusion checkpoint.

    Subsets are independent, so ``jobs`` workers may score them in parallel;
    the grid is assembled by key and the result never depends on scheduling.
    """
    is_fusion = model.metadata.get("kind") == "fusion"
    head = None
    encoder = model
    if is_fusion:
        if features is None:
            raise DataError("evaluating a fusion checkpoint requires --features-dir")
        encoder, head = split_fusion_result(model)

    def subset_eval(kind: str | None, level: int | None):
        name = subset_name(kind, level)
        records = benchmark.subset(kind, level)
        if not records:
            raise DataError(f"benchmark manifest has no records for subset {name!r}")
        caps = captions.for_subset(name, records)
        feats = features.for_subset(name) if head is not None else None
        logits = _subset_logits(
            records, caps, encoder, head, feats, stats, embeddings, class_map
        )
        labels = np.array([r.label_id for r in records])
        accs = {}
        for k in (1, 3, 5):
            ranked, _ = rank_topk(logits, min(k, logits.shape[1]))
            accs[f"top{k}"] = topk_accuracy(ranked, labels, k)
        return accs, logits, labels

    clean_accs, clean_logits, clean_labels = subset_eval(None, None)
    pairs = [(kind, level) for kind in CORRUPTION_KINDS for level in SEVERITY_LEVELS]
    if jobs <= 1:
        outcomes = {pair: subset_eval(*pair) for pair in pairs}
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(lambda pair: subset_eval(*pair), pairs)
            outcomes = dict(zip(pairs, results))

    grid: dict[str, dict[int, dict[str, float]]] = {}
    error_grid: dict[str, list[float]] = {}
    for kind in CORRUPTION_KINDS:
        grid[kind] = {}
        error_grid[kind] = []
        for level in SEVERITY_LEVELS:
            accs = outcomes[(kind, level)][0]
            grid[kind][level] = accs
            error_grid[kind].append(1.0 - accs["top1"])

    model_table = ErrorTable(
        model=model_name, clean_error=1.0 - clean_accs["top1"], grid=error_grid
    )
    ce = {kind: corruption_error(model_table, baseline, kind) for kind in CORRUPTION_KINDS}
    rce = {
        kind: relative_corruption_error(model_table, baseline, kind)
        for kind in CORRUPTION_KINDS
    }

    pr = pr_curve(_softmax(clean_logits), clean_labels)

    return EvalReport(
        provenance=dict(provenance or {}),
        clean=clean_accs,
        grid=grid,
        ce=ce,
        rce=rce,
        mce=mean_ce([ce[kind] for kind in CORRUPTION_KINDS]),
        mrce=mean_rce([rce[kind] for kind in CORRUPTION_KINDS]),
        macro_ap=pr.macro_ap,
        pr_curves=pr.curves,
        skipped_classes=pr.skipped_classes,
    )
