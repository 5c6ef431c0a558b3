"""Session-scoped mini-places fixtures shared across the suite.

Everything is generated deterministically from committed code, so the full
suite runs hermetically: no network, no real datasets, no pretrained models.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from scene_robust.captions import CaptionRecord
from scene_robust.cooccurrence import CoOccurrenceStats, mine_cooccurrence
from scene_robust.dataset import ClassMap, Manifest, build_manifest, shipped_class_map
from scene_robust.embeddings import EmbeddingTable
from scene_robust.fixtures import (
    assign_splits_per_class,
    captions_for_manifest,
    fixture_embeddings,
    fixture_features,
    make_mini_places,
)
from scene_robust.fusion import FeatureSet
from scene_robust.images import load_image

MINI_SEED = 0


@dataclass
class MiniPlaces:
    root: Path
    class_map: ClassMap
    manifest: Manifest
    captions: dict[str, CaptionRecord]
    stats: CoOccurrenceStats
    embeddings: EmbeddingTable
    features: FeatureSet

    def caption_list(self, split: str) -> list[CaptionRecord]:
        return [self.captions[rec.image_id] for rec in self.manifest.split(split)]


@pytest.fixture(scope="session")
def mini_places(tmp_path_factory) -> MiniPlaces:
    root = tmp_path_factory.mktemp("mini_places")
    class_map = make_mini_places(root, seed=MINI_SEED)
    manifest = assign_splits_per_class(
        build_manifest(root, class_map, global_seed=MINI_SEED), train=30, val=5, test=5
    )
    caption_records = captions_for_manifest(manifest, class_map, seed=MINI_SEED)
    captions = {rec.image_id: rec for rec in caption_records}
    train_caps = [captions[rec.image_id] for rec in manifest.split("train")]
    stats = mine_cooccurrence(train_caps, window=3, num_scenes=len(class_map))
    embeddings = fixture_embeddings(seed=MINI_SEED)
    vectors = {
        rec.image_id: fixture_features(load_image(root / rec.relative_path).pixels)
        for rec in manifest.records
    }
    features = FeatureSet(vectors, source="fixture-backbone")
    return MiniPlaces(
        root=root,
        class_map=class_map,
        manifest=manifest,
        captions=captions,
        stats=stats,
        embeddings=embeddings,
        features=features,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(42)
