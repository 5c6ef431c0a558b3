"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints `ACCEPTANCE <criterion>: PASS|FAIL` (run with ``-s`` to see
the lines live).  Everything here runs from the committed fixture
generators; no real data, no pretrained models, no secondary component.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from gradcheck import generic_point_params, max_relative_error, random_small_config
from scene_robust.captions import CaptionRecord, write_caption_records
from scene_robust.cli import main as cli_main
from scene_robust.cooccurrence import count_tokens, edge_weights, mine_cooccurrence
from scene_robust.corruption.engine import apply_corruption, default_severity_table
from scene_robust.corruption.severity import SEVERITY_LEVELS
from scene_robust.dataset import Manifest, write_manifest
from scene_robust.fixtures import fixture_features
from scene_robust.fusion import FeatureSet, fuse, rank_topk
from scene_robust.images import load_image
from scene_robust.metrics import (
    ErrorTable,
    corruption_error,
    mean_ce,
    relative_corruption_error,
    topk_accuracy,
)
from scene_robust.nn.gin import GinConfig, encoder_forward, init_params
from scene_robust.seeds import derive_seed, stream_rng
from scene_robust.training import (
    TrainHyper,
    encode_graphs,
    fusion_logits,
    graphs_for_records,
    split_fusion_result,
    train_fusion,
    train_high_level,
)
from test_gin import random_knowledge_graph, word_permuted_graph
from test_cooccurrence import brute_force_counts

from scene_robust.corruption.severity import CORRUPTION_KINDS


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def tree_digest(root: Path) -> dict[str, str]:
    digest = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digest


def test_gradient_correctness():
    """>=100 random small models: analytic vs central finite differences,
    elementwise guarded relative error < 1e-4 at 64-bit, under 60 s."""
    with criterion("gradient-correctness"):
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(100):
            config, batch, labels, key = random_small_config(rng)
            params = generic_point_params(config, rng)
            _, state = init_params(config, seed=0)
            err = max_relative_error(batch, labels, params, state, config, dropout_key=key)
            worst = max(worst, err)
            assert err < 1e-4, err
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"gradient sweep took {elapsed:.1f}s"


def test_permutation_invariance():
    """Encoder outputs equal within 1e-6 under exhaustive word-node
    permutations (<=6 words) and 100 random permutations on a larger graph."""
    with criterion("permutation-invariance"):
        rng = np.random.default_rng(5)
        config = GinConfig()
        params, state = init_params(config, seed=1)

        graph = random_knowledge_graph(rng, 6, num_scenes=8)
        base = encoder_forward(graph, params, state, config, mode="eval")
        for perm in itertools.permutations(range(6)):
            result = encoder_forward(
                word_permuted_graph(graph, np.array(perm)), params, state, config, mode="eval"
            )
            np.testing.assert_allclose(result.logits, base.logits, atol=1e-6)
            np.testing.assert_allclose(result.descriptor, base.descriptor, atol=1e-6)

        large = random_knowledge_graph(rng, 30, num_scenes=12)
        base = encoder_forward(large, params, state, config, mode="eval")
        for _ in range(100):
            perm = rng.permutation(30)
            result = encoder_forward(
                word_permuted_graph(large, perm), params, state, config, mode="eval"
            )
            np.testing.assert_allclose(result.logits, base.logits, atol=1e-6)
            np.testing.assert_allclose(result.descriptor, base.descriptor, atol=1e-6)


def test_cooccurrence_oracle():
    """1000 random mini-corpora: the miner equals the quadratic brute-force
    counter exactly, and every positive row's edge weights sum to 1 +/- 1e-9."""
    with criterion("cooccurrence-oracle"):
        rng = np.random.default_rng(99)
        vocab_pool = [f"w{i}" for i in range(20)]
        for _ in range(1000):
            n_caps = int(rng.integers(0, 51))
            token_lists = [
                list(rng.choice(vocab_pool, size=rng.integers(0, 13)))
                for _ in range(n_caps)
            ]
            labels = rng.integers(0, 8, size=n_caps)
            window = int(rng.integers(2, 6))
            stats = count_tokens(token_lists, labels, window=window, num_scenes=8)
            vocab, scene, word = brute_force_counts(token_lists, labels, window, 8)
            assert stats.vocab == vocab
            assert np.array_equal(stats.scene_counts, scene)
            assert np.array_equal(stats.word_counts, word)
            for token in stats.vocab:
                weights = edge_weights(stats, token)
                assert abs(weights.sum() - 1.0) <= 1e-9


@pytest.fixture(scope="module")
def bench_manifest(mini_places, tmp_path_factory):
    ws = tmp_path_factory.mktemp("accept_bench")
    manifest_path = ws / "manifest.jsonl"
    test_records = [replace(r, split="test") for r in mini_places.manifest.split("test")]
    write_manifest(Manifest(records=test_records, global_seed=0, source="mini"), manifest_path)
    return ws, manifest_path


def test_corruption_determinism(mini_places, bench_manifest):
    """Two same-seed 76-subset generations are byte-identical, and worker
    count (--jobs 1 vs --jobs 8) does not change a single byte."""
    with criterion("corruption-determinism"):
        ws, manifest_path = bench_manifest
        digests = []
        for name, jobs in (("run_a", 1), ("run_b", 1), ("run_jobs8", 8)):
            out = ws / name
            code = cli_main(
                ["corrupt", "--manifest", str(manifest_path), "--images", str(mini_places.root),
                 "--out", str(out), "--seed", "0", "--jobs", str(jobs)]
            )
            assert code == 0
            digests.append(tree_digest(out))
        assert digests[0] == digests[1], "same-seed reruns differ"
        assert digests[0] == digests[2], "--jobs changed output bytes"
        assert len(digests[0]) == 40 * 76 + 2  # images + benchmark manifest + run.json


def test_corruption_statistics(mini_places):
    """Noise deviations match the severity config within 5%, and the mean
    absolute deviation grows with severity on 10 fixture images."""
    with criterion("corruption-statistics"):
        from test_corruption import MID_GRAY, _clipped_normal_std, _clipped_poisson_std

        table = default_severity_table()
        for level in SEVERITY_LEVELS:
            sigma = table.params("gaussian_noise", level)["sigma"]
            out = apply_corruption(MID_GRAY, "gaussian_noise", level, seed=41)
            sample = (out.pixels.astype(np.float64) / 255.0 - 128 / 255).std()
            assert abs(sample - _clipped_normal_std(sigma, 128 / 255)) / sigma < 0.05

            photons = table.params("shot_noise", level)["photons"]
            out = apply_corruption(MID_GRAY, "shot_noise", level, seed=42)
            sample = (out.pixels.astype(np.float64) / 255.0).std()
            expected = _clipped_poisson_std(photons, 128 / 255)
            assert abs(sample - expected) / expected < 0.05

            amount = table.params("impulse_noise", level)["amount"]
            out = apply_corruption(MID_GRAY, "impulse_noise", level, seed=43)
            sample = (out.pixels.astype(np.float64) / 255.0 - 128 / 255).std()
            expected = np.sqrt(amount) * (128 / 255)
            assert abs(sample - expected) / expected < 0.05

        records = mini_places.manifest.split("test")[:10]
        assert len(records) == 10
        for kind in ("gaussian_noise", "shot_noise", "impulse_noise"):
            for rec in records:
                image = load_image(mini_places.root / rec.relative_path, rec.image_id)
                mads = []
                for level in SEVERITY_LEVELS:
                    out = apply_corruption(
                        image, kind, level, derive_seed(0, rec.image_id, kind, level)
                    )
                    mads.append(np.abs(out.pixels.astype(float) - image.pixels.astype(float)).mean())
                assert all(b >= a * 0.999 for a, b in zip(mads, mads[1:])), (kind, mads)


def test_metric_exactness():
    """Hand-computed CE/RCE fixtures reproduce to 64-bit rounding, and the
    baseline self-normalizes to exactly 100."""
    with criterion("metric-exactness"):
        def table(clean, errors, model="m"):
            return ErrorTable(model=model, clean_error=clean,
                              grid={k: list(errors) for k in CORRUPTION_KINDS})

        model = table(0.05, [0.10, 0.20, 0.30, 0.40, 0.50])
        base = table(0.10, [0.20, 0.40, 0.60, 0.80, 1.00])
        ce = corruption_error(model, base, "fog")
        assert ce == 100.0 * np.sum(model.grid["fog"]) / np.sum(base.grid["fog"])
        assert abs(ce - 50.0) < 1e-12

        rce = relative_corruption_error(model, base, "snow")
        expected = 100.0 * (np.sum(np.asarray(model.grid["snow"]) - 0.05)
                            / np.sum(np.asarray(base.grid["snow"]) - 0.10))
        assert rce == expected
        assert abs(rce - 50.0) < 1e-12

        assert mean_ce([50.0] * 14 + [200.0]) == 60.0
        assert mean_ce([100.0] * 15) == 100.0

        for kind in CORRUPTION_KINDS:
            assert corruption_error(base, base, kind) == 100.0
            assert relative_corruption_error(base, base, kind) == 100.0

        double = table(0.05, [0.20, 0.40, 0.60, 0.80, 1.00])
        assert corruption_error(double, base, "fog") == pytest.approx(2.0 * ce, rel=1e-15)


XOR_WORDS = (
    ("sink", "mirror", "towel", "bathtub"),
    ("piano", "guitar", "drum", "violin"),
)


def _xor_dataset(rng, n, tag, protos):
    """h can only see bit a (caption words), l only bit b (feature proto);
    the prototypes play the role of a fixed backbone shared by every split."""
    records, features = [], {}
    for i in range(n):
        a, b = (i >> 1) & 1, i & 1
        words = rng.choice(XOR_WORDS[a], size=3, replace=False)
        image_id = f"{tag}{i}"
        records.append(
            CaptionRecord(image_id, f"a scene with a {words[0]} and a {words[1]} near a {words[2]}", 2 * a + b)
        )
        features[image_id] = (protos[b] + rng.normal(0, 0.15, 128)).astype(np.float32)
    return records, features


def test_fusion_separability(mini_places):
    """XOR construction: either stream alone stays <= 65% top-1 while the
    fused model reaches >= 95%, all in under two minutes."""
    with criterion("fusion-separability"):
        start = time.perf_counter()
        rng = np.random.default_rng(11)
        protos = rng.normal(0.0, 1.0, size=(2, 128))
        train_records, train_feats = _xor_dataset(rng, 256, "tr", protos)
        eval_records, eval_feats = _xor_dataset(rng, 128, "ev", protos)
        class_map = mini_places.class_map
        embeddings = mini_places.embeddings
        stats = mine_cooccurrence(train_records, window=3, num_scenes=len(class_map))

        config = GinConfig(hidden_dim=32, descriptor_dim=128)
        hyper = TrainHyper(lr=3e-3, weight_decay=6e-4, epochs=8, batch_size=16, seed=0)
        high = train_high_level(train_records, [], stats, embeddings, class_map, config, hyper)

        eval_graphs, eval_labels = graphs_for_records(eval_records, stats, embeddings, class_map)
        high_logits, eval_desc = encode_graphs(eval_graphs, high.params, high.state, config)
        ranked, _ = rank_topk(high_logits, 1)
        high_only = topk_accuracy(ranked, eval_labels, 1)

        features = FeatureSet({**train_feats, **eval_feats}, source="xor")
        fusion = train_fusion(
            train_records, [], features, high, stats, embeddings, class_map,
            TrainHyper(lr=3e-3, weight_decay=6e-4, epochs=15, batch_size=16, seed=0),
        )
        _, head = split_fusion_result(fusion)
        eval_lows = np.stack([eval_feats[r.image_id] for r in eval_records]).astype(np.float64)
        z_eval = fuse(eval_desc, eval_lows, config.descriptor_dim)
        ranked, _ = rank_topk(fusion_logits(z_eval, head), 1)
        fused = topk_accuracy(ranked, eval_labels, 1)

        # low-level-only stream: identical head trainer with h zeroed out
        zero_records = train_records
        zero_desc = np.zeros((len(zero_records), config.descriptor_dim))
        from scene_robust.nn.gin import cross_entropy
        from scene_robust.nn.optim import AdamW
        from scene_robust.training import _init_head

        z0 = fuse(zero_desc, np.stack([train_feats[r.image_id] for r in zero_records]).astype(np.float64), 128)
        labels0 = np.array([r.label_id for r in zero_records])
        head0 = _init_head(z0.shape[1], config.readout_dim, 0)
        optimizer = AdamW(lr=3e-3, weight_decay=6e-4)
        for epoch in range(15):
            order = stream_rng(0, "shuffle", epoch).permutation(len(zero_records))
            for begin in range(0, len(order), 16):
                idx = order[begin : begin + 16]
                _, dlogits = cross_entropy(fusion_logits(z0[idx], head0), labels0[idx])
                optimizer.step(
                    head0,
                    {"head.w": z0[idx].T @ dlogits, "head.b": dlogits.sum(axis=0)},
                    {"head.w", "head.b"},
                )
        z0_eval = fuse(np.zeros_like(eval_desc), eval_lows, 128)
        ranked, _ = rank_topk(fusion_logits(z0_eval, head0), 1)
        low_only = topk_accuracy(ranked, eval_labels, 1)

        elapsed = time.perf_counter() - start
        assert high_only <= 0.65, f"caption stream too strong: {high_only}"
        assert low_only <= 0.65, f"feature stream too strong: {low_only}"
        assert fused >= 0.95, f"fusion below bar: {fused}"
        assert fused > high_only and fused > low_only
        assert elapsed < 120.0, f"separability check took {elapsed:.1f}s"


def test_degradation_trend(mini_places):
    """Fusion top-1 on gaussian noise at severity 5 is strictly below
    severity 1 (direction only; no absolute tolerance claimed)."""
    with criterion("degradation-trend"):
        mp = mini_places
        train_caps = mp.caption_list("train")
        val_caps = mp.caption_list("val")
        test_records = mp.manifest.split("test")
        test_caps = mp.caption_list("test")

        config = GinConfig(hidden_dim=48, descriptor_dim=128)
        high = train_high_level(
            train_caps, val_caps, mp.stats, mp.embeddings, mp.class_map, config,
            TrainHyper(lr=3e-3, weight_decay=6e-4, epochs=8, batch_size=16, seed=0),
        )
        fusion = train_fusion(
            train_caps, val_caps, mp.features, high, mp.stats, mp.embeddings, mp.class_map,
            TrainHyper(lr=3e-3, weight_decay=6e-4, epochs=15, batch_size=16, seed=0),
        )
        _, head = split_fusion_result(fusion)

        graphs, _ = graphs_for_records(test_caps, mp.stats, mp.embeddings, mp.class_map)
        _, descriptors = encode_graphs(graphs, high.params, high.state, config)
        labels = np.array([r.label_id for r in test_records])

        accuracy = {}
        for level in (1, 5):
            lows = []
            for rec in test_records:
                image = load_image(mp.root / rec.relative_path, rec.image_id)
                corrupted = apply_corruption(
                    image, "gaussian_noise", level,
                    derive_seed(0, rec.image_id, "gaussian_noise", level),
                )
                lows.append(fixture_features(corrupted.pixels))
            z = fuse(descriptors, np.stack(lows).astype(np.float64), config.descriptor_dim)
            ranked, _ = rank_topk(fusion_logits(z, head), 1)
            accuracy[level] = topk_accuracy(ranked, labels, 1)

        assert accuracy[5] < accuracy[1], accuracy


def test_end_to_end_reproducibility(mini_places, tmp_path):
    """train-high and train-fusion through the CLI with a fixed seed produce
    bitwise-identical checkpoints across two runs."""
    with criterion("end-to-end-reproducibility"):
        mp = mini_places
        ws = tmp_path
        write_caption_records(mp.caption_list("train"), ws / "train.jsonl")
        mp.embeddings.save_text(ws / "emb.txt")
        from scene_robust.cooccurrence import save_stats
        from scene_robust.fusion import write_features

        save_stats(mp.stats, ws / "stats.bin")
        write_features(
            {r.image_id: mp.features[r.image_id] for r in mp.manifest.split("train")},
            ws / "feats.p148feat",
        )

        blobs = {"high": [], "fusion": []}
        for run in range(2):
            high_path = ws / f"high{run}.ckpt"
            code = cli_main(
                ["train-high", "--captions", str(ws / "train.jsonl"), "--stats", str(ws / "stats.bin"),
                 "--embeddings", str(ws / "emb.txt"), "--out", str(high_path),
                 "--epochs", "2", "--lr", "3e-3", "--batch-size", "16",
                 "--hidden-dim", "16", "--seed", "7"]
            )
            assert code == 0
            fusion_path = ws / f"fusion{run}.ckpt"
            code = cli_main(
                ["train-fusion", "--captions", str(ws / "train.jsonl"), "--stats", str(ws / "stats.bin"),
                 "--embeddings", str(ws / "emb.txt"), "--high-ckpt", str(high_path),
                 "--features", str(ws / "feats.p148feat"), "--out", str(fusion_path),
                 "--epochs", "2", "--lr", "3e-3", "--batch-size", "16", "--seed", "7"]
            )
            assert code == 0
            blobs["high"].append(high_path.read_bytes())
            blobs["fusion"].append(fusion_path.read_bytes())

        assert blobs["high"][0] == blobs["high"][1]
        assert blobs["fusion"][0] == blobs["fusion"][1]
