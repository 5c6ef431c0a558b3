"""Synthetic "mini-places" fixtures for CI and demos.

Eight of the 148 classes are rendered as procedurally drawn 64x64 scenes
with seeded jitter, paired with template captions and a deterministic
128-d feature function, so the full pipeline (mining, training, corruption,
evaluation) can run hermetically without real data or pretrained models.

Caption word pools overlap within class pairs on purpose: the caption
stream alone should be informative but imperfect, leaving headroom for the
feature stream, which is what the fusion model exercises.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .captions import CaptionRecord
from .corruption.engine import _resize_bilinear  # deterministic bilinear core
from .corruption.severity import CORRUPTION_KINDS
from .dataset import ClassMap, Manifest, ManifestRecord, shipped_class_map
from .embeddings import EmbeddingTable
from .errors import DataError
from .images import ImageBuffer, save_png
from .metrics import ErrorTable
from .seeds import stream_rng

MINI_CLASSES = (
    "bathroom",
    "bedroom",
    "kitchen",
    "bar",
    "bookstore",
    "supermarket",
    "movie_theater_indoor",
    "gymnasium_indoor",
)

# shared-within-pair pools plus one rarer distinctive word per class
_PAIR_POOLS = {
    ("bathroom", "bedroom"): ["door", "window", "lamp", "rug", "towel", "cabinet"],
    ("kitchen", "bar"): ["counter", "stool", "bottle", "light", "tray", "jar"],
    ("bookstore", "supermarket"): ["shelf", "aisle", "stack", "sign", "basket", "rack"],
    ("movie_theater_indoor", "gymnasium_indoor"): ["seat", "floor", "wall", "row", "banner", "railing"],
}
_DISTINCTIVE = {
    "bathroom": "sink",
    "bedroom": "bed",
    "kitchen": "stove",
    "bar": "keg",
    "bookstore": "book",
    "supermarket": "cart",
    "movie_theater_indoor": "screen",
    "gymnasium_indoor": "hoop",
}
_DISTINCTIVE_PROB = 0.35

_FEATURE_PROJECTION_SEED = 0x51CE  # fixed: features must be a pure image function

IMAGE_SIZE = 64
PER_CLASS = 40


def _pool_of(class_name: str) -> list[str]:
    for pair, pool in _PAIR_POOLS.items():
        if class_name in pair:
            return pool
    raise DataError(f"{class_name!r} is not a mini-places class")


# ---------------------------------------------------------------------------
# procedural scene drawing
# ---------------------------------------------------------------------------


def _stripes(canvas, axis, period, colors, phase):
    idx = (np.arange(canvas.shape[axis]) // period + phase) % len(colors)
    pattern = np.asarray(colors)[idx]
    canvas[:] = pattern[None, :, :] if axis == 1 else pattern[:, None, :]


def _checker(canvas, period, c1, c2, phase):
    yy, xx = np.meshgrid(np.arange(canvas.shape[0]), np.arange(canvas.shape[1]), indexing="ij")
    mask = ((yy // period + xx // period + phase) % 2).astype(bool)
    canvas[mask] = c1
    canvas[~mask] = c2


def _rect(canvas, y0, y1, x0, x1, color):
    canvas[int(y0) : int(y1), int(x0) : int(x1)] = color


def _draw_scene(class_name: str, rng: np.random.Generator, size: int) -> np.ndarray:
    canvas = np.zeros((size, size, 3))
    jitter = lambda lo, hi: float(rng.uniform(lo, hi))
    phase = int(rng.integers(0, 4))

    if class_name == "bathroom":
        _checker(canvas, 6, [0.75, 0.88, 0.95], [0.62, 0.78, 0.88], phase)
        _rect(canvas, size * 0.55, size * 0.85, size * jitter(0.1, 0.3), size * 0.55, [0.93, 0.95, 0.96])
    elif class_name == "bedroom":
        _stripes(canvas, 0, 8, [[0.82, 0.70, 0.55], [0.75, 0.60, 0.45]], phase)
        _rect(canvas, size * 0.5, size * 0.9, size * jitter(0.15, 0.4), size * 0.85, [0.55, 0.30, 0.30])
        _rect(canvas, size * 0.45, size * 0.55, size * 0.2, size * 0.5, [0.95, 0.92, 0.85])
    elif class_name == "kitchen":
        _stripes(canvas, 1, 5, [[0.80, 0.80, 0.78], [0.68, 0.68, 0.66]], phase)
        _rect(canvas, size * 0.6, size * 0.95, 0, size, [0.45, 0.45, 0.48])
        _rect(canvas, size * jitter(0.15, 0.3), size * 0.5, size * 0.6, size * 0.9, [0.30, 0.32, 0.35])
    elif class_name == "bar":
        canvas[:] = [0.18, 0.12, 0.10]
        for i in range(5):
            cx = size * (0.12 + 0.18 * i + jitter(-0.03, 0.03))
            _rect(canvas, size * 0.2, size * 0.45, cx, cx + size * 0.08, [0.85, 0.65, 0.25])
        _rect(canvas, size * 0.6, size * 0.75, 0, size, [0.45, 0.28, 0.15])
    elif class_name == "bookstore":
        _stripes(canvas, 1, 3, [[0.70, 0.25, 0.20], [0.22, 0.40, 0.62], [0.85, 0.72, 0.35], [0.30, 0.55, 0.35]], phase)
        for frac in (0.25, 0.55, 0.85):
            _rect(canvas, size * frac, size * frac + 2, 0, size, [0.35, 0.25, 0.18])
    elif class_name == "supermarket":
        canvas[:] = [0.88, 0.88, 0.86]
        for row in range(3):
            y0 = size * (0.15 + 0.28 * row)
            for col in range(6):
                x0 = size * (0.05 + 0.155 * col + jitter(-0.01, 0.01))
                color = rng.uniform(0.25, 0.95, size=3)
                _rect(canvas, y0, y0 + size * 0.18, x0, x0 + size * 0.12, color)
    elif class_name == "movie_theater_indoor":
        canvas[:] = [0.08, 0.07, 0.10]
        _rect(canvas, size * 0.1, size * 0.42, size * jitter(0.18, 0.28), size * 0.78, [0.88, 0.88, 0.92])
        for row in range(4):
            y0 = size * (0.55 + 0.11 * row)
            _rect(canvas, y0, y0 + size * 0.06, size * 0.05, size * 0.95, [0.45, 0.12, 0.15])
    elif class_name == "gymnasium_indoor":
        canvas[:] = [0.80, 0.62, 0.38]
        plank = [0.72, 0.54, 0.32]
        for x in range(0, size, 7):
            canvas[:, x : x + 1] = plank
        _rect(canvas, size * 0.3, size * 0.32, 0, size, [0.95, 0.95, 0.95])
        cx, cy = size * jitter(0.4, 0.6), size * 0.62
        yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        ring = np.abs(np.hypot(yy - cy, xx - cx) - size * 0.18) < 1.5
        canvas[ring] = [0.95, 0.95, 0.95]
    else:
        raise DataError(f"{class_name!r} is not a mini-places class")

    canvas += rng.normal(0.0, 0.015, size=canvas.shape)  # mild texture
    return np.clip(np.rint(np.clip(canvas, 0, 1) * 255), 0, 255).astype(np.uint8)


def make_mini_places(
    root: str | Path,
    seed: int = 0,
    per_class: int = PER_CLASS,
    size: int = IMAGE_SIZE,
) -> ClassMap:
    """Write the 8-class image tree under ``root`` and return the class map."""
    root = Path(root)
    for class_name in MINI_CLASSES:
        class_dir = root / class_name
        class_dir.mkdir(parents=True, exist_ok=True)
        for idx in range(per_class):
            rng = stream_rng(seed, "mini-image", class_name, idx)
            pixels = _draw_scene(class_name, rng, size)
            save_png(
                ImageBuffer(f"{class_name}-{idx:03d}", pixels),
                class_dir / f"{idx:03d}.png",
            )
    return shipped_class_map()


# ---------------------------------------------------------------------------
# captions
# ---------------------------------------------------------------------------


def template_caption(class_name: str, rng: np.random.Generator) -> str:
    pool = _pool_of(class_name)
    n_words = int(rng.integers(3, 5))
    picks = list(rng.choice(pool, size=n_words, replace=False))
    if rng.random() < _DISTINCTIVE_PROB:
        picks.insert(int(rng.integers(0, len(picks) + 1)), _DISTINCTIVE[class_name])
    sentence = f"a room with a {picks[0]}"
    for word in picks[1:-1]:
        sentence += f" and a {word}"
    if len(picks) > 1:
        sentence += f" near the {picks[-1]}"
    return sentence + "."


def captions_for_manifest(manifest: Manifest, class_map: ClassMap, seed: int = 0) -> list[CaptionRecord]:
    """One template caption per manifest record, keyed by image id only, so
    every corrupted copy of an image shares its clean caption."""
    records = []
    for rec in manifest.records:
        rng = stream_rng(seed, "mini-caption", rec.image_id)
        records.append(
            CaptionRecord(
                image_id=rec.image_id,
                caption=template_caption(class_map.names[rec.label_id], rng),
                label_id=rec.label_id,
            )
        )
    return records


def fixture_vocabulary() -> list[str]:
    words = set(_DISTINCTIVE.values())
    for pool in _PAIR_POOLS.values():
        words.update(pool)
    return sorted(words)


def fixture_embeddings(seed: int = 0) -> EmbeddingTable:
    """Random but reproducible 50-d vectors covering the fixture vocabulary
    and the scene-name tokens of the shipped class map."""
    tokens = set(fixture_vocabulary())
    for name in shipped_class_map().names:
        tokens.update(name.split("_"))
    vectors = {
        tok: stream_rng(seed, "fixture-embedding", tok).normal(0.0, 0.3, 50)
        for tok in sorted(tokens)
    }
    return EmbeddingTable(vectors, fallback_seed=seed)


# ---------------------------------------------------------------------------
# deterministic stand-in for the low-level feature stream
# ---------------------------------------------------------------------------


_PROJECTION_CACHE: dict[int, np.ndarray] = {}


def _feature_projection(input_size: int) -> np.ndarray:
    if input_size not in _PROJECTION_CACHE:
        proj = stream_rng(_FEATURE_PROJECTION_SEED, "projection", input_size).normal(
            0.0, 1.0, size=(128, input_size)
        )
        _PROJECTION_CACHE[input_size] = proj / np.sqrt(input_size)
    return _PROJECTION_CACHE[input_size]


def fixture_features(pixels: np.ndarray) -> np.ndarray:
    """Pure 128-d function of the pixels standing in for a frozen backbone.

    A low-frequency thumbnail is concatenated with a local-gradient energy
    map before a fixed random projection and L2 normalization.  The gradient
    half makes the vector sensitive to noise and blur, so corruption
    severity degrades these features the way it would degrade CNN features.
    """
    x = pixels.astype(np.float64) / 255.0
    gray = x @ np.array([0.299, 0.587, 0.114])
    gy = np.abs(np.diff(gray, axis=0, prepend=gray[:1]))
    gx = np.abs(np.diff(gray, axis=1, prepend=gray[:, :1]))
    grad = _resize_bilinear(gy + gx, 12, 12).reshape(-1)
    thumb = _resize_bilinear(x, 12, 12).reshape(-1)
    raw = np.concatenate([thumb, 4.0 * grad])
    vec = _feature_projection(raw.size) @ raw
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec = vec / norm
    return vec.astype(np.float32)


def features_for_images(paths_by_id: dict[str, Path]) -> dict[str, np.ndarray]:
    from .images import load_image

    return {
        image_id: fixture_features(load_image(path, image_id=image_id).pixels)
        for image_id, path in sorted(paths_by_id.items())
    }


def features_for_manifest(manifest: Manifest, image_root: str | Path) -> dict[str, np.ndarray]:
    image_root = Path(image_root)
    return features_for_images(
        {rec.image_id: image_root / rec.relative_path for rec in manifest.records}
    )


# ---------------------------------------------------------------------------
# baseline error table
# ---------------------------------------------------------------------------


def assign_splits_per_class(manifest: Manifest, train: int, val: int, test: int) -> Manifest:
    """Exact per-class split counts (lexicographic order within each class),
    for fixtures where stable test-set sizes matter more than hashing."""
    from dataclasses import replace

    by_class: dict[int, list[ManifestRecord]] = {}
    for rec in sorted(manifest.records, key=lambda r: r.image_id):
        by_class.setdefault(rec.label_id, []).append(rec)
    out: list[ManifestRecord] = []
    for label in sorted(by_class):
        records = by_class[label]
        if len(records) < train + val + test:
            raise DataError(
                f"class {label} has {len(records)} images, need {train + val + test}"
            )
        for i, rec in enumerate(records):
            if i < train:
                split = "train"
            elif i < train + val:
                split = "val"
            elif i < train + val + test:
                split = "test"
            else:
                continue
            out.append(replace(rec, split=split))
    return Manifest(records=out, global_seed=manifest.global_seed, source=manifest.source)


def write_benchmark_features(benchmark: Manifest, bench_root: str | Path, out_dir: str | Path) -> None:
    """One P148FEAT file per benchmark subset, computed from the corrupted
    images on disk, mirroring what a frozen backbone would produce."""
    from collections import defaultdict

    from .dataset import subset_name
    from .fusion import write_features

    bench_root = Path(bench_root)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[str, list[ManifestRecord]] = defaultdict(list)
    for rec in benchmark.records:
        kind, level = rec.corruption if rec.corruption else (None, None)
        groups[subset_name(kind, level)].append(rec)
    for name, records in groups.items():
        vectors = features_for_images(
            {rec.image_id: bench_root / rec.relative_path for rec in records}
        )
        write_features(vectors, out_dir / f"{name}.p148feat")


def fixture_baseline_table(seed: int = 7) -> ErrorTable:
    """A plausible standardization baseline: errors grow with severity."""
    rng = stream_rng(seed, "baseline")
    grid = {}
    for kind in CORRUPTION_KINDS:
        start = float(rng.uniform(0.45, 0.62))
        gain = float(rng.uniform(0.05, 0.08))
        grid[kind] = [min(0.99, start + gain * lvl + float(rng.uniform(0, 0.01))) for lvl in range(5)]
    return ErrorTable(model="alexnet-fixture", clean_error=0.42, grid=grid)
