"""Class maps, dataset manifests, and corrupted-benchmark generation.

The benchmark is 15 corruptions x 5 severities plus one clean copy: 76
subsets of the test split.  Generation is a parallel map over (image, kind,
level) with all randomness routed through per-task derived seeds, so worker
count never changes the output bytes, and interrupted runs can resume by
skipping files that already exist.
"""

from __future__ import annotations

import csv
import gzip
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corruption.engine import apply_corruption
from .corruption.severity import CORRUPTION_KINDS, SEVERITY_LEVELS, SeverityTable
from .errors import DataError
from .images import clean_filename, corrupted_filename, load_image, save_jpeg, save_png
from .seeds import derive_seed, stable_hash64

NUM_CLASSES = 148
CLEAN_SUBSET = "clean"

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


# ---------------------------------------------------------------------------
# class map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassMap:
    names: tuple[str, ...]  # index = label_id

    def __post_init__(self) -> None:
        if len(self.names) != NUM_CLASSES:
            raise DataError(f"class map must have exactly {NUM_CLASSES} entries, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise DataError("class names must be unique")

    def label_of(self, name: str) -> int | None:
        try:
            return self.names.index(name)
        except ValueError:
            return None

    def __len__(self) -> int:
        return len(self.names)


def load_class_map(path: str | Path) -> ClassMap:
    """CSV with a required ``label_id,class_name`` header; ids 0..147 contiguous."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["label_id", "class_name"]:
                raise DataError(f"{path}: expected header 'label_id,class_name', got {header}")
            rows = [(int(r[0]), r[1]) for r in reader if r]
    except OSError as exc:
        raise DataError(f"cannot read class map {path}: {exc}") from exc
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed class map row") from exc
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise DataError(f"{path}: label ids must be contiguous from 0")
    return ClassMap(tuple(name for _, name in rows))


def shipped_class_map() -> ClassMap:
    with resources.as_file(
        resources.files("scene_robust").joinpath("data/places148_classes.csv")
    ) as path:
        return load_class_map(path)


def save_class_map(class_map: ClassMap, path: str | Path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label_id", "class_name"])
        for label, name in enumerate(class_map.names):
            writer.writerow([label, name])


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    relative_path: str
    label_id: int
    split: str
    corruption: tuple[str, int] | None = None  # (kind, level)

    def to_json_obj(self) -> dict:
        obj = {
            "image_id": self.image_id,
            "relative_path": self.relative_path,
            "label_id": self.label_id,
            "split": self.split,
        }
        if self.corruption is not None:
            obj["corruption"] = {"kind": self.corruption[0], "level": self.corruption[1]}
        return obj


@dataclass
class Manifest:
    records: list[ManifestRecord]
    global_seed: int = 0
    source: str = ""
    unknown_dirs: list[str] = field(default_factory=list)

    def split(self, name: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == name]

    def subset(self, kind: str | None, level: int | None) -> list[ManifestRecord]:
        if kind is None:
            return [r for r in self.records if r.corruption is None]
        return [r for r in self.records if r.corruption == (kind, level)]


def _open_manifest(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    with _open_manifest(path, "w") as fh:
        meta = {
            "schema": "scene-robust/manifest/v1",
            "global_seed": manifest.global_seed,
            "source": manifest.source,
        }
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for rec in manifest.records:
            fh.write(json.dumps(rec.to_json_obj(), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    records: list[ManifestRecord] = []
    global_seed = 0
    source = ""
    try:
        with _open_manifest(path, "r") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                if "image_id" not in obj:
                    if obj.get("schema") == "scene-robust/manifest/v1":
                        global_seed = obj.get("global_seed", 0)
                        source = obj.get("source", "")
                        continue
                    raise DataError(f"{path}:{lineno}: record missing image_id")
                corruption = None
                if "corruption" in obj and obj["corruption"] is not None:
                    corruption = (obj["corruption"]["kind"], int(obj["corruption"]["level"]))
                if obj["split"] not in SPLITS:
                    raise DataError(f"{path}:{lineno}: unknown split {obj['split']!r}")
                records.append(
                    ManifestRecord(
                        image_id=str(obj["image_id"]),
                        relative_path=str(obj["relative_path"]),
                        label_id=int(obj["label_id"]),
                        split=obj["split"],
                        corruption=corruption,
                    )
                )
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    _check_unique_per_subset(records, str(path))
    return Manifest(records=records, global_seed=global_seed, source=source)


def _check_unique_per_subset(records: Sequence[ManifestRecord], source: str) -> None:
    seen: set[tuple] = set()
    for rec in records:
        key = (rec.image_id, rec.corruption)
        if key in seen:
            raise DataError(f"{source}: duplicate image_id {rec.image_id!r} in subset {rec.corruption}")
        seen.add(key)


# ---------------------------------------------------------------------------
# manifest construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitRules:
    """Hash-based split assignment: stable per image id, independent of scan order."""

    train: float = 0.75
    val: float = 0.125
    test: float = 0.125
    seed: int = 0

    def __post_init__(self) -> None:
        total = self.train + self.val + self.test
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {total}")

    def assign(self, image_id: str) -> str:
        u = stable_hash64(self.seed, "split", image_id) / 2.0**64
        if u < self.train:
            return "train"
        if u < self.train + self.val:
            return "val"
        return "test"


def build_manifest(
    image_root: str | Path,
    class_map: ClassMap,
    split_rules: SplitRules | None = None,
    strict: bool = True,
    source: str = "",
    global_seed: int = 0,
) -> Manifest:
    """Scan ``<class_name>/<file>`` directories into a manifest.

    Ordering is lexicographic by path, so the same tree always produces the
    same manifest.  Directories that are not class names are an error in
    strict mode and are reported (not silently skipped) otherwise.
    """
    image_root = Path(image_root)
    if not image_root.is_dir():
        raise DataError(f"image root {image_root} is not a directory")
    split_rules = split_rules or SplitRules()

    records: list[ManifestRecord] = []
    unknown_dirs: list[str] = []
    for class_dir in sorted(p for p in image_root.iterdir() if p.is_dir()):
        label = class_map.label_of(class_dir.name)
        if label is None:
            if strict:
                raise DataError(f"directory {class_dir.name!r} is not a known class")
            unknown_dirs.append(class_dir.name)
            continue
        for file in sorted(class_dir.iterdir()):
            if file.suffix.lower() not in _IMAGE_SUFFIXES:
                continue
            image_id = f"{class_dir.name}-{file.stem}"
            records.append(
                ManifestRecord(
                    image_id=image_id,
                    relative_path=f"{class_dir.name}/{file.name}",
                    label_id=label,
                    split=split_rules.assign(image_id),
                )
            )
    if not records:
        raise DataError(f"no images found under {image_root}")
    return Manifest(
        records=records,
        global_seed=global_seed,
        source=source or image_root.name,
        unknown_dirs=unknown_dirs,  # reported to callers, never silently dropped
    )


# ---------------------------------------------------------------------------
# benchmark generation
# ---------------------------------------------------------------------------


def subset_name(kind: str | None, level: int | None) -> str:
    return CLEAN_SUBSET if kind is None else f"{kind}_s{level}"


def _class_dir_of(record: ManifestRecord) -> str:
    return record.relative_path.split("/", 1)[0]


def _generate_one(
    record: ManifestRecord,
    kind: str | None,
    level: int | None,
    image_root: Path,
    out_root: Path,
    global_seed: int,
    table: SeverityTable,
) -> ManifestRecord:
    class_dir = _class_dir_of(record)
    if kind is None:
        rel = f"{CLEAN_SUBSET}/{class_dir}/{clean_filename(record.image_id)}"
    else:
        rel = (
            f"{kind}/s{level}/{class_dir}/"
            f"{corrupted_filename(record.image_id, kind, level)}"
        )
    out_path = out_root / rel
    out_record = replace(
        record,
        relative_path=rel,
        corruption=None if kind is None else (kind, level),
    )
    if out_path.exists():  # resume: outputs are pure functions of their inputs
        return out_record

    image = load_image(image_root / record.relative_path, image_id=record.image_id)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = out_path.with_name(out_path.name + ".tmp")
    if kind == "jpeg":
        # encoding the source at the severity quality IS the corruption: the
        # emitted .jpg decodes to exactly apply_corruption's pixels
        quality = int(table.params("jpeg", level)["quality"])
        save_jpeg(image, tmp_path, quality=quality)
    else:
        if kind is not None:
            seed = derive_seed(global_seed, record.image_id, kind, level)
            image = apply_corruption(image, kind, level, seed, table)
        save_png(image, tmp_path)
    tmp_path.replace(out_path)
    return out_record


def generate_corrupted_benchmark(
    manifest: Manifest,
    image_root: str | Path,
    out_root: str | Path,
    global_seed: int,
    table: SeverityTable,
    jobs: int = 1,
    kinds: Iterable[str] = CORRUPTION_KINDS,
) -> Manifest:
    """Emit the 75 corrupted subsets plus the clean copy for the test split.

    Rerunning with the same inputs and seed reproduces the tree byte for
    byte; already-present files are skipped, which makes interrupted runs
    resumable.
    """
    image_root = Path(image_root)
    out_root = Path(out_root)
    test_records = manifest.split("test")
    if not test_records:
        raise DataError("manifest has no test-split records")
    try:
        out_root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output root {out_root}: {exc}") from exc

    tasks: list[tuple[ManifestRecord, str | None, int | None]] = []
    for record in test_records:
        tasks.append((record, None, None))
        for kind in kinds:
            for level in SEVERITY_LEVELS:
                tasks.append((record, kind, level))

    def run(task: tuple[ManifestRecord, str | None, int | None]) -> ManifestRecord:
        record, kind, level = task
        return _generate_one(record, kind, level, image_root, out_root, global_seed, table)

    if jobs <= 1:
        out_records = [run(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            out_records = list(pool.map(run, tasks))

    # deterministic manifest order regardless of worker scheduling
    out_records.sort(key=lambda r: (r.corruption is not None, r.corruption or ("", 0), r.image_id))
    return Manifest(records=out_records, global_seed=global_seed, source=manifest.source)
