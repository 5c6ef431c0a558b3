"""Late fusion over externally computed low-level features.

The toolkit never runs a CNN: 128-d feature vectors arrive in "P148FEAT"
files (magic, u32 version, u32 dim, u64 count, then per record a u16 id
length, the UTF-8 id, and dim little-endian float32 values).  Fusion is pure
concatenation of the caption-graph descriptor with the feature vector.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError
from .validation import FEATURE_DIM, check_finite

MAGIC = b"P148FEAT"
VERSION = 1


@dataclass
class FeatureSet:
    """image_id -> 128-d float32 vector, with a backbone source tag."""

    vectors: dict[str, np.ndarray]
    source: str = ""
    dim: int = FEATURE_DIM

    def __post_init__(self) -> None:
        for image_id, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise FormatError(
                    f"feature for {image_id!r} has shape {vec.shape}, expected ({self.dim},)"
                )

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, image_id: str) -> np.ndarray:
        return self.vectors[image_id]

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.vectors

    def missing_ids(self, image_ids) -> list[str]:
        return sorted(i for i in image_ids if i not in self.vectors)


def write_features(vectors: dict[str, np.ndarray], path: str | Path) -> None:
    """Write a P148FEAT file; records are stored in sorted-id order so the
    same map always produces the same bytes."""
    chunks: list[bytes] = [MAGIC, struct.pack("<IIQ", VERSION, FEATURE_DIM, len(vectors))]
    for image_id in sorted(vectors):
        vec = np.ascontiguousarray(vectors[image_id], dtype="<f4")
        if vec.shape != (FEATURE_DIM,):
            raise FormatError(
                f"feature for {image_id!r} has shape {vec.shape}, expected ({FEATURE_DIM},)"
            )
        encoded = image_id.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(vec.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def ingest_features(path: str | Path) -> FeatureSet:
    """Load and dimension-check a P148FEAT file; duplicate ids are rejected."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read feature file {path}: {exc}") from exc
    if len(blob) < len(MAGIC) + 16 or blob[:8] != MAGIC:
        raise FormatError(f"{path}: not a {MAGIC.decode()} file")
    version, dim, count = struct.unpack_from("<IIQ", blob, 8)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim != FEATURE_DIM:
        raise FormatError(f"{path}: feature dimension is {dim}, expected {FEATURE_DIM}")
    offset = 24
    view = memoryview(blob)
    vectors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (id_len,) = struct.unpack_from("<H", view, offset)
            offset += 2
            image_id = bytes(view[offset : offset + id_len]).decode("utf-8")
            offset += id_len
            data = np.frombuffer(view[offset : offset + 4 * dim], dtype="<f4")
            if data.size != dim:
                raise FormatError(f"{path}: truncated record for {image_id!r}")
            offset += 4 * dim
            if image_id in vectors:
                raise FormatError(f"{path}: duplicate image_id {image_id!r}")
            vectors[image_id] = data.copy()
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"{path}: truncated feature file") from exc
    if offset != len(blob):
        raise FormatError(f"{path}: trailing bytes after {count} records")
    return FeatureSet(vectors, source=path.stem)


def fuse(h: np.ndarray, l: np.ndarray, descriptor_dim: int | None = None) -> np.ndarray:
    """z = h || l: plain concatenation, no scaling or normalization."""
    h = check_finite(np.asarray(h, dtype=np.float64), "high-level descriptor")
    l = check_finite(np.asarray(l, dtype=np.float64), "low-level features")
    if l.shape[-1] != FEATURE_DIM:
        raise ContractError(f"low-level features must have dim {FEATURE_DIM}, got {l.shape[-1]}")
    if descriptor_dim is not None and h.shape[-1] != descriptor_dim:
        raise ContractError(
            f"high-level descriptor has dim {h.shape[-1]}, config expects {descriptor_dim}"
        )
    return np.concatenate([h, l], axis=-1)


def rank_topk(logits: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k class ids and scores per row, ties broken by ascending class id."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    num_classes = logits.shape[1]
    if not 1 <= k <= num_classes:
        raise ContractError(f"k must lie in [1, {num_classes}], got {k}")
    order = np.argsort(-logits, axis=1, kind="stable")  # stable: equal logits keep id order
    topk = order[:, :k]
    scores = np.take_along_axis(logits, topk, axis=1)
    return topk, scores
