"""Binary model checkpoints.

Layout: magic "P148CKPT", u32 format version, a JSON metadata blob, a tensor
directory (u16 name length + UTF-8 name, u32 rank, u64 extents, then
little-endian float32 data), and a trailing CRC-32 over everything before it.
Tensors round-trip losslessly at 32-bit precision; loading rejects unknown
tensor names when the caller supplies the expected set.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"P148CKPT"
VERSION = 1


def save_checkpoint(
    path: str | Path,
    tensors: dict[str, np.ndarray],
    metadata: dict,
) -> None:
    chunks: list[bytes] = [MAGIC, struct.pack("<I", VERSION)]
    meta_blob = json.dumps(metadata, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(meta_blob)))
    chunks.append(meta_blob)
    chunks.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        data = np.ascontiguousarray(tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        chunks.append(data.tobytes())
    payload = b"".join(chunks)
    payload += struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    Path(path).write_bytes(payload)


def load_checkpoint(
    path: str | Path,
    expected_names: set[str] | None = None,
) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < len(MAGIC) + 12 or blob[:8] != MAGIC:
        raise FormatError(f"{path}: not a {MAGIC.decode()} checkpoint")
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise FormatError(f"{path}: CRC mismatch; file is corrupt")

    view = memoryview(blob)[:-4]
    offset = 8
    (version,) = struct.unpack_from("<I", view, offset)
    offset += 4
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<I", view, offset)
    offset += 4
    try:
        metadata = json.loads(bytes(view[offset : offset + meta_len]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad metadata blob") from exc
    offset += meta_len
    (count,) = struct.unpack_from("<I", view, offset)
    offset += 4

    tensors: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", view, offset)
            offset += 2
            name = bytes(view[offset : offset + name_len]).decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", view, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}Q", view, offset)
            offset += 8 * rank
            size = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(view[offset : offset + 4 * size], dtype="<f4")
            if data.size != size:
                raise FormatError(f"{path}: truncated tensor {name!r}")
            offset += 4 * size
            tensors[name] = data.reshape(shape).copy()
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    if offset != len(view):
        raise FormatError(f"{path}: trailing bytes in checkpoint")

    if expected_names is not None:
        unknown = set(tensors) - expected_names
        if unknown:
            raise FormatError(f"{path}: unknown tensor names {sorted(unknown)}")
        missing = expected_names - set(tensors)
        if missing:
            raise FormatError(f"{path}: missing tensor names {sorted(missing)}")
    return tensors, metadata
