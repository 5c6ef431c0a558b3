"""50-d token embedding table with a seeded uniform fallback.

The text format is one line per token: ``token v1 v2 ... v50``.  Tokens
missing from the table get a deterministic draw from U[-0.01, 0.01], keyed
by the fallback seed and the token itself, so graph construction stays
bitwise reproducible.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError
from .seeds import stream_rng
from .validation import EMBEDDING_DIM

FALLBACK_SCALE = 0.01


class EmbeddingTable:
    def __init__(self, vectors: dict[str, np.ndarray], fallback_seed: int = 0) -> None:
        self.vectors: dict[str, np.ndarray] = {}
        for token, vec in vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (EMBEDDING_DIM,):
                raise DataError(
                    f"embedding for {token!r} has dimension {vec.shape}, expected {EMBEDDING_DIM}"
                )
            self.vectors[token] = vec
        self.fallback_seed = fallback_seed

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def lookup(self, token: str) -> np.ndarray:
        """Table hit, or a per-token seeded uniform draw in [-0.01, 0.01]."""
        vec = self.vectors.get(token)
        if vec is not None:
            return vec
        rng = stream_rng(self.fallback_seed, "embedding-fallback", token)
        return rng.uniform(-FALLBACK_SCALE, FALLBACK_SCALE, EMBEDDING_DIM)

    @classmethod
    def from_text(cls, path: str | Path, fallback_seed: int = 0) -> "EmbeddingTable":
        path = Path(path)
        vectors: dict[str, np.ndarray] = {}
        try:
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    parts = line.split()
                    if not parts:
                        continue
                    token = parts[0]
                    if len(parts) != EMBEDDING_DIM + 1:
                        raise DataError(
                            f"{path}:{lineno}: expected {EMBEDDING_DIM} values for "
                            f"{token!r}, got {len(parts) - 1}"
                        )
                    if token in vectors:
                        raise DataError(f"{path}:{lineno}: duplicate token {token!r}")
                    try:
                        vectors[token] = np.array([float(v) for v in parts[1:]])
                    except ValueError as exc:
                        raise DataError(f"{path}:{lineno}: bad float value") from exc
        except OSError as exc:
            raise DataError(f"cannot read embeddings {path}: {exc}") from exc
        return cls(vectors, fallback_seed=fallback_seed)

    def save_text(self, path: str | Path) -> None:
        with open(Path(path), "w", encoding="utf-8") as fh:
            for token in sorted(self.vectors):
                values = " ".join(repr(float(v)) for v in self.vectors[token])
                fh.write(f"{token} {values}\n")
