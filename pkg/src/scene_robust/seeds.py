"""Deterministic seed derivation and RNG construction.

All randomness in the toolkit flows from 64-bit seeds derived by hashing a
global seed together with a purpose tag and stream identifiers.  Streams are
backed by the counter-based Philox generator, so draws are independent per
stream and never depend on execution order across workers.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEP = b"\x1f"  # unit separator; cannot appear in the utf-8 text of our ids


def stable_hash64(*parts: object) -> int:
    """Hash a tuple of ints/strings to a stable uint64, identical across runs
    and platforms (unlike Python's builtin ``hash``)."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bool):  # bool is an int subclass; disambiguate
            token = b"b" + (b"1" if part else b"0")
        elif isinstance(part, int):
            token = b"i" + str(part).encode("ascii")
        elif isinstance(part, str):
            token = b"s" + part.encode("utf-8")
        else:
            raise TypeError(f"unhashable seed part of type {type(part).__name__}")
        h.update(token)
        h.update(_SEP)
    return int.from_bytes(h.digest()[:8], "little")


def derive_seed(global_seed: int, image_id: str, kind: str, level: int) -> int:
    """Per-(image, corruption, severity) seed for benchmark generation.

    Pure function of its four inputs; distinct inputs give distinct outputs
    up to the collision rate of a 64-bit hash.
    """
    return stable_hash64(global_seed, image_id, kind, level)


def rng_from(seed: int) -> np.random.Generator:
    """Philox generator keyed on a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=seed & (2**64 - 1)))


def stream_rng(global_seed: int, *stream: object) -> np.random.Generator:
    """Named substream (e.g. ``stream_rng(seed, "dropout", epoch, batch)``)."""
    return rng_from(stable_hash64(global_seed, *stream))
