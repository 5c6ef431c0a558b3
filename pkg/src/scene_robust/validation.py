"""Input validation helpers used by the estimators and the functional core."""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DataError

MIN_IMAGE_SIDE = 32
FEATURE_DIM = 128
EMBEDDING_DIM = 50
NUM_CORRUPTIONS = 15
NUM_SEVERITIES = 5


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")
    return arr


def check_vector(arr, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise ContractError(f"{name} must be a vector of length {dim}, got shape {arr.shape}")
    return check_finite(arr, name)


def check_labels(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ContractError(f"labels must be 1-d, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(f"labels must lie in [0, {num_classes - 1}]")
    return labels.astype(np.int64)


def check_token_lists(X) -> list[list[str]]:
    """Validate a list of valid-word lists (the unit the miner/builder consume)."""
    if isinstance(X, str):
        raise ContractError("expected a sequence of token lists, got a single string")
    out = []
    for i, tokens in enumerate(X):
        if isinstance(tokens, str):
            raise ContractError(f"element {i} is a raw string; preprocess captions first")
        out.append([str(t) for t in tokens])
    return out
