"""Small shared helpers."""

from __future__ import annotations

import numpy as np


def derive_seed(*parts: int) -> int:
    """Deterministically mix integers into a child seed.

    All randomness in the package flows from one master seed; sub-tasks
    (learner index, fold index, pipeline stage, ...) get independent streams
    through this mixer so results do not depend on execution order.
    """
    if any(p < 0 for p in parts):
        raise ValueError(f"seed parts must be non-negative, got {parts}")
    return int(np.random.SeedSequence(list(parts)).generate_state(2, np.uint32)[0])


def as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr
