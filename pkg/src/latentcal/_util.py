"""Small shared helpers: RNG coercion and shape normalization."""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Coerce an int seed, SeedSequence, Generator, or None to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_row_matrix(values, width: int, name: str) -> tuple[np.ndarray, bool]:
    """Return a (N, width) float array plus a flag telling if input was 1-D."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != width:
            raise ValueError(f"{name} has length {arr.shape[0]}, expected {width}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"{name} must be (N, {width}), got shape {arr.shape}")
    return arr, False
