"""Input validation helpers used at the public API boundary.

All helpers coerce to ``float64`` ndarrays and reject non-finite entries so
that downstream numerical code can assume clean inputs.
"""

from __future__ import annotations

import numpy as np


def check_matrix(a, name: str = "a") -> np.ndarray:
    """Validate and return a non-empty 2D float64 matrix with finite entries."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_weight_tensor(w, name: str = "w") -> np.ndarray:
    """Validate a 4D convolution filter bank laid out as (n, c, kh, kw)."""
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 4:
        raise ValueError(f"{name} must be 4-dimensional (n, c, kh, kw), got ndim={arr.ndim}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has a zero-sized dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_images(x, name: str = "X", image_shape=None) -> np.ndarray:
    """Coerce input samples to a (n_samples, channels, height, width) stack.

    Accepts 4D input directly, 3D input as single-channel images, and 2D
    input when ``image_shape`` is given or the feature count is a perfect
    square (interpreted as single-channel square images).
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        if image_shape is not None:
            ch, h, w = image_shape
        else:
            side = int(round(np.sqrt(arr.shape[1])))
            if side * side != arr.shape[1]:
                raise ValueError(
                    f"{name} is 2D with {arr.shape[1]} features; pass image_shape "
                    "to reshape non-square samples"
                )
            ch, h, w = 1, side, side
        arr = arr.reshape(arr.shape[0], ch, h, w)
    elif arr.ndim == 3:
        arr = arr[:, None, :, :]
    elif arr.ndim != 4:
        raise ValueError(f"{name} must be 2D, 3D, or 4D, got ndim={arr.ndim}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} contains no samples")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_labels(y, n_samples: int, name: str = "y") -> np.ndarray:
    """Validate integer class labels aligned with ``n_samples`` inputs."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got ndim={arr.ndim}")
    if arr.shape[0] != n_samples:
        raise ValueError(f"{name} has {arr.shape[0]} labels for {n_samples} samples")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.round(np.asarray(arr, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(arr, dtype=np.float64)):
            raise ValueError(f"{name} must contain integer class labels")
        arr = rounded
    arr = arr.astype(np.int64)
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name} contains negative class labels")
    return arr
