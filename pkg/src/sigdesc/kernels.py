"""Kernel backend selection.

Imports the compiled extension when it is available, otherwise the numpy
fallback.  Set ``SIGDESC_PURE_PYTHON=1`` to force the fallback (useful for
benchmarking the two against each other).  The wrappers here also normalize
dtypes/contiguity so callers can pass whatever they have.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

if os.environ.get("SIGDESC_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

#: Name of the active backend: "compiled" or "python".
BACKEND: str = _impl.BACKEND


def l1_scan(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Dimension-normalized L1 distances from ``query`` to every row of
    ``matrix``; float64, one entry per row."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    query = np.ascontiguousarray(query, dtype=np.float32)
    if matrix.ndim != 2 or query.ndim != 1:
        raise ValueError("l1_scan expects a (n, d) matrix and a (d,) query")
    if matrix.shape[1] != query.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix has {matrix.shape[1]} columns, query {query.shape[0]}"
        )
    if query.shape[0] == 0:
        raise ValueError("vectors must be non-empty")
    return _impl.l1_scan(matrix, query)


def weighted_channel_means(maps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Shared-weight per-channel averages; float32, one entry per channel."""
    maps = np.ascontiguousarray(maps, dtype=np.float32)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if maps.ndim != 3 or weights.shape != maps.shape[1:]:
        raise ValueError(
            f"expected (c, h, w) maps with (h, w) weights, got {maps.shape} and {weights.shape}"
        )
    return _impl.weighted_channel_means(maps, weights)


def masked_channel_means(maps: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Per-channel masked averages; float32, one entry per channel."""
    maps = np.ascontiguousarray(maps, dtype=np.float32)
    masks = np.ascontiguousarray(masks, dtype=np.uint8)
    if maps.ndim != 3 or masks.shape != maps.shape:
        raise ValueError(
            f"maps and masks must share a (c, h, w) shape, got {maps.shape} and {masks.shape}"
        )
    return _impl.masked_channel_means(maps, masks)
