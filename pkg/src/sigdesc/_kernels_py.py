"""Pure-numpy implementations of the hot kernels.

Drop-in twins of the compiled routines in ``_kernels.pyx``; selected by
``sigdesc.kernels`` when the extension is unavailable or disabled.  All
accumulation happens in float64.  numpy's pairwise summation makes results
deterministic for a given input, though the last few bits can differ from
the compiled kernels' strictly sequential sums.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

# Row block size for the scan: bounds the |row - query| temporary to
# chunk * dim float64 values (~75 MB at 9664 dims).
_SCAN_CHUNK = 1024


def l1_scan(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Dimension-normalized L1 distance from ``query`` to every matrix row.

    ``matrix`` is (n, d) float32, ``query`` (d,) float32; returns (n,) float64
    with each entry ``sum(|row - query|) / d``.
    """
    n, d = matrix.shape
    q64 = query.astype(np.float64)
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, _SCAN_CHUNK):
        stop = min(start + _SCAN_CHUNK, n)
        diffs = matrix[start:stop].astype(np.float64)
        diffs -= q64
        np.abs(diffs, out=diffs)
        out[start:stop] = diffs.sum(axis=1)
    out /= d
    return out


def weighted_channel_means(maps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-channel weighted average of (channels, h, w) maps under one shared
    (h, w) non-negative weight matrix.  Zero total weight yields 0.0."""
    total = float(weights.sum(dtype=np.float64))
    if total == 0.0:
        return np.zeros(maps.shape[0], dtype=np.float32)
    sums = np.tensordot(maps.astype(np.float64), weights, axes=([1, 2], [0, 1]))
    return (sums / total).astype(np.float32)


def masked_channel_means(maps: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Per-channel mean of the entries selected by that channel's own binary
    mask.  Channels with an empty mask yield 0.0."""
    m64 = masks.astype(np.float64)
    counts = m64.sum(axis=(1, 2))
    sums = (maps.astype(np.float64) * m64).sum(axis=(1, 2))
    out = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return out.astype(np.float32)
