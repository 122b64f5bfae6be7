"""Locating significant activations and projecting them back through the blocks.

The last block's feature maps are thresholded into per-channel binary
matrices.  Because every pooling stage halves the map size, each last-block
position corresponds to an aligned ``2^(N-m)`` square patch in block ``m``;
an earlier block's count matrix records, per position, how many last-block
channels mark the covering position as significant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig
from .tensors import BlockActivations, NetworkActivations, as_frozen

#: Default activation threshold; picked experimentally in the original study.
DEFAULT_THRESHOLD = 0.5


def threshold_last_block(block: BlockActivations, q: float) -> np.ndarray:
    """Binary significance matrices for the last block: 1 where activation >= q.

    Returns a (channels, height, width) uint8 array of 0/1 entries.  The
    comparison is boundary-inclusive and applies to raw activations.
    """
    if q <= 0:
        raise ValueError(f"threshold must be positive, got {q}")
    # float64 scalar so float32 activations are compared at full precision.
    return (block.maps >= np.float64(q)).astype(np.uint8)


def back_project_indices(i_n: int, j_n: int, m: int, cfg: NetworkConfig) -> set[tuple[int, int]]:
    """Positions in block ``m`` that spatially correspond to last-block
    position ``(i_n, j_n)``.

    Returns every (row, col) of block ``m`` whose floor-division by
    ``2^(N-m)`` lands on ``(i_n, j_n)``: an aligned square patch of
    ``4^(N-m)`` positions.
    """
    last = cfg.last_block
    if not 1 <= m <= cfg.n_blocks:
        raise ValueError(f"block index {m} outside 1..{cfg.n_blocks}")
    if not (0 <= i_n < last.height and 0 <= j_n < last.width):
        raise ValueError(
            f"position ({i_n}, {j_n}) outside the {last.height}x{last.width} last block"
        )
    f = cfg.scale_factor(m)
    return {
        (i, j)
        for i in range(i_n * f, (i_n + 1) * f)
        for j in range(j_n * f, (j_n + 1) * f)
    }


def channel_count_grid(last_block_significance: np.ndarray) -> np.ndarray:
    """Per-position count of significant channels on the last block's grid."""
    return last_block_significance.sum(axis=0, dtype=np.int32)


def build_count_matrix(
    last_block_significance: np.ndarray, m: int, cfg: NetworkConfig
) -> np.ndarray:
    """Count matrix for block ``m`` < N: entry (i, j) is the number of
    last-block channels whose significance covers (i, j).

    Equivalent to materializing each channel's back-projected index set and
    counting membership, but computed as a block upsample of the last-block
    channel-count grid.
    """
    if not 1 <= m < cfg.n_blocks:
        raise ValueError(f"count matrices exist for blocks 1..{cfg.n_blocks - 1}, got {m}")
    grid = channel_count_grid(last_block_significance)
    f = cfg.scale_factor(m)
    return np.repeat(np.repeat(grid, f, axis=0), f, axis=1)


@dataclass(frozen=True)
class SignificanceSet:
    """All significance matrices derived from one image's activations.

    ``last_block`` holds the per-channel binary matrices as one
    (channels, height, width) uint8 array; ``earlier`` holds the count
    matrices for blocks 1..N-1 in block order (``earlier[0]`` is block 1).
    """

    last_block: np.ndarray
    earlier: tuple[np.ndarray, ...]
    threshold: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "last_block", as_frozen(self.last_block, np.uint8))
        object.__setattr__(
            self, "earlier", tuple(as_frozen(m, np.int32) for m in self.earlier)
        )

    def count_matrix(self, m: int) -> np.ndarray:
        """Count matrix of block ``m`` (1-based, m < N)."""
        if not 1 <= m <= len(self.earlier):
            raise ValueError(f"no count matrix for block {m}")
        return self.earlier[m - 1]


def compute_significance(
    acts: NetworkActivations, q: float, cfg: NetworkConfig
) -> SignificanceSet:
    """Threshold the last block and back-project to every earlier block."""
    last = threshold_last_block(acts.last_block, q)
    earlier = tuple(
        build_count_matrix(last, m, cfg) for m in range(1, cfg.n_blocks)
    )
    return SignificanceSet(last_block=last, earlier=earlier, threshold=q)


def write_pgm(matrix: np.ndarray, path) -> None:
    """Debug export: write an integer or float matrix as a binary PGM image,
    linearly scaled so the matrix maximum maps to 255 (all-zero stays black)."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"PGM export needs a 2-D matrix, got shape {arr.shape}")
    peak = arr.max()
    scaled = np.zeros(arr.shape, dtype=np.uint8)
    if peak > 0:
        scaled = np.rint(arr * (255.0 / peak)).astype(np.uint8)
    height, width = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
