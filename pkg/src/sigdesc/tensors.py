"""Immutable activation containers with shape validation.

Feature maps are plain 2-D float32 arrays; a block stacks its channels into
one ``(channels, height, width)`` array so the per-channel maps stay
row-major and contiguous.  All arrays are frozen after construction and are
safe to share between worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import NetworkConfig

#: |sum(class_probs) - 1| tolerance for softmax output vectors.
CLASS_PROBS_TOLERANCE = 1e-5


class ActivationError(ValueError):
    """Raised when activation data violates a structural invariant."""


def as_frozen(values, dtype) -> np.ndarray:
    """Contiguous read-only array of ``dtype``.

    Writable inputs are copied so later caller writes cannot reach the
    stored data; already-read-only inputs (e.g. file-backed views) are
    shared without copying.
    """
    arr = np.ascontiguousarray(values, dtype=dtype)
    if arr is values and arr.flags.writeable:
        arr = arr.copy()
    arr.setflags(write=False)
    return arr


def _frozen_f32(values, name: str, ndim: int) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if arr.ndim != ndim:
        raise ActivationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ActivationError(f"{name} must be non-empty")
    if not np.all(arr >= 0):
        # NaN fails the comparison too; both indicate a broken provider.
        raise ActivationError(f"{name} contains negative or NaN entries")
    if arr is values and arr.flags.writeable:
        arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BlockActivations:
    """Post-pooling output of one convolutional block.

    ``maps`` has shape ``(channels, height, width)``; ``block_index`` is
    1-based, counting from the input side of the network.
    """

    block_index: int
    maps: np.ndarray

    def __post_init__(self) -> None:
        if self.block_index < 1:
            raise ActivationError(f"block_index must be >= 1, got {self.block_index}")
        object.__setattr__(self, "maps", _frozen_f32(self.maps, "block maps", 3))

    @classmethod
    def from_channels(cls, block_index: int, channels: Sequence[np.ndarray]) -> "BlockActivations":
        """Stack per-channel 2-D maps; rejects ragged channel shapes."""
        if not channels:
            raise ActivationError("a block needs at least one channel")
        arrays = [np.asarray(c) for c in channels]
        shapes = {a.shape for a in arrays}
        if any(a.ndim != 2 for a in arrays) or len(shapes) != 1:
            raise ActivationError(f"channels must share one 2-D shape, got {sorted(shapes)}")
        return cls(block_index, np.stack(arrays).astype(np.float32))

    @property
    def channels(self) -> int:
        return self.maps.shape[0]

    @property
    def height(self) -> int:
        return self.maps.shape[1]

    @property
    def width(self) -> int:
        return self.maps.shape[2]

    def channel(self, k: int) -> np.ndarray:
        """The k-th feature map (0-based), as a read-only (height, width) view."""
        return self.maps[k]


@dataclass(frozen=True)
class NetworkActivations:
    """Everything one forward pass produces for a single image: all block
    outputs plus the two fully connected activation vectors, and optionally
    the softmax class probabilities."""

    blocks: tuple[BlockActivations, ...]
    fc1: np.ndarray
    fc2: np.ndarray
    class_probs: np.ndarray | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ActivationError("need at least one block")
        for position, block in enumerate(self.blocks, start=1):
            if block.block_index != position:
                raise ActivationError(
                    f"blocks out of order: found index {block.block_index} at position {position}"
                )
        object.__setattr__(self, "fc1", _frozen_f32(self.fc1, "fc1", 1))
        object.__setattr__(self, "fc2", _frozen_f32(self.fc2, "fc2", 1))
        if self.class_probs is not None:
            probs = _frozen_f32(self.class_probs, "class_probs", 1)
            total = float(probs.sum(dtype=np.float64))
            if abs(total - 1.0) > CLASS_PROBS_TOLERANCE:
                raise ActivationError(f"class_probs sum to {total}, expected 1")
            object.__setattr__(self, "class_probs", probs)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def block(self, index: int) -> BlockActivations:
        """Block by 1-based index."""
        if not 1 <= index <= self.n_blocks:
            raise ActivationError(f"block index {index} outside 1..{self.n_blocks}")
        return self.blocks[index - 1]

    @property
    def last_block(self) -> BlockActivations:
        return self.blocks[-1]


@dataclass(frozen=True)
class ShapeMismatch:
    """One disagreement between an activation tensor and the config."""

    location: str
    expected: tuple[int, ...]
    actual: tuple[int, ...]

    def __str__(self) -> str:
        return f"{self.location}: expected {self.expected}, got {self.actual}"


def validate_shapes(acts: NetworkActivations, cfg: NetworkConfig) -> list[ShapeMismatch]:
    """Compare every tensor in ``acts`` against ``cfg``.

    Returns an empty list when everything matches; otherwise one entry per
    mismatching tensor.  Mismatches are data, not faults: nothing raises.
    """
    mismatches: list[ShapeMismatch] = []
    if acts.n_blocks != cfg.n_blocks:
        mismatches.append(ShapeMismatch("blocks", (cfg.n_blocks,), (acts.n_blocks,)))
    for block, shape in zip(acts.blocks, cfg.blocks):
        expected = (shape.channels, shape.height, shape.width)
        if block.maps.shape != expected:
            mismatches.append(
                ShapeMismatch(f"block{block.block_index}", expected, block.maps.shape)
            )
    if acts.fc1.shape != (cfg.fc1_size,):
        mismatches.append(ShapeMismatch("fc1", (cfg.fc1_size,), acts.fc1.shape))
    if acts.fc2.shape != (cfg.fc2_size,):
        mismatches.append(ShapeMismatch("fc2", (cfg.fc2_size,), acts.fc2.shape))
    return mismatches


def require_valid_shapes(acts: NetworkActivations, cfg: NetworkConfig) -> None:
    """Raise :class:`ActivationError` listing every mismatch, if any."""
    mismatches = validate_shapes(acts, cfg)
    if mismatches:
        raise ActivationError("; ".join(str(m) for m in mismatches))
