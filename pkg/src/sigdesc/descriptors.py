"""Descriptor assembly: characteristic values per channel, three vector families.

Each feature map contributes one characteristic value: a significance-weighted
average of its activations.  Earlier blocks share their block's count matrix
as weights; the last block averages each channel over that channel's own
significant positions.  The families are the fully-connected concatenation,
the per-block characteristic values, and the concatenation of both.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .config import NetworkConfig
from .significance import SignificanceSet, compute_significance
from .tensors import (
    BlockActivations,
    NetworkActivations,
    as_frozen,
    require_valid_shapes,
)


class Family(str, Enum):
    """Descriptor family tags; values double as file/CLI names."""

    FC = "fc"
    CONV = "conv"
    COMBINED = "combined"
    EXTERNAL = "external"


@dataclass(frozen=True)
class Descriptor:
    """A flat float32 vector tagged with its family."""

    family: Family
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"descriptor values must be a non-empty vector, got {arr.shape}")
        object.__setattr__(self, "values", as_frozen(self.values, np.float32))

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class BlockSummary:
    """Characteristic values of one block, one entry per channel."""

    block_index: int
    weights: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", as_frozen(self.weights, np.float32))


def block_summary(
    block: BlockActivations, sig: SignificanceSet, cfg: NetworkConfig
) -> BlockSummary:
    """Characteristic value of every channel in ``block``.

    For blocks before the last, each channel is averaged with the block's
    count matrix as weights; the last block averages each channel over its
    own binary significance matrix.  A zero weight total yields 0.0 for the
    affected channel.
    """
    m = block.block_index
    if m == cfg.n_blocks:
        values = kernels.masked_channel_means(block.maps, sig.last_block)
    else:
        weights = sig.count_matrix(m).astype(np.float64)
        values = kernels.weighted_channel_means(block.maps, weights)
    return BlockSummary(block_index=m, weights=values)


@dataclass(frozen=True)
class DescriptorSet:
    """The three families computed from one image."""

    fc: Descriptor
    conv: Descriptor
    combined: Descriptor

    def get(self, family: Family) -> Descriptor:
        if family == Family.FC:
            return self.fc
        if family == Family.CONV:
            return self.conv
        if family == Family.COMBINED:
            return self.combined
        raise KeyError(f"no computed descriptor for family {family.value!r}")


def build_descriptors(
    acts: NetworkActivations, q: float, cfg: NetworkConfig
) -> DescriptorSet:
    """All three descriptor families for one image's activations.

    The FC family concatenates the two fully connected vectors; the conv
    family concatenates every block's characteristic values in block order;
    the combined family is FC followed by conv.
    """
    require_valid_shapes(acts, cfg)
    sig = compute_significance(acts, q, cfg)
    per_block = [block_summary(block, sig, cfg).weights for block in acts.blocks]
    fc = np.concatenate([acts.fc1, acts.fc2])
    conv = np.concatenate(per_block)
    combined = np.concatenate([fc, conv])
    return DescriptorSet(
        fc=Descriptor(Family.FC, fc),
        conv=Descriptor(Family.CONV, conv),
        combined=Descriptor(Family.COMBINED, combined),
    )
