"""Network layout descriptions against which all activation tensors are validated.

A :class:`NetworkConfig` fixes the block geometry (per-block feature map
height/width/channel counts), the widths of the two fully connected layers,
and the preprocessing constants the network was trained with.  Every other
module validates its inputs against one of these configs.
"""

from __future__ import annotations

from dataclasses import dataclass


class ConfigError(ValueError):
    """Raised for an inconsistent network configuration."""


@dataclass(frozen=True)
class BlockShape:
    """Feature map geometry of one convolutional block output."""

    height: int
    width: int
    channels: int

    def __post_init__(self) -> None:
        for name in ("height", "width", "channels"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(f"BlockShape.{name} must be a positive integer, got {v!r}")


@dataclass(frozen=True)
class Preprocessing:
    """Input-side constants: target size, per-channel means, channel order.

    ``channel_means`` are expressed in ``channel_order`` (e.g. for order
    ``"BGR"`` the first mean belongs to the blue channel).
    """

    height: int
    width: int
    channel_means: tuple[float, float, float]
    channel_order: str = "RGB"

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0:
            raise ConfigError("preprocessing target size must be positive")
        if self.channel_order not in ("RGB", "BGR"):
            raise ConfigError(f"unsupported channel order {self.channel_order!r}")
        if len(self.channel_means) != 3:
            raise ConfigError("channel_means must have exactly three entries")


@dataclass(frozen=True)
class NetworkConfig:
    """Block/FC layout of a convolutional network with max-pooled blocks.

    Feature maps halve in both directions from one block to the next, so
    every position in the last block corresponds to an aligned square patch
    in each earlier block.  The constructor rejects layouts that break this.
    """

    blocks: tuple[BlockShape, ...]
    fc1_size: int
    fc2_size: int
    preprocessing: Preprocessing

    def __post_init__(self) -> None:
        if not self.blocks:
            raise ConfigError("a network needs at least one block")
        object.__setattr__(self, "blocks", tuple(self.blocks))
        for prev, cur in zip(self.blocks, self.blocks[1:]):
            if prev.height != 2 * cur.height or prev.width != 2 * cur.width:
                raise ConfigError(
                    f"feature maps must halve between blocks: "
                    f"{prev.height}x{prev.width} is not twice {cur.height}x{cur.width}"
                )
        if self.fc1_size <= 0 or self.fc2_size <= 0:
            raise ConfigError("fully connected sizes must be positive")

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def last_block(self) -> BlockShape:
        return self.blocks[-1]

    def block(self, index: int) -> BlockShape:
        """Shape of block ``index`` (1-based, matching block numbering)."""
        if not 1 <= index <= self.n_blocks:
            raise ConfigError(f"block index {index} outside 1..{self.n_blocks}")
        return self.blocks[index - 1]

    def scale_factor(self, index: int) -> int:
        """Side length of the patch in block ``index`` covered by one
        last-block position: ``2 ** (n_blocks - index)``."""
        self.block(index)
        return 2 ** (self.n_blocks - index)

    @property
    def fc_descriptor_dim(self) -> int:
        return self.fc1_size + self.fc2_size

    @property
    def conv_descriptor_dim(self) -> int:
        return sum(b.channels for b in self.blocks)

    @property
    def combined_descriptor_dim(self) -> int:
        return self.fc_descriptor_dim + self.conv_descriptor_dim


#: Layout of the standard 16-layer VGG classifier: five conv blocks ending in
#: 2x2 max-pooling, then two 4096-wide fully connected layers.  Means are the
#: usual ILSVRC per-channel training means in RGB order.
VGG16_CONFIG = NetworkConfig(
    blocks=(
        BlockShape(112, 112, 64),
        BlockShape(56, 56, 128),
        BlockShape(28, 28, 256),
        BlockShape(14, 14, 512),
        BlockShape(7, 7, 512),
    ),
    fc1_size=4096,
    fc2_size=4096,
    preprocessing=Preprocessing(
        height=224,
        width=224,
        channel_means=(123.68, 116.779, 103.939),
        channel_order="RGB",
    ),
)
