"""Bit-exact activation dump files.

A dump stores one image's full set of network activations so the descriptor
pipeline can run without any inference runtime installed.  Layout (all
integers little-endian):

=========  ====  =====================================================
field      type  meaning
=========  ====  =====================================================
magic      4s    b"ACTD"
version    u16   format version (currently 1)
id_len     u16   byte length of the UTF-8 image id
id         ...   image id bytes
n_blocks   u16   number of convolutional blocks N
per block  3*u32 H_m, W_m, C_m for m = 1..N
d1         u32   first fully-connected layer width
d2         u32   second fully-connected layer width
flags      u8    bit 0: class probabilities present
n_classes  u32   class count (0 when bit 0 is clear)
payload    f32   blocks m=1..N (each channel-major, rows within a
                 channel row-major), then fc1, fc2, then the optional
                 class probabilities
=========  ====  =====================================================

Every float is IEEE 754 binary32 little-endian; a write/read round trip is
the identity on the stored values.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensors import BlockActivations, NetworkActivations

MAGIC = b"ACTD"
FORMAT_VERSION = 1
_HHWC = struct.Struct("<III")


class DumpFormatError(ValueError):
    """Raised for a malformed dump; carries the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def write_dump(path, image_id: str, acts: NetworkActivations) -> None:
    """Serialize one image's activations."""
    encoded = image_id.encode("utf-8")
    if not encoded:
        raise ValueError("image id must be non-empty")
    if len(encoded) > 0xFFFF:
        raise ValueError(f"image id too long to store: {image_id!r}")
    probs = acts.class_probs
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<H", len(acts.blocks)))
        for block in acts.blocks:
            fh.write(_HHWC.pack(block.height, block.width, block.channels))
        fh.write(struct.pack("<II", acts.fc1.shape[0], acts.fc2.shape[0]))
        fh.write(struct.pack("<B", 1 if probs is not None else 0))
        fh.write(struct.pack("<I", 0 if probs is None else probs.shape[0]))
        for block in acts.blocks:
            # maps are (C, H, W) row-major already: channel-major on disk.
            fh.write(np.ascontiguousarray(block.maps, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(acts.fc1, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(acts.fc2, dtype="<f4").tobytes())
        if probs is not None:
            fh.write(np.ascontiguousarray(probs, dtype="<f4").tobytes())


def read_dump(path) -> tuple[str, NetworkActivations]:
    """Read a dump back as ``(image_id, activations)``, bit-exact."""
    with open(path, "rb") as fh:
        data = fh.read()

    def need(count: int, offset: int, what: str) -> None:
        if offset + count > len(data):
            raise DumpFormatError(
                f"truncated dump: needed {count} bytes for {what}, "
                f"have {len(data) - offset}",
                offset,
            )

    need(4, 0, "magic")
    if data[:4] != MAGIC:
        raise DumpFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    need(2, 4, "version")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise DumpFormatError(f"unsupported dump version {version}", 4)
    offset = 6
    need(2, offset, "id length")
    (id_len,) = struct.unpack_from("<H", data, offset)
    offset += 2
    need(id_len, offset, "image id")
    try:
        image_id = data[offset : offset + id_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DumpFormatError(f"image id is not valid UTF-8: {exc}", offset) from None
    offset += id_len
    need(2, offset, "block count")
    (n_blocks,) = struct.unpack_from("<H", data, offset)
    offset += 2
    if n_blocks == 0:
        raise DumpFormatError("dump declares zero blocks", offset - 2)
    shapes = []
    for m in range(1, n_blocks + 1):
        need(_HHWC.size, offset, f"block {m} shape")
        h, w, c = _HHWC.unpack_from(data, offset)
        if min(h, w, c) == 0:
            raise DumpFormatError(f"block {m} declares a zero dimension", offset)
        shapes.append((h, w, c))
        offset += _HHWC.size
    need(8, offset, "fc widths")
    d1, d2 = struct.unpack_from("<II", data, offset)
    offset += 8
    if d1 == 0 or d2 == 0:
        raise DumpFormatError("fully-connected widths must be positive", offset - 8)
    need(1, offset, "flags")
    flags = data[offset]
    offset += 1
    if flags & ~0x01:
        raise DumpFormatError(f"unknown flag bits 0x{flags:02x}", offset - 1)
    need(4, offset, "class count")
    (n_classes,) = struct.unpack_from("<I", data, offset)
    offset += 4
    has_probs = bool(flags & 0x01)
    if not has_probs and n_classes != 0:
        raise DumpFormatError(
            f"class count {n_classes} but probabilities flagged absent", offset - 4
        )
    if has_probs and n_classes == 0:
        raise DumpFormatError("probabilities flagged present with zero classes", offset - 4)

    counts = [h * w * c for h, w, c in shapes] + [d1, d2]
    if has_probs:
        counts.append(n_classes)
    expected_payload = 4 * sum(counts)
    if len(data) - offset != expected_payload:
        raise DumpFormatError(
            f"payload is {len(data) - offset} bytes, header declares {expected_payload}",
            offset,
        )

    def take(count: int, what: str) -> np.ndarray:
        nonlocal offset
        need(4 * count, offset, what)
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        return arr

    blocks = []
    for m, (h, w, c) in enumerate(shapes, start=1):
        flat = take(h * w * c, f"block {m} payload")
        blocks.append(BlockActivations(block_index=m, maps=flat.reshape(c, h, w)))
    fc1 = take(d1, "fc1 payload")
    fc2 = take(d2, "fc2 payload")
    probs = take(n_classes, "class probabilities") if has_probs else None
    acts = NetworkActivations(
        blocks=tuple(blocks), fc1=fc1, fc2=fc2, class_probs=probs
    )
    return image_id, acts
