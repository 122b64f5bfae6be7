"""Image loading, corpus manifests, and network input preprocessing."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .config import NetworkConfig, Preprocessing


@dataclass(frozen=True)
class ImageRecord:
    """One corpus entry: a stable id plus the path the pixels live at."""

    image_id: str
    path: Path

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValueError("image id must be non-empty")
        if any(c in self.image_id for c in "\t\n\r"):
            raise ValueError(f"image id may not contain tabs or newlines: {self.image_id!r}")
        object.__setattr__(self, "path", Path(self.path))


def read_manifest(path) -> list[ImageRecord]:
    """Parse ``id<TAB>path`` lines; relative paths resolve against the
    manifest's own directory.  Line order defines index order."""
    base = Path(path).parent
    records: list[ImageRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{line_no}: expected 'id<TAB>path', got {line!r}"
                )
            image_id, rel = parts
            if image_id in seen:
                raise ValueError(f"{path}:{line_no}: duplicate id {image_id!r}")
            seen.add(image_id)
            p = Path(rel)
            if not p.is_absolute():
                p = base / p
            records.append(ImageRecord(image_id=image_id, path=p))
    return records


def write_manifest(records, path) -> None:
    """Write ``id<TAB>path`` lines in the given order."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(f"{rec.image_id}\t{os.fspath(rec.path)}\n")


def load_image(path) -> np.ndarray:
    """Decode an image file to an RGB uint8 array of shape (H, W, 3)."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.uint8)


def preprocess(pixels: np.ndarray, spec: Preprocessing) -> np.ndarray:
    """Resize and normalize an RGB uint8 image into network input layout.

    Steps: bilinear resize to the spec size (skipped when already there),
    optional channel reorder, then per-channel mean subtraction.  Returns
    float32 (H, W, 3).
    """
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) pixels, got shape {pixels.shape}")
    if pixels.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {pixels.dtype}")
    if pixels.shape[:2] != (spec.height, spec.width):
        img = Image.fromarray(pixels, mode="RGB")
        img = img.resize((spec.width, spec.height), resample=Image.BILINEAR)
        pixels = np.asarray(img, dtype=np.uint8)
    out = pixels.astype(np.float32)
    means = np.asarray(spec.channel_means, dtype=np.float32)
    if spec.channel_order == "BGR":
        out = out[:, :, ::-1]
        means = means[::-1]
    return np.ascontiguousarray(out - means)


def prepare_input(path, config: NetworkConfig) -> np.ndarray:
    """Load one file and preprocess it for the given network."""
    return preprocess(load_image(path), config.preprocessing)
