"""Histogram-based retrieval assessment and report emission.

Retrieval quality is scored without labels: for each query, the top-k hits
are compared to the query by 25-bin per-channel RGB histograms under
dimension-normalized L1 distance, and the per-query means are averaged per
descriptor family into a summary table.
"""

from __future__ import annotations

import base64
import html
import io
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from PIL import Image

from .descriptors import Descriptor, Family
from .images import ImageRecord, load_image
from .index import DescriptorIndex, top_k
from .tensors import as_frozen

N_BINS = 25
FLAT_DIM = 3 * N_BINS


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ColorHistogram:
    """Per-channel (R, G, B) frequency histograms over 25 bins each."""

    bins: np.ndarray

    def __post_init__(self) -> None:
        bins = np.asarray(self.bins)
        if bins.shape != (3, N_BINS):
            raise ValueError(f"expected (3, {N_BINS}) bins, got shape {bins.shape}")
        if not np.all(np.asarray(bins, dtype=np.float64) >= 0.0):
            raise ValueError("histogram bins must be non-negative")
        object.__setattr__(self, "bins", as_frozen(self.bins, np.float64))

    def flattened(self) -> np.ndarray:
        return self.bins.reshape(FLAT_DIM)


def bin_index(value: int) -> int:
    """Bin for an 8-bit channel value: floor(v*25/256), so 0 -> 0, 255 -> 24."""
    if not 0 <= value <= 255:
        raise ValueError(f"channel value out of range: {value}")
    return (value * N_BINS) >> 8


def color_histogram(pixels: np.ndarray) -> ColorHistogram:
    """Histogram an (H, W, 3) uint8 RGB array into per-channel frequencies."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) pixels, got shape {pixels.shape}")
    if pixels.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {pixels.dtype}")
    n = pixels.shape[0] * pixels.shape[1]
    if n == 0:
        raise ValueError("cannot histogram an empty image")
    bins = np.empty((3, N_BINS), dtype=np.float64)
    for c in range(3):
        values = pixels[:, :, c].reshape(-1).astype(np.int64)
        counts = np.bincount((values * N_BINS) >> 8, minlength=N_BINS)
        bins[c] = counts / n
    return ColorHistogram(bins=bins)


def histogram_of_file(record: ImageRecord) -> ColorHistogram:
    """Histogram of the original on-disk pixels (no resizing)."""
    try:
        pixels = load_image(record.path)
    except OSError as exc:
        raise EvaluationError(f"cannot decode {record.path}: {exc}") from exc
    return color_histogram(pixels)


def histogram_distance(a: ColorHistogram, b: ColorHistogram) -> float:
    """L1 distance between flattened histograms, divided by 75."""
    return float(np.sum(np.abs(a.flattened() - b.flattened())) / FLAT_DIM)


@dataclass(frozen=True)
class HitAssessment:
    rank: int
    image_id: str
    descriptor_distance: float
    histogram_distance: float


@dataclass(frozen=True)
class QueryAssessment:
    """One query under one family: its hits and their mean histogram distance."""

    query_id: str
    family: Family
    hits: tuple[HitAssessment, ...]
    mean_histogram_distance: float


@dataclass(frozen=True)
class EvaluationReport:
    assessments: tuple[QueryAssessment, ...]

    def families(self) -> tuple[Family, ...]:
        seen: list[Family] = []
        for a in self.assessments:
            if a.family not in seen:
                seen.append(a.family)
        return tuple(seen)

    def query_ids(self) -> tuple[str, ...]:
        seen: list[str] = []
        for a in self.assessments:
            if a.query_id not in seen:
                seen.append(a.query_id)
        return tuple(seen)

    def for_family(self, family: Family) -> tuple[QueryAssessment, ...]:
        return tuple(a for a in self.assessments if a.family == family)

    def grand_mean(self, family: Family) -> float:
        """Mean of the per-query means, the summary table's bottom row."""
        rows = self.for_family(family)
        if not rows:
            raise KeyError(f"no assessments for family {family.value!r}")
        return float(np.mean([a.mean_histogram_distance for a in rows]))


DescriptorProvider = Callable[[ImageRecord, Family], "Descriptor | np.ndarray"]
RecordResolver = Callable[[str], ImageRecord]


def evaluate(
    queries: Sequence[ImageRecord],
    indices: Mapping[Family, DescriptorIndex],
    resolver: RecordResolver,
    k: int,
    descriptor_provider: DescriptorProvider,
) -> EvaluationReport:
    """Score every (query, family) pair.

    ``descriptor_provider`` supplies the query's descriptor for a family
    (from a dump, a stored index row, or live inference).  ``resolver`` maps
    a retrieved id back to its image record so hit pixels can be histogrammed.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not queries:
        raise ValueError("no query images given")
    if not indices:
        raise ValueError("no indices given")
    histogram_cache: dict[str, ColorHistogram] = {}

    def hist_for(record: ImageRecord) -> ColorHistogram:
        found = histogram_cache.get(record.image_id)
        if found is None:
            found = histogram_of_file(record)
            histogram_cache[record.image_id] = found
        return found

    assessments: list[QueryAssessment] = []
    for query in queries:
        query_hist = hist_for(query)
        for family, index in indices.items():
            if len(index) == 0:
                raise EvaluationError(
                    f"index for family {family.value!r} is empty"
                )
            result = top_k(index, descriptor_provider(query, family), k)
            hits: list[HitAssessment] = []
            for rank, hit in enumerate(result.hits, start=1):
                try:
                    record = resolver(hit.image_id)
                except KeyError:
                    raise EvaluationError(
                        f"retrieved id {hit.image_id!r} cannot be resolved to an image"
                    ) from None
                hits.append(
                    HitAssessment(
                        rank=rank,
                        image_id=hit.image_id,
                        descriptor_distance=hit.distance,
                        histogram_distance=histogram_distance(
                            query_hist, hist_for(record)
                        ),
                    )
                )
            mean = float(np.mean([h.histogram_distance for h in hits]))
            assessments.append(
                QueryAssessment(
                    query_id=query.image_id,
                    family=family,
                    hits=tuple(hits),
                    mean_histogram_distance=mean,
                )
            )
    return EvaluationReport(assessments=tuple(assessments))


def write_hits_csv(report: EvaluationReport, path) -> None:
    """One row per retrieved hit, distances at 6 decimal places."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("query_id,family,rank,hit_id,descriptor_distance,histogram_distance\n")
        for a in report.assessments:
            for h in a.hits:
                fh.write(
                    f"{a.query_id},{a.family.value},{h.rank},{h.image_id},"
                    f"{h.descriptor_distance:.6f},{h.histogram_distance:.6f}\n"
                )


def write_summary_csv(report: EvaluationReport, path) -> None:
    """Queries as rows, families as columns, final row of grand means."""
    families = report.families()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("query_id," + ",".join(f.value for f in families) + "\n")
        by_key = {(a.query_id, a.family): a for a in report.assessments}
        for query_id in report.query_ids():
            cells = []
            for family in families:
                a = by_key.get((query_id, family))
                cells.append("" if a is None else f"{a.mean_histogram_distance:.6f}")
            fh.write(f"{query_id}," + ",".join(cells) + "\n")
        fh.write(
            "average," + ",".join(f"{report.grand_mean(f):.6f}" for f in families) + "\n"
        )


def format_summary_text(report: EvaluationReport) -> str:
    """Aligned text rendering of the summary table."""
    families = report.families()
    header = ["query"] + [f.value for f in families]
    rows: list[list[str]] = []
    by_key = {(a.query_id, a.family): a for a in report.assessments}
    for query_id in report.query_ids():
        row = [query_id]
        for family in families:
            a = by_key.get((query_id, family))
            row.append("-" if a is None else f"{a.mean_histogram_distance:.6f}")
        rows.append(row)
    rows.append(["average"] + [f"{report.grand_mean(f):.6f}" for f in families])
    widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
             for r in [header] + rows]
    return "\n".join(lines) + "\n"


def _thumbnail_uri(record: ImageRecord, size: int = 128) -> str:
    with Image.open(record.path) as img:
        rgb = img.convert("RGB")
        rgb.thumbnail((size, size), resample=Image.BILINEAR)
        buf = io.BytesIO()
        rgb.save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def write_html_montage(report: EvaluationReport, resolver: RecordResolver, path) -> None:
    """Self-contained HTML page: each query beside its top hits per family."""
    uri_cache: dict[str, str] = {}

    def uri(image_id: str) -> str:
        found = uri_cache.get(image_id)
        if found is None:
            found = _thumbnail_uri(resolver(image_id))
            uri_cache[image_id] = found
        return found

    parts = [
        "<!DOCTYPE html>\n<html><head><meta charset='utf-8'>",
        "<title>retrieval montage</title>",
        "<style>body{font-family:sans-serif}figure{display:inline-block;"
        "margin:4px;text-align:center}figcaption{font-size:11px}"
        "img{display:block;max-width:128px}</style></head><body>",
    ]
    for a in report.assessments:
        parts.append(
            f"<h2>{html.escape(a.query_id)} / {html.escape(a.family.value)} "
            f"(mean {a.mean_histogram_distance:.6f})</h2><div>"
        )
        parts.append(
            f"<figure><img src='{uri(a.query_id)}' alt='query'>"
            f"<figcaption>query</figcaption></figure>"
        )
        for h in a.hits:
            parts.append(
                f"<figure><img src='{uri(h.image_id)}' alt='{html.escape(h.image_id)}'>"
                f"<figcaption>#{h.rank} {html.escape(h.image_id)}<br>"
                f"d={h.descriptor_distance:.6f}<br>hist={h.histogram_distance:.6f}"
                f"</figcaption></figure>"
            )
        parts.append("</div>")
    parts.append("</body></html>\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(parts))
