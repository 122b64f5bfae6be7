"""Flat descriptor index: persistence and exact top-k search under
dimension-normalized L1 distance.

The index is a dense float32 matrix scanned in full for every query (no
approximation).  Scanning row-by-row makes the result independent of how the
matrix is partitioned, so chunked parallel scans merge deterministically.
Ties in distance are broken by index order (the manifest order used to build
the index).
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import kernels
from .descriptors import Descriptor, Family
from .tensors import as_frozen

MAGIC = b"DIDX"
FORMAT_VERSION = 1


class IndexFormatError(ValueError):
    """Raised for a malformed index file; carries the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class FamilyMismatchWarning(UserWarning):
    """An index file holds a different family than the caller expected."""


class Hit(NamedTuple):
    image_id: str
    distance: float


@dataclass(frozen=True)
class QueryResult:
    """Hits ranked by ascending distance; ties follow index order."""

    hits: tuple[Hit, ...]

    def ids(self) -> list[str]:
        return [h.image_id for h in self.hits]

    def __len__(self) -> int:
        return len(self.hits)


@dataclass(frozen=True)
class DescriptorIndex:
    """Ordered (image id, descriptor) rows of one family, as one matrix."""

    family: Family
    ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(self.ids))
        matrix = np.asarray(self.matrix)
        if matrix.ndim != 2:
            raise ValueError(f"index matrix must be 2-D, got shape {matrix.shape}")
        if matrix.shape[0] != len(self.ids):
            raise ValueError(
                f"{len(self.ids)} ids but {matrix.shape[0]} descriptor rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("image ids must be unique within an index")
        object.__setattr__(self, "matrix", as_frozen(self.matrix, np.float32))

    @classmethod
    def from_entries(
        cls, family: Family, entries: Iterable[tuple[str, np.ndarray]], dim: int | None = None
    ) -> "DescriptorIndex":
        """Build from (id, vector) pairs; all vectors must share one dim."""
        ids: list[str] = []
        rows: list[np.ndarray] = []
        for image_id, values in entries:
            vec = np.ascontiguousarray(values, dtype=np.float32).reshape(-1)
            if dim is None:
                dim = vec.shape[0]
            if vec.shape[0] != dim:
                raise ValueError(
                    f"descriptor for {image_id!r} has dim {vec.shape[0]}, expected {dim}"
                )
            ids.append(image_id)
            rows.append(vec)
        if dim is None:
            raise ValueError("cannot build an empty index without an explicit dim")
        matrix = np.vstack(rows) if rows else np.empty((0, dim), dtype=np.float32)
        return cls(family=family, ids=tuple(ids), matrix=matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def descriptor(self, image_id: str) -> Descriptor:
        """Stored descriptor of one indexed image."""
        try:
            row = self.ids.index(image_id)
        except ValueError:
            raise KeyError(f"id {image_id!r} not in index") from None
        return Descriptor(self.family, self.matrix[row])


def l1_norm_distance(a: np.ndarray, b: np.ndarray) -> float:
    """L1 distance divided by the number of dimensions.

    Routed through the scan kernel so a standalone distance and a full index
    scan produce bit-identical values.
    """
    a = np.asarray(a, dtype=np.float32).reshape(-1)
    b = np.asarray(b, dtype=np.float32).reshape(-1)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("vectors must be non-empty")
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(kernels.l1_scan(b[np.newaxis, :], a)[0])


def _query_vector(index: DescriptorIndex, query: Descriptor | np.ndarray) -> np.ndarray:
    if isinstance(query, Descriptor):
        if query.family != index.family:
            warnings.warn(
                f"querying a {index.family.value!r} index with a {query.family.value!r} "
                "descriptor",
                FamilyMismatchWarning,
                stacklevel=3,
            )
        vec = query.values
    else:
        vec = np.asarray(query, dtype=np.float32).reshape(-1)
    if vec.shape[0] != index.dim:
        raise ValueError(f"query dim {vec.shape[0]} does not match index dim {index.dim}")
    return vec


def scan_distances(index: DescriptorIndex, query: Descriptor | np.ndarray) -> np.ndarray:
    """Distance from the query to every indexed descriptor, in index order."""
    return kernels.l1_scan(index.matrix, _query_vector(index, query))


def top_k(index: DescriptorIndex, query: Descriptor | np.ndarray, k: int) -> QueryResult:
    """The k nearest entries by full scan, ascending, ties in index order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    distances = scan_distances(index, query)
    # Stable sort keeps index order among exact ties.
    order = np.argsort(distances, kind="stable")[:k]
    return QueryResult(
        hits=tuple(Hit(index.ids[i], float(distances[i])) for i in order)
    )


def top_k_chunked(
    index: DescriptorIndex, query: Descriptor | np.ndarray, k: int, chunks: int
) -> QueryResult:
    """Partitioned scan with deterministic merge; equals :func:`top_k` exactly.

    Splits the index into ``chunks`` contiguous row ranges, selects each
    range's local top-k, and merges candidates by (distance, global row).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if chunks < 1:
        raise ValueError(f"chunks must be >= 1, got {chunks}")
    vec = _query_vector(index, query)
    bounds = np.linspace(0, len(index), chunks + 1, dtype=int)
    candidates: list[tuple[float, int]] = []
    for start, stop in zip(bounds, bounds[1:]):
        if start == stop:
            continue
        local = kernels.l1_scan(index.matrix[start:stop], vec)
        keep = np.argsort(local, kind="stable")[:k]
        candidates.extend((float(local[i]), start + int(i)) for i in keep)
    candidates.sort()
    return QueryResult(
        hits=tuple(Hit(index.ids[row], dist) for dist, row in candidates[:k])
    )


def save_index(index: DescriptorIndex, path) -> None:
    """Write the binary index file (little-endian, float32 matrix)."""
    family = index.family.value.encode("ascii")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        fh.write(struct.pack("<B", len(family)))
        fh.write(family)
        fh.write(struct.pack("<II", index.dim, len(index)))
        for image_id in index.ids:
            encoded = image_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValueError(f"id too long to store: {image_id!r}")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
        fh.write(np.ascontiguousarray(index.matrix, dtype="<f4").tobytes())


def load_index(path, expected_family: Family | None = None) -> DescriptorIndex:
    """Read an index file back; warns if the family differs from expectation."""
    with open(path, "rb") as fh:
        data = fh.read()

    def need(count: int, offset: int, what: str) -> None:
        if offset + count > len(data):
            raise IndexFormatError(
                f"truncated index: needed {count} bytes for {what}, "
                f"have {len(data) - offset}",
                offset,
            )

    need(4, 0, "magic")
    if data[:4] != MAGIC:
        raise IndexFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", 0)
    need(2, 4, "version")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported index version {version}", 4)
    offset = 6
    need(1, offset, "family tag length")
    fam_len = data[offset]
    offset += 1
    need(fam_len, offset, "family tag")
    fam_raw = data[offset : offset + fam_len].decode("ascii")
    offset += fam_len
    try:
        family = Family(fam_raw)
    except ValueError:
        raise IndexFormatError(f"unknown family tag {fam_raw!r}", offset - fam_len) from None
    if expected_family is not None and family != expected_family:
        warnings.warn(
            f"index holds family {family.value!r}, expected {expected_family.value!r}",
            FamilyMismatchWarning,
            stacklevel=2,
        )
    need(8, offset, "dim/count header")
    dim, count = struct.unpack_from("<II", data, offset)
    offset += 8
    ids = []
    for n in range(count):
        need(2, offset, f"id {n} length")
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        need(id_len, offset, f"id {n}")
        ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
    matrix_bytes = count * dim * 4
    need(matrix_bytes, offset, f"{count}x{dim} float32 matrix")
    if len(data) != offset + matrix_bytes:
        raise IndexFormatError(
            f"{len(data) - offset - matrix_bytes} unexpected trailing bytes",
            offset + matrix_bytes,
        )
    matrix = np.frombuffer(
        data, dtype="<f4", count=count * dim, offset=offset
    ).reshape(count, dim)
    return DescriptorIndex(family=family, ids=tuple(ids), matrix=matrix)


def load_external_csv(path, family: Family = Family.EXTERNAL) -> DescriptorIndex:
    """Import externally produced descriptors from CSV rows of
    ``id,v0,v1,...``; the vectors are tagged with ``family``."""

    def rows():
        with open(path, newline="", encoding="utf-8") as fh:
            for line_no, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                if len(row) < 2:
                    raise ValueError(f"{path}:{line_no}: need an id and at least one value")
                yield row[0], np.array([float(v) for v in row[1:]], dtype=np.float32)

    return DescriptorIndex.from_entries(family, rows())


def load_external_binary(
    ids_path, values_path, dim: int, family: Family = Family.EXTERNAL
) -> DescriptorIndex:
    """Import external descriptors from a flat little-endian float32 file plus
    an id manifest (one id per line, same order)."""
    with open(ids_path, encoding="utf-8") as fh:
        ids = [line.strip() for line in fh if line.strip()]
    raw = np.fromfile(values_path, dtype="<f4")
    if raw.size != len(ids) * dim:
        raise ValueError(
            f"{values_path} holds {raw.size} floats, expected {len(ids)}x{dim}"
        )
    return DescriptorIndex(family=family, ids=tuple(ids), matrix=raw.reshape(len(ids), dim))
