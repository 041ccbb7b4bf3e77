"""Exact flat nearest-neighbour index with a checksummed binary file format."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from knobrag.corpus import DocKind, atomic_write_bytes
from knobrag.embed.vectors import as_array
from knobrag.errors import CorruptIndex, DimensionMismatch, DuplicateId, IoFailure

MAGIC = b"CDXI"
VERSION = 1
FLAG_NORMALIZED = 1
_HEADER = struct.Struct("<4sIIQI")    # magic, version, d, count, flags
_KIND_CODES = {DocKind.HISTORICAL: 0, DocKind.MANUAL: 1, DocKind.SYNTHETIC: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


@dataclass(frozen=True)
class IndexEntry:
    doc_id: str
    vector: np.ndarray
    kind: DocKind = DocKind.HISTORICAL


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    distance: float
    rank: int


def _unit_rows(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.divide(x, n, out=np.zeros_like(x), where=n > 0)


class FlatIndex:
    """Stores float32 vectors; distances are exact float64 Euclidean.

    With ``normalized`` set, stored vectors and queries are scaled to unit
    norm (zero vectors stay zero). Ties in distance go to the smaller doc_id.
    """

    def __init__(self, doc_ids: Sequence[str], kinds: Sequence[DocKind], matrix: np.ndarray, dim: int,
                 normalized: bool = True):
        self.doc_ids = list(doc_ids)
        self.kinds = list(kinds)
        self.matrix = np.asarray(matrix, dtype=np.float32).reshape(len(self.doc_ids), dim)
        self.matrix.setflags(write=False)
        self.dim = dim
        self.normalized = normalized
        self._positions = {d: i for i, d in enumerate(self.doc_ids)}
        # rank of every id in lexicographic order, the secondary sort key
        order = sorted(range(len(self.doc_ids)), key=self.doc_ids.__getitem__)
        self._id_rank = np.empty(len(self.doc_ids), dtype=np.int64)
        self._id_rank[order] = np.arange(len(self.doc_ids))
        self._rows64 = self.matrix.astype(np.float64)

    def __len__(self) -> int:
        return len(self.doc_ids)

    def __contains__(self, doc_id) -> bool:
        return doc_id in self._positions

    def vector(self, doc_id: str) -> np.ndarray:
        return self._rows64[self._positions[doc_id]].copy()

    def kind(self, doc_id: str) -> DocKind:
        return self.kinds[self._positions[doc_id]]

    def _prepare_query(self, query) -> np.ndarray:
        q = np.asarray(as_array(query), dtype=np.float64).ravel()
        if q.size != self.dim:
            raise DimensionMismatch(f"query has dimension {q.size}, index has {self.dim}")
        if self.normalized:
            q = _unit_rows(q[None, :])[0]
        # queries pass through float32 like stored vectors, so a stored
        # vector used as a query is at distance exactly 0
        return q.astype(np.float32).astype(np.float64)

    def distances(self, query) -> np.ndarray:
        q = self._prepare_query(query)
        diff = self._rows64 - q[None, :]
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def search(self, query, k: int, kinds: Iterable[DocKind] | None = None) -> list[SearchHit]:
        if k < 0:
            raise ValueError("k must be nonnegative")
        if not len(self) or k == 0:
            self._prepare_query(query)
            return []
        dist = self.distances(query)
        candidates = np.arange(len(self))
        if kinds is not None:
            allowed = set(kinds)
            candidates = np.array([i for i in candidates if self.kinds[i] in allowed], dtype=np.int64)
            if not candidates.size:
                return []
        order = candidates[np.lexsort((self._id_rank[candidates], dist[candidates]))][:k]
        return [SearchHit(self.doc_ids[i], float(dist[i]), r) for r, i in enumerate(order, 1)]


def build_index(entries: Iterable[IndexEntry], dim: int | None = None, normalized: bool = True) -> FlatIndex:
    entries = list(entries)
    if dim is None:
        dim = int(as_array(entries[0].vector).size) if entries else 0
    ids, kinds, rows, seen = [], [], [], set()
    for e in entries:
        v = np.asarray(as_array(e.vector), dtype=np.float64).ravel()
        if v.size != dim:
            raise DimensionMismatch(f"{e.doc_id}: dimension {v.size}, expected {dim}")
        if e.doc_id in seen:
            raise DuplicateId(f"duplicate doc_id {e.doc_id!r}")
        seen.add(e.doc_id)
        ids.append(e.doc_id)
        kinds.append(DocKind(e.kind))
        rows.append(v)
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    if normalized and len(rows):
        matrix = _unit_rows(matrix)
    return FlatIndex(ids, kinds, matrix, dim, normalized)


def search_topk(index: FlatIndex, query, k: int) -> list[SearchHit]:
    return index.search(query, k)


# ---------------------------------------------------------------------------
# persistence


def index_bytes(index: FlatIndex) -> bytes:
    flags = FLAG_NORMALIZED if index.normalized else 0
    parts = [_HEADER.pack(MAGIC, VERSION, index.dim, len(index), flags)]
    for doc_id, kind, row in zip(index.doc_ids, index.kinds, index.matrix):
        raw = doc_id.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(bytes([_KIND_CODES[kind]]))
        parts.append(np.ascontiguousarray(row, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def index_from_bytes(data: bytes) -> FlatIndex:
    if len(data) < _HEADER.size + 4:
        raise CorruptIndex("index file truncated")
    magic, version, dim, count, flags = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptIndex("bad index magic")
    if version != VERSION:
        raise CorruptIndex(f"unsupported index version {version}")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise CorruptIndex("index checksum mismatch")
    off = _HEADER.size
    end = len(data) - 4
    ids, kinds, rows = [], [], []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            if off + n + 1 + 4 * dim > end:
                raise CorruptIndex("index entry runs past the end of the file")
            ids.append(data[off:off + n].decode("utf-8"))
            off += n
            kinds.append(_CODE_KINDS[data[off]])
            off += 1
            rows.append(np.frombuffer(data, "<f4", dim, off))
            off += 4 * dim
    except (struct.error, UnicodeDecodeError, KeyError) as exc:
        raise CorruptIndex(f"malformed index entry: {exc}") from None
    if off != end:
        raise CorruptIndex("trailing bytes after the last index entry")
    if len(set(ids)) != len(ids):
        raise CorruptIndex("duplicate doc_id in index file")
    matrix = np.array(rows, dtype=np.float32).reshape(count, dim)
    return FlatIndex(ids, kinds, matrix, dim, bool(flags & FLAG_NORMALIZED))


def persist(index: FlatIndex, path: str | Path) -> None:
    try:
        atomic_write_bytes(path, index_bytes(index))
    except OSError as exc:
        raise IoFailure(f"cannot write index {path}: {exc}") from None


def load(path: str | Path) -> FlatIndex:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read index {path}: {exc}") from None
    return index_from_bytes(data)
