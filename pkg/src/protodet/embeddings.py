"""Embedding storage, normalization, and synthetic cluster generation.

This module is the boundary behind which all neural backbones live: the rest
of the toolkit consumes id-indexed feature vectors and never touches images.

On-disk format ("CDFE"): magic b"CDFE", then three little-endian u32 fields
(version=1, count, dim), then count*dim float32 little-endian payload. A JSON
sidecar at ``<file>.idx.json`` maps each entry ordinal to
``{entry_id, image_id, bbox?, category_id?}`` and may carry free-form
exporter metadata. The binary file plus sidecar is the contract with the
offline feature exporter.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimMismatchError,
    MalformedJsonError,
    TruncatedFileError,
    VersionMismatchError,
    ZeroVectorError,
)

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "EntryMeta",
    "EmbeddingStore",
    "ScaleSet",
    "l2_normalize",
    "cosine",
    "read_store",
    "write_store",
    "synth_clusters",
]

MAGIC = b"CDFE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    """Scale to unit norm; raises ZeroVectorError on a zero vector."""
    v = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroVectorError("cannot normalize a zero vector")
    return v / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; both vectors must be nonzero, same dim."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatchError(f"dim mismatch {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for zero vectors")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class EntryMeta:
    """Sidecar metadata for one store entry."""

    entry_id: int
    image_id: int | None = None
    bbox: tuple[float, float, float, float] | None = None
    category_id: int | None = None


@dataclass
class EmbeddingStore:
    """Id-indexed feature vectors of a single dimension.

    ``entries`` preserves insertion order; that order defines the entry
    ordinals used by the on-disk sidecar. ``kind`` distinguishes support
    instances from query proposals. Treat stores as immutable after load.
    """

    dim: int
    kind: str = "support"
    entries: dict[int, np.ndarray] = field(default_factory=dict)
    meta: dict[int, EntryMeta] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add(self, entry_id: int, vector: np.ndarray, meta: EntryMeta | None = None) -> None:
        v = np.asarray(vector, dtype=np.float32)
        if v.shape != (self.dim,):
            raise DimMismatchError(f"entry {entry_id}: expected dim {self.dim}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"entry {entry_id}: non-finite values")
        if entry_id in self.entries:
            raise ValueError(f"duplicate entry id {entry_id}")
        self.entries[entry_id] = v
        self.meta[entry_id] = meta if meta is not None else EntryMeta(entry_id=entry_id)

    def vector(self, entry_id: int) -> np.ndarray:
        return self.entries[entry_id]

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        if self.dim != other.dim or self.kind != other.kind:
            return False
        if list(self.entries) != list(other.entries):
            return False
        return all(np.array_equal(self.entries[k], other.entries[k]) for k in self.entries)


@dataclass(frozen=True)
class ScaleSet:
    """Image-pyramid scale factors used for multi-scale prototype fusion."""

    scales: tuple[float, ...] = (0.9, 1.0, 1.1, 1.2)

    def __post_init__(self) -> None:
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be nonempty and positive")


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".idx.json")


def write_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the binary payload and its JSON sidecar (bit-exact round trip)."""
    path = Path(path)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, len(store.entries), store.dim)
    payload = bytearray(header)
    entries_meta = []
    for entry_id, vec in store.entries.items():
        payload.extend(np.asarray(vec, dtype="<f4").tobytes())
        m = store.meta.get(entry_id, EntryMeta(entry_id=entry_id))
        rec: dict = {"entry_id": int(entry_id)}
        if m.image_id is not None:
            rec["image_id"] = int(m.image_id)
        if m.bbox is not None:
            rec["bbox"] = [float(v) for v in m.bbox]
        if m.category_id is not None:
            rec["category_id"] = int(m.category_id)
        entries_meta.append(rec)
    path.write_bytes(bytes(payload))
    sidecar = {
        "version": FORMAT_VERSION,
        "kind": store.kind,
        "metadata": store.metadata,
        "entries": entries_meta,
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, sort_keys=True, separators=(",", ":")))


def read_store(path: str | Path) -> EmbeddingStore:
    """Read a CDFE file (and sidecar, when present) back into a store."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: shorter than header")
    magic, version, count, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + count * dim * 4
    if len(raw) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {len(raw)}")
    vectors = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=_HEADER.size)
    vectors = vectors.reshape(count, dim) if count else vectors.reshape(0, dim)

    kind = "support"
    metadata: dict = {}
    metas: list[EntryMeta] = []
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        try:
            doc = json.loads(sidecar.read_text())
        except json.JSONDecodeError as exc:
            raise MalformedJsonError(f"{sidecar}: invalid JSON") from exc
        kind = doc.get("kind", "support")
        metadata = doc.get("metadata", {})
        raw_entries = doc.get("entries", [])
        if len(raw_entries) != count:
            raise DimMismatchError(
                f"{sidecar}: {len(raw_entries)} sidecar entries for {count} vectors"
            )
        for rec in raw_entries:
            bbox = rec.get("bbox")
            metas.append(
                EntryMeta(
                    entry_id=int(rec["entry_id"]),
                    image_id=rec.get("image_id"),
                    bbox=tuple(bbox) if bbox is not None else None,
                    category_id=rec.get("category_id"),
                )
            )
    else:
        metas = [EntryMeta(entry_id=i) for i in range(count)]

    store = EmbeddingStore(dim=dim, kind=kind, metadata=metadata)
    for m, vec in zip(metas, vectors):
        store.add(m.entry_id, vec.copy(), m)
    return store


def synth_clusters(
    n_classes: int,
    per_class: int,
    dim: int,
    spread: float,
    seed: int,
    queries_per_class: int | None = None,
) -> tuple[EmbeddingStore, EmbeddingStore, dict[int, int]]:
    """Generate a desk-scale support/query pair with known class structure.

    Class means are mutually orthogonal unit vectors (requires dim >=
    n_classes). Instances are Gaussian perturbations of their mean with
    standard deviation ``spread``, renormalized to the unit sphere, so cosine
    geometry is exact and test thresholds are predictable. ``spread=0``
    reproduces the means bit-for-bit. Deterministic for a fixed seed.

    Returns (support store, query store, query labels) where labels maps a
    query entry id to its generating class (category ids are 1-based).
    """
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    if dim < n_classes:
        raise ValueError(f"dim {dim} too small for {n_classes} orthogonal class means")
    if queries_per_class is None:
        queries_per_class = per_class
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    means = basis.T[:n_classes]

    def draw(mean: np.ndarray) -> np.ndarray:
        if spread == 0:
            return mean.copy()
        return l2_normalize(mean + spread * rng.normal(size=dim))

    support = EmbeddingStore(dim=dim, kind="support")
    queries = EmbeddingStore(dim=dim, kind="proposal")
    labels: dict[int, int] = {}
    entry = 0
    for ci, mean in enumerate(means):
        cat = ci + 1
        for _ in range(per_class):
            support.add(entry, draw(mean), EntryMeta(entry_id=entry, category_id=cat))
            entry += 1
    qentry = 0
    for ci, mean in enumerate(means):
        cat = ci + 1
        for _ in range(queries_per_class):
            queries.add(qentry, draw(mean), EntryMeta(entry_id=qentry, category_id=cat))
            labels[qentry] = cat
            qentry += 1
    return support, queries, labels
