"""Read-only embedding matrices backed by a tiny binary format.

On disk a store is a header (``EMB1`` magic, little-endian uint32 count and
dim) followed by count x dim float32 values, row-major, plus a ``<path>.ids``
sidecar holding one UTF-8 record ID per line. Loading validates everything
downstream math relies on: finite values, no zero vectors, unique IDs.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    MalformedHeader,
    NonFiniteValue,
    UnknownRecord,
    ZeroVector,
)

MAGIC = b"EMB1"
HEADER_SIZE = 12
MODALITIES = ("image", "text")


class EmbeddingStore:
    """Immutable matrix of embedding vectors with stable string IDs.

    Vectors are kept as float32 (the on-disk width); use :meth:`matrix64`
    for the float64 view all similarity math runs on.
    """

    def __init__(self, modality: str, vectors: np.ndarray, ids: list[str]):
        if modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}, got {modality!r}")
        vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be a 2-D matrix, got shape {vectors.shape}")
        if vectors.shape[1] < 1:
            raise ValueError("embedding dim must be positive")
        if len(ids) != vectors.shape[0]:
            raise DimensionMismatch(
                f"{len(ids)} ids for {vectors.shape[0]} vectors",
                index=min(len(ids), vectors.shape[0]),
            )
        self.modality = modality
        self.vectors = vectors
        self.ids = list(ids)
        self._validate()
        self._index = {rid: i for i, rid in enumerate(self.ids)}
        self._f64: np.ndarray | None = None
        self.vectors.setflags(write=False)

    def _validate(self) -> None:
        finite = np.isfinite(self.vectors).all(axis=1)
        if not finite.all():
            i = int(np.flatnonzero(~finite)[0])
            raise NonFiniteValue(f"record {i} ({self.ids[i]!r}) has a non-finite value", index=i)
        nonzero = np.any(self.vectors != 0.0, axis=1)
        if not nonzero.all():
            i = int(np.flatnonzero(~nonzero)[0])
            raise ZeroVector(f"record {i} ({self.ids[i]!r}) is all-zero", index=i)
        seen: set[str] = set()
        for i, rid in enumerate(self.ids):
            if rid in seen:
                raise DuplicateId(f"record {i} reuses id {rid!r}", index=i)
            seen.add(rid)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.count

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._index

    def index_of(self, record_id: str) -> int:
        try:
            return self._index[record_id]
        except KeyError:
            raise UnknownRecord(f"no record with id {record_id!r}") from None

    def vector(self, record_id: str) -> np.ndarray:
        return self.vectors[self.index_of(record_id)]

    def matrix64(self) -> np.ndarray:
        """Float64 view of the whole matrix, cached after first use."""
        if self._f64 is None:
            self._f64 = self.vectors.astype(np.float64)
            self._f64.setflags(write=False)
        return self._f64


def write_store(path: str | Path, vectors: np.ndarray, ids: list[str]) -> None:
    """Write vectors (cast to float32) and the .ids sidecar."""
    path = Path(path)
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
    n, d = vectors.shape
    if len(ids) != n:
        raise DimensionMismatch(f"{len(ids)} ids for {n} vectors", index=min(len(ids), n))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(vectors.astype("<f4").tobytes())
    sidecar = path.with_name(path.name + ".ids")
    with open(sidecar, "w", encoding="utf-8") as fh:
        for rid in ids:
            fh.write(rid + "\n")


def load_store(path: str | Path, expected_modality: str) -> EmbeddingStore:
    """Load and validate a store; every rejection names the offending record."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER_SIZE or raw[:4] != MAGIC:
        raise MalformedHeader(f"{path}: missing or corrupt EMB1 header")
    n, d = struct.unpack("<II", raw[4:HEADER_SIZE])
    if d < 1:
        raise MalformedHeader(f"{path}: header dim must be positive, got {d}")
    payload = raw[HEADER_SIZE:]
    expected = n * d * 4
    if len(payload) != expected:
        complete = len(payload) // (d * 4)
        raise DimensionMismatch(
            f"{path}: payload holds {len(payload)} bytes, header promises {expected}",
            index=min(complete, n),
        )
    vectors = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    sidecar = path.with_name(path.name + ".ids")
    if n == 0:
        ids: list[str] = []
        if sidecar.exists() and sidecar.read_text(encoding="utf-8").splitlines():
            raise DimensionMismatch(f"{sidecar}: ids present for an empty store", index=0)
    else:
        ids = sidecar.read_text(encoding="utf-8").splitlines()
        if len(ids) != n:
            raise DimensionMismatch(
                f"{sidecar}: {len(ids)} ids for {n} records", index=min(len(ids), n)
            )
    return EmbeddingStore(expected_modality, vectors, ids)


def unit_normalize(store: EmbeddingStore) -> EmbeddingStore:
    """Return a copy with every vector scaled to unit L2 norm.

    After this, dot products equal cosines of the raw vectors. Idempotent
    up to float32 rounding.
    """
    mat = store.matrix64()
    norms = np.sqrt(np.einsum("ij,ij->i", mat, mat))
    return EmbeddingStore(store.modality, mat / norms[:, None], store.ids)
