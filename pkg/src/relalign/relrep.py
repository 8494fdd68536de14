"""Relative representations: cosine similarities against a paired anchor set.

A record's relative representation is the vector of cosines between its
embedding and the M anchor embeddings of its own modality, truncated to the
k algebraically largest entries. Because cosine is what both modalities
measure, an image and its matching text end up with nearly identical
relative representations even though their encoders never met.

All math runs in float64. The truncation tie rule (value descending, anchor
index ascending) is defined once here, in :func:`top_k_desc`, and shared by
retrieval so both ranking paths agree bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embed_store import EmbeddingStore
from .errors import AnchorStoreMismatch, DimMismatch, DuplicateId, RelalignError, ZeroRelRep


def l2(values: np.ndarray) -> float:
    """L2 norm via sqrt(dot). The one norm every cosine path must use."""
    return math.sqrt(float(np.dot(values, values)))


def row_norms(mat: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", mat, mat))


def top_k_desc(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values, ranked by (value desc, index asc).

    This is the global tie rule for both sparsification and retrieval.
    """
    n = len(values)
    if k >= n:
        return np.lexsort((np.arange(n), -values))
    part = values[np.argpartition(-values, k - 1)[:k]]
    kth = part.min()
    cand = np.flatnonzero(values >= kth)
    order = cand[np.lexsort((cand, -values[cand]))]
    return order[:k]


@dataclass(frozen=True)
class AnchorSet:
    """Ordered list of paired (image_id, text_id) anchors with provenance."""

    pairs: tuple[tuple[str, str], ...]
    source: str = ""

    def __post_init__(self):
        images = [p[0] for p in self.pairs]
        texts = [p[1] for p in self.pairs]
        for name, ids in (("image", images), ("text", texts)):
            seen: set[str] = set()
            for i, rid in enumerate(ids):
                if rid in seen:
                    raise DuplicateId(f"anchor {i} reuses {name} id {rid!r}", index=i)
                seen.add(rid)

    @property
    def size(self) -> int:
        return len(self.pairs)

    def image_ids(self) -> list[str]:
        return [p[0] for p in self.pairs]

    def text_ids(self) -> list[str]:
        return [p[1] for p in self.pairs]

    def validate_against(self, images: EmbeddingStore, texts: EmbeddingStore) -> None:
        anchor_matrix(self, images, "image")
        anchor_matrix(self, texts, "text")


@dataclass(frozen=True, eq=False)
class RelRep:
    """Sparse M-dimensional similarity vector.

    ``indices`` are strictly increasing anchor positions of the kept slots;
    a kept slot may hold an exact 0.0 (it won the top-k cut, value and all).
    """

    dim: int
    indices: np.ndarray  # int64, strictly increasing
    values: np.ndarray   # float64, parallel to indices
    k: int
    modality: str
    _norm: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "_norm", l2(self.values))

    @property
    def nnz(self) -> int:
        return len(self.indices)

    @property
    def norm(self) -> float:
        return self._norm

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.indices] = self.values
        return dense


def _clamp(value: float) -> float:
    return max(-1.0, min(1.0, value))


def make_relrep(dense_sims: np.ndarray, k: int, modality: str) -> RelRep:
    """Truncate a dense similarity vector to its top-k slots."""
    m = len(dense_sims)
    if not 1 <= k <= m:
        raise ValueError(f"k must be in [1, {m}], got {k}")
    kept = top_k_desc(dense_sims, k)
    idx = np.sort(kept)
    return RelRep(
        dim=m,
        indices=idx.astype(np.int64),
        values=dense_sims[idx],
        k=k,
        modality=modality,
    )


def anchor_matrix(anchors: AnchorSet, store: EmbeddingStore, side: str) -> np.ndarray:
    """Gather the anchors' embeddings from `store`, float64, in anchor order."""
    ids = anchors.image_ids() if side == "image" else anchors.text_ids()
    rows = []
    for i, rid in enumerate(ids):
        if rid not in store:
            raise AnchorStoreMismatch(
                f"anchor {i} {side} id {rid!r} not in the supplied {store.modality} store",
                index=i,
            )
        rows.append(store.index_of(rid))
    return store.matrix64()[np.asarray(rows, dtype=np.intp)]


def relrep_from_vector(
    vec: np.ndarray,
    anchor_mat: np.ndarray,
    anchor_norms: np.ndarray,
    k: int,
    modality: str,
) -> RelRep:
    """Dense cosines against every anchor, then top-k truncation."""
    v = np.asarray(vec, dtype=np.float64)
    sims = (anchor_mat @ v) / (anchor_norms * l2(v))
    np.clip(sims, -1.0, 1.0, out=sims)
    return make_relrep(sims, k, modality)


def relrep_image(x_id: str, images: EmbeddingStore, anchors: AnchorSet, k: int) -> RelRep:
    mat = anchor_matrix(anchors, images, "image")
    vec = images.matrix64()[images.index_of(x_id)]
    return relrep_from_vector(vec, mat, row_norms(mat), k, "image")


def relrep_text(y_id: str, texts: EmbeddingStore, anchors: AnchorSet, k: int) -> RelRep:
    mat = anchor_matrix(anchors, texts, "text")
    vec = texts.matrix64()[texts.index_of(y_id)]
    return relrep_from_vector(vec, mat, row_norms(mat), k, "text")


def relrep_batch(
    ids: Sequence[str],
    store: EmbeddingStore,
    anchors: AnchorSet,
    k: int,
) -> list[RelRep]:
    """Per-record relreps for `ids`, elementwise identical to single calls.

    The first failing record aborts the batch with its position attached.
    """
    if not ids:
        return []
    mat = anchor_matrix(anchors, store, store.modality)
    norms = row_norms(mat)
    full = store.matrix64()
    out = []
    for i, rid in enumerate(ids):
        try:
            row = full[store.index_of(rid)]
        except RelalignError as exc:
            exc.index = i
            raise
        out.append(relrep_from_vector(row, mat, norms, k, store.modality))
    return out


def relrep_cosine(a: RelRep, b: RelRep) -> float:
    """Cosine of two sparse relreps over the intersection of their supports."""
    if a.dim != b.dim:
        raise DimMismatch(f"relrep dims differ: {a.dim} vs {b.dim}")
    if a.norm == 0.0:
        raise ZeroRelRep("left relrep has zero norm")
    if b.norm == 0.0:
        raise ZeroRelRep("right relrep has zero norm")
    _, ia, ib = np.intersect1d(a.indices, b.indices, assume_unique=True, return_indices=True)
    if len(ia) == 0:
        return 0.0
    dot = float(np.dot(a.values[ia], b.values[ib]))
    return _clamp(dot / (a.norm * b.norm))


# --- serialization ---

def relrep_to_obj(record_id: str, rel: RelRep) -> dict:
    return {
        "id": record_id,
        "modality": rel.modality,
        "m": rel.dim,
        "k": rel.k,
        "idx": [int(i) for i in rel.indices],
        "val": [float(v) for v in rel.values],
    }


def relrep_from_obj(obj: dict) -> tuple[str, RelRep]:
    rel = RelRep(
        dim=int(obj["m"]),
        indices=np.asarray(obj["idx"], dtype=np.int64),
        values=np.asarray(obj["val"], dtype=np.float64),
        k=int(obj["k"]),
        modality=str(obj["modality"]),
    )
    return str(obj["id"]), rel


def write_relreps(path: str | Path, ids: Sequence[str], rels: Iterable[RelRep]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rid, rel in zip(ids, rels):
            fh.write(json.dumps(relrep_to_obj(rid, rel), separators=(",", ":")) + "\n")


def read_relreps(path: str | Path) -> tuple[list[str], list[RelRep]]:
    ids, rels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rid, rel = relrep_from_obj(json.loads(line))
            ids.append(rid)
            rels.append(rel)
    return ids, rels
