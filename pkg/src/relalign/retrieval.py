"""Cross-modal retrieval over sparse relative representations.

Two paths compute the same ranking: a brute-force scan (the oracle) and an
inverted index over anchor positions. Both paths score with the relrep
cosine kernel and rank with the shared tie rule (score descending, text
ordinal ascending), so their outputs are interchangeable, exactly.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimMismatch, ZeroRelRep
from .relrep import RelRep, relrep_cosine, top_k_desc


@dataclass(frozen=True)
class RetrievalResult:
    image_id: str
    ranked: list[tuple[str, float]]  # (text_id, score), score non-increasing
    depth: int


class SparseIndex:
    """Inverted index: one posting list per anchor position.

    Postings are stored as a flat (ordinal, value) arena sliced by
    ``indptr``; within a posting, ordinals ascend. Memory is proportional
    to the total number of kept slots.
    """

    def __init__(self, m: int, text_ids: Sequence[str], rels: Sequence[RelRep]):
        self.m = m
        self.text_ids = list(text_ids)
        n = len(rels)
        norms = np.empty(n)
        for ordinal, rel in enumerate(rels):
            if rel.dim != m:
                raise DimMismatch(f"text {ordinal} has dim {rel.dim}, index has {m}")
            if rel.norm == 0.0:
                raise ZeroRelRep(f"text {ordinal} has a zero relrep", index=ordinal)
            norms[ordinal] = rel.norm
        self.norms = norms
        anchor_ids = np.concatenate([r.indices for r in rels]) if rels else np.empty(0, np.int64)
        ordinals = (
            np.concatenate([np.full(r.nnz, i, dtype=np.int64) for i, r in enumerate(rels)])
            if rels
            else np.empty(0, np.int64)
        )
        values = np.concatenate([r.values for r in rels]) if rels else np.empty(0)
        order = np.lexsort((ordinals, anchor_ids))
        self.ordinals = ordinals[order]
        self.values = values[order]
        counts = np.bincount(anchor_ids, minlength=m)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    @property
    def size(self) -> int:
        return len(self.text_ids)

    def posting(self, anchor: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.indptr[anchor], self.indptr[anchor + 1]
        return self.ordinals[s:e], self.values[s:e]


def build_index(text_relreps: Sequence[RelRep], text_ids: Sequence[str] | None = None) -> SparseIndex:
    if text_ids is None:
        text_ids = [str(i) for i in range(len(text_relreps))]
    if text_relreps:
        m = text_relreps[0].dim
    else:
        m = 0
    return SparseIndex(m, text_ids, text_relreps)


def _result(image_id, scores, order, text_ids, depth) -> RetrievalResult:
    ranked = [(text_ids[i], float(scores[i])) for i in order]
    return RetrievalResult(image_id=image_id, ranked=ranked, depth=depth)


def retrieve_bruteforce(
    query: RelRep,
    text_relreps: Sequence[RelRep],
    depth: int,
    query_id: str = "",
    text_ids: Sequence[str] | None = None,
) -> RetrievalResult:
    """Exact top-`depth` by relrep cosine; the reference the index must equal."""
    if depth < 1:
        raise ValueError("depth must be positive")
    if query.norm == 0.0:
        raise ZeroRelRep("query relrep has zero norm")
    if text_ids is None:
        text_ids = [str(i) for i in range(len(text_relreps))]
    scores = np.empty(len(text_relreps))
    for i, rel in enumerate(text_relreps):
        scores[i] = relrep_cosine(query, rel)
    order = top_k_desc(scores, min(depth, len(text_relreps)))
    return _result(query_id, scores, order, text_ids, depth)


def retrieve_indexed(
    query: RelRep, index: SparseIndex, depth: int, query_id: str = ""
) -> RetrievalResult:
    """Same ranking as brute force, accumulating only over the postings of
    the query's kept anchors."""
    if depth < 1:
        raise ValueError("depth must be positive")
    if query.dim != index.m:
        raise DimMismatch(f"query dim {query.dim} vs index dim {index.m}")
    if query.norm == 0.0:
        raise ZeroRelRep("query relrep has zero norm")
    scores = np.zeros(index.size)
    for anchor, qv in zip(query.indices, query.values):
        s, e = index.indptr[anchor], index.indptr[anchor + 1]
        scores[index.ordinals[s:e]] += qv * index.values[s:e]
    scores /= query.norm * index.norms
    np.clip(scores, -1.0, 1.0, out=scores)
    order = top_k_desc(scores, min(depth, index.size))
    return _result(query_id, scores, order, index.text_ids, depth)


def retrieve_all(
    queries: Sequence[RelRep],
    index: SparseIndex,
    query_ids: Sequence[str] | None = None,
    depth: int = 1,
    workers: int = 1,
) -> list[RetrievalResult]:
    """Top-`depth` text for each query; output order follows input order and
    is independent of the worker count."""
    if query_ids is None:
        query_ids = [str(i) for i in range(len(queries))]
    if len(query_ids) != len(queries):
        raise ValueError("query_ids and queries differ in length")
    jobs = list(zip(queries, query_ids))
    if workers <= 1 or len(jobs) < 2:
        return [retrieve_indexed(q, index, depth, query_id=qid) for q, qid in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: retrieve_indexed(job[0], index, depth, query_id=job[1]), jobs))


# --- serialization ---

def result_to_obj(result: RetrievalResult) -> dict:
    return {
        "image_id": result.image_id,
        "matches": [{"text_id": tid, "score": score} for tid, score in result.ranked],
    }


def write_results(path: str | Path, results: Sequence[RetrievalResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(json.dumps(result_to_obj(res), separators=(",", ":")) + "\n")


def read_results(path: str | Path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]
