"""Weakly-aligned pair scoring, candidate adjudication, and prefix math.

Generated caption candidates arrive as text-space embeddings from an
out-of-process generator; this module scores them in the shared relative
representation space and keeps whichever caption (retrieved or generated)
scores strictly higher. It also builds the anchor-conditioned prefix matrix
a downstream generator consumes, and exports per-pair training weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .embed_store import EmbeddingStore, load_store, write_store
from .errors import CandidateImageMismatch, ShapeMismatch
from .relrep import AnchorSet, RelRep, anchor_matrix, relrep_cosine, relrep_from_vector, row_norms


@dataclass(frozen=True)
class WeaklyAlignedPair:
    image_id: str
    partner_id: str
    score: float
    provenance: str  # "retrieved" | "generated"
    k_used: int
    m_used: int


@dataclass(frozen=True)
class CandidateCaption:
    candidate_id: str
    image_id: str
    embedding: np.ndarray
    rank_in_sample: int


@dataclass(frozen=True)
class PrefixWeights:
    w_r: np.ndarray  # (1, d)
    w_e: np.ndarray  # (d_T, d)

    def __post_init__(self):
        if self.w_r.ndim != 2 or self.w_r.shape[0] != 1:
            raise ShapeMismatch(f"w_r must be 1 x d, got {self.w_r.shape}")
        if self.w_e.ndim != 2 or self.w_e.shape[1] != self.w_r.shape[1]:
            raise ShapeMismatch(f"w_e must be d_T x {self.w_r.shape[1]}, got {self.w_e.shape}")
        if not (np.isfinite(self.w_r).all() and np.isfinite(self.w_e).all()):
            raise ShapeMismatch("projection weights must be finite")

    @property
    def d(self) -> int:
        return self.w_r.shape[1]

    @property
    def d_text(self) -> int:
        return self.w_e.shape[0]


@dataclass(frozen=True)
class PrefixMatrix:
    rows: np.ndarray            # (K, d)
    anchor_indices: np.ndarray  # K anchors, descending similarity


def quality_score(x_rel: RelRep, y_rel: RelRep) -> float:
    """Alignment quality of a pair: cosine of the two relreps."""
    return relrep_cosine(x_rel, y_rel)


def build_prefix(
    rel: RelRep, anchor_text_embeddings: np.ndarray, weights: PrefixWeights
) -> PrefixMatrix:
    """Rows of r^T W_r + stack(E_T) W_e restricted to the kept anchors.

    Rows are ordered by descending similarity (ties to the lower anchor
    index) so downstream consumers see the strongest anchor first.
    """
    e = np.asarray(anchor_text_embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] != rel.dim:
        raise ShapeMismatch(
            f"need {rel.dim} anchor text embeddings, got shape {e.shape}"
        )
    if e.shape[1] != weights.d_text:
        raise ShapeMismatch(f"anchor embedding width {e.shape[1]} vs w_e rows {weights.d_text}")
    order = np.lexsort((rel.indices, -rel.values))
    idx = rel.indices[order]
    vals = rel.values[order]
    rows = vals[:, None] @ weights.w_r + e[idx] @ weights.w_e
    return PrefixMatrix(rows=rows, anchor_indices=idx)


def candidate_relrep(
    candidate: CandidateCaption,
    anchor_text_mat: np.ndarray,
    anchor_norms: np.ndarray,
    k: int,
) -> RelRep:
    emb = np.asarray(candidate.embedding, dtype=np.float64)
    if emb.ndim != 1 or emb.shape[0] != anchor_text_mat.shape[1]:
        raise ShapeMismatch(
            f"candidate {candidate.candidate_id!r} embedding shape {emb.shape} "
            f"vs text dim {anchor_text_mat.shape[1]}"
        )
    return relrep_from_vector(emb, anchor_text_mat, anchor_norms, k, "text")


def adjudicate(
    retrieved: WeaklyAlignedPair,
    candidates: Sequence[CandidateCaption],
    image_rel: RelRep,
    texts: EmbeddingStore,
    anchors: AnchorSet,
) -> WeaklyAlignedPair:
    """Keep the retrieved caption unless a candidate scores strictly higher.

    Candidate relreps are computed with the same anchors and the pair's
    recorded k. Ties favor the retrieved pair; among tied candidates the
    lower rank_in_sample wins. The result never scores below the input.
    """
    if not candidates:
        return retrieved
    for cand in candidates:
        if cand.image_id != retrieved.image_id:
            raise CandidateImageMismatch(
                f"candidate {cand.candidate_id!r} targets {cand.image_id!r}, "
                f"pair is for {retrieved.image_id!r}"
            )
    if image_rel.dim != anchors.size:
        raise ShapeMismatch(f"image relrep dim {image_rel.dim} vs {anchors.size} anchors")
    mat = anchor_matrix(anchors, texts, "text")
    norms = row_norms(mat)
    best_id, best_score, best_prov = retrieved.partner_id, retrieved.score, retrieved.provenance
    for cand in sorted(candidates, key=lambda c: c.rank_in_sample):
        rel = candidate_relrep(cand, mat, norms, retrieved.k_used)
        score = quality_score(image_rel, rel)
        if score > best_score:
            best_id, best_score, best_prov = cand.candidate_id, score, "generated"
    if best_prov == retrieved.provenance and best_id == retrieved.partner_id:
        return retrieved
    return WeaklyAlignedPair(
        image_id=retrieved.image_id,
        partner_id=best_id,
        score=best_score,
        provenance=best_prov,
        k_used=retrieved.k_used,
        m_used=retrieved.m_used,
    )


# --- manifests ---

def export_weights(pairs: Sequence[WeaklyAlignedPair]) -> list[dict]:
    """Per-pair loss weights for a downstream trainer; weight == score,
    serialized to 12 significant digits."""
    return [
        {
            "image_id": p.image_id,
            "partner_id": p.partner_id,
            "weight": float(f"{p.score:.12g}"),
            "provenance": p.provenance,
        }
        for p in pairs
    ]


def write_weights(path: str | Path, pairs: Sequence[WeaklyAlignedPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in export_weights(pairs):
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def write_pairs(path: str | Path, pairs: Sequence[WeaklyAlignedPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            obj = {
                "image_id": p.image_id,
                "partner_id": p.partner_id,
                "score": p.score,
                "provenance": p.provenance,
                "k_used": p.k_used,
                "m_used": p.m_used,
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_pairs(path: str | Path) -> list[WeaklyAlignedPair]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            o = json.loads(line)
            out.append(
                WeaklyAlignedPair(
                    image_id=o["image_id"],
                    partner_id=o["partner_id"],
                    score=float(o["score"]),
                    provenance=o["provenance"],
                    k_used=int(o["k_used"]),
                    m_used=int(o["m_used"]),
                )
            )
    return out


# --- candidate registry: JSONL plus a parallel EMB1 file in line order ---

def write_candidates(
    registry_path: str | Path, emb_path: str | Path, candidates: Sequence[CandidateCaption]
) -> None:
    with open(registry_path, "w", encoding="utf-8") as fh:
        for c in candidates:
            obj = {"candidate_id": c.candidate_id, "image_id": c.image_id, "rank": c.rank_in_sample}
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
    if candidates:
        mat = np.stack([np.asarray(c.embedding, dtype=np.float32) for c in candidates])
    else:
        mat = np.empty((0, 1), dtype=np.float32)
    write_store(emb_path, mat, [c.candidate_id for c in candidates])


def read_candidates(registry_path: str | Path, emb_path: str | Path) -> list[CandidateCaption]:
    with open(registry_path, "r", encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    store = load_store(emb_path, "text")
    if store.count != len(rows):
        raise ShapeMismatch(
            f"candidate registry has {len(rows)} entries, embedding file has {store.count}"
        )
    out = []
    for i, row in enumerate(rows):
        cid = str(row["candidate_id"])
        if store.ids[i] != cid:
            raise ShapeMismatch(
                f"registry line {i} is {cid!r} but embedding row {i} is {store.ids[i]!r}"
            )
        out.append(
            CandidateCaption(
                candidate_id=cid,
                image_id=str(row["image_id"]),
                embedding=store.vectors[i].astype(np.float64),
                rank_in_sample=int(row["rank"]),
            )
        )
    return out


# --- projection weights ---

def random_weights(d_text: int, d: int, seed: int) -> PrefixWeights:
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    return PrefixWeights(
        w_r=rng.standard_normal((1, d)),
        w_e=rng.standard_normal((d_text, d)) / np.sqrt(d_text),
    )


def save_weights_file(path: str | Path, weights: PrefixWeights) -> None:
    np.savez(path, w_r=weights.w_r, w_e=weights.w_e)


def load_weights_file(path: str | Path) -> PrefixWeights:
    with np.load(path) as data:
        return PrefixWeights(w_r=data["w_r"], w_e=data["w_e"])
