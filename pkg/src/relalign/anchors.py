"""Anchor selection strategies over an aligned (image_id, text_id) pool.

Three strategies: uniform random, diverse (k-means, one anchor per cluster),
and non-diverse (greedy crowding around the running mean). Every strategy is
fully determined by (pool order, seed, config); k-means is implemented here
rather than borrowed so the tie rules, empty-cluster policy, and restart
reduction stay pinned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embed_store import EmbeddingStore
from .errors import EmptyEmbeddings, PoolTooSmall
from .relrep import AnchorSet, row_norms

Pool = list[tuple[str, str]]

STRATEGIES = ("random", "diverse", "non_diverse")


@dataclass(frozen=True)
class SelectionConfig:
    strategy: str
    m: int
    seed: int
    cluster_modality: str = "image"
    kmeans_iters: int = 25
    kmeans_restarts: int = 4

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.m < 0:
            raise ValueError("m must be non-negative")
        if self.kmeans_iters < 1:
            raise ValueError("kmeans_iters must be >= 1")
        if self.kmeans_restarts < 1:
            raise ValueError("kmeans_restarts must be >= 1")


def _source_tag(cfg: SelectionConfig, extra: str = "") -> str:
    tag = f"{cfg.strategy}/m={cfg.m}/seed={cfg.seed}{extra}"
    if cfg.m == 0:
        tag += "/warning=empty-selection"
    return tag


def _check_pool(pool: Pool, cfg: SelectionConfig) -> None:
    if cfg.m > len(pool):
        raise PoolTooSmall(f"requested m={cfg.m} anchors from a pool of {len(pool)}")


def select_random(pool: Pool, cfg: SelectionConfig) -> AnchorSet:
    """Uniform sample without replacement, order permuted by the seed."""
    _check_pool(pool, cfg)
    rng = np.random.default_rng(cfg.seed & 0xFFFFFFFFFFFFFFFF)
    picked = rng.permutation(len(pool))[: cfg.m]
    return AnchorSet(tuple(pool[i] for i in picked), source=_source_tag(cfg))


def _pool_matrix(pool: Pool, embeddings: EmbeddingStore, cfg: SelectionConfig) -> np.ndarray:
    if embeddings.count == 0:
        raise EmptyEmbeddings(f"{embeddings.modality} store is empty")
    side = 0 if cfg.cluster_modality == "image" else 1
    rows = [embeddings.index_of(pair[side]) for pair in pool]
    return embeddings.matrix64()[np.asarray(rows, dtype=np.intp)]


def _pairwise_sq(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("ij,ij->i", x, x)[:, None]
        - 2.0 * (x @ centers.T)
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _plusplus_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Classic k-means++ seeding; returns the k chosen row indices."""
    n = x.shape[0]
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = rng.integers(n)
    d2 = np.einsum("ij,ij->i", x - x[chosen[0]], x - x[chosen[0]])
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a chosen center; take the lowest
            # index not used yet so seeding still terminates
            used = set(chosen[:j].tolist())
            nxt = next(i for i in range(n) if i not in used)
        chosen[j] = nxt
        diff = x - x[nxt]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return chosen


def _assign_with_repair(d2: np.ndarray, k: int) -> np.ndarray:
    """Nearest-centroid assignment; empty clusters steal the globally
    farthest point from its own centroid (donor must keep >= 1 member)."""
    n = d2.shape[0]
    assign = d2.argmin(axis=1)
    counts = np.bincount(assign, minlength=k)
    for c in np.flatnonzero(counts == 0):
        own = d2[np.arange(n), assign]
        eligible = counts[assign] >= 2
        if not eligible.any():
            continue
        own = np.where(eligible, own, -np.inf)
        far = int(own.argmax())
        counts[assign[far]] -= 1
        assign[far] = c
        counts[c] = 1
    return assign


def _lloyd(x: np.ndarray, k: int, iters: int, rng: np.random.Generator):
    centers = x[_plusplus_seed(x, k, rng)].copy()
    assign = None
    for _ in range(iters):
        d2 = _pairwise_sq(x, centers)
        new_assign = _assign_with_repair(d2, k)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, x)
        centers = sums / np.bincount(assign, minlength=k)[:, None]
    d2 = _pairwise_sq(x, centers)
    wcss = float(d2[np.arange(x.shape[0]), assign].sum())
    return assign, centers, wcss


def select_diverse(pool: Pool, embeddings: EmbeddingStore, cfg: SelectionConfig) -> AnchorSet:
    """k-means with k=m on unit-normalized embeddings; one anchor per cluster.

    Best of ``kmeans_restarts`` restarts by within-cluster sum of squares
    (ties to the lower restart index); each cluster contributes the member
    nearest its centroid (ties to the lower pool index).
    """
    _check_pool(pool, cfg)
    tag = _source_tag(cfg, extra=f"/cluster={cfg.cluster_modality}")
    if cfg.m == 0:
        return AnchorSet((), source=tag)
    x = _pool_matrix(pool, embeddings, cfg)
    x = x / row_norms(x)[:, None]
    seed = cfg.seed & 0xFFFFFFFFFFFFFFFF
    best = None
    for restart in range(cfg.kmeans_restarts):
        rng = np.random.default_rng([seed, restart])
        assign, centers, wcss = _lloyd(x, cfg.m, cfg.kmeans_iters, rng)
        if best is None or wcss < best[0]:
            best = (wcss, assign, centers)
    _, assign, centers = best
    picked = []
    for c in range(cfg.m):
        members = np.flatnonzero(assign == c)
        diff = x[members] - centers[c]
        picked.append(int(members[np.einsum("ij,ij->i", diff, diff).argmin()]))
    return AnchorSet(tuple(pool[i] for i in picked), source=tag)


def select_non_diverse(pool: Pool, embeddings: EmbeddingStore, cfg: SelectionConfig) -> AnchorSet:
    """Greedy crowding: start at the pool member nearest the global mean,
    then repeatedly take the member nearest the mean of those already picked.
    """
    _check_pool(pool, cfg)
    tag = _source_tag(cfg, extra=f"/cluster={cfg.cluster_modality}")
    if cfg.m == 0:
        return AnchorSet((), source=tag)
    x = _pool_matrix(pool, embeddings, cfg)
    n = x.shape[0]
    taken = np.zeros(n, dtype=bool)
    picked: list[int] = []
    running = np.zeros(x.shape[1])
    target = x.mean(axis=0)
    for _ in range(cfg.m):
        diff = x - target
        dist = np.einsum("ij,ij->i", diff, diff)
        dist[taken] = np.inf
        nxt = int(dist.argmin())
        picked.append(nxt)
        taken[nxt] = True
        running += x[nxt]
        target = running / len(picked)
    return AnchorSet(tuple(pool[i] for i in picked), source=tag)


def select_anchors(pool: Pool, embeddings: EmbeddingStore | None, cfg: SelectionConfig) -> AnchorSet:
    if cfg.strategy == "random":
        return select_random(pool, cfg)
    if embeddings is None:
        raise EmptyEmbeddings(f"strategy {cfg.strategy!r} needs a {cfg.cluster_modality} store")
    if cfg.strategy == "diverse":
        return select_diverse(pool, embeddings, cfg)
    return select_non_diverse(pool, embeddings, cfg)


# --- serialization ---

def write_anchors(path: str | Path, anchors: AnchorSet, cfg: SelectionConfig | None = None) -> None:
    header: dict = {"type": "header", "m": anchors.size, "source": anchors.source}
    if cfg is not None:
        header.update(
            strategy=cfg.strategy,
            seed=cfg.seed,
            cluster_modality=cfg.cluster_modality,
            kmeans_iters=cfg.kmeans_iters,
            kmeans_restarts=cfg.kmeans_restarts,
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for image_id, text_id in anchors.pairs:
            fh.write(
                json.dumps({"image_id": image_id, "text_id": text_id}, separators=(",", ":"))
                + "\n"
            )


def read_anchors(path: str | Path) -> AnchorSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("type") != "header":
        raise ValueError(f"{path}: missing anchor header record")
    pairs = tuple((str(o["image_id"]), str(o["text_id"])) for o in lines[1:])
    return AnchorSet(pairs, source=str(lines[0].get("source", "")))
