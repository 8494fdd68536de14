"""Shared builders for the test suite."""

import numpy as np

from relalign.embed_store import EmbeddingStore
from relalign.relrep import AnchorSet, RelRep


def random_store(rng, n, dim, modality="image", prefix=None):
    prefix = prefix or modality[:3]
    vecs = rng.standard_normal((n, dim))
    ids = [f"{prefix}{i:05d}" for i in range(n)]
    return EmbeddingStore(modality, vecs.astype(np.float32), ids)


def paired_stores(rng, n, dim_image=8, dim_text=6):
    images = random_store(rng, n, dim_image, "image")
    texts = random_store(rng, n, dim_text, "text")
    pool = list(zip(images.ids, texts.ids))
    return images, texts, pool


def toy_anchors(images, texts, count):
    pairs = tuple(zip(images.ids[:count], texts.ids[:count]))
    return AnchorSet(pairs, source="test")


def random_relrep(rng, m, k, modality="text"):
    """Random sparse relrep with k kept slots; values in (-1, 1)."""
    idx = np.sort(rng.choice(m, size=k, replace=False))
    vals = rng.uniform(-1.0, 1.0, size=k)
    return RelRep(dim=m, indices=idx.astype(np.int64), values=vals, k=k, modality=modality)


def store_from(vectors, modality="image", prefix="r"):
    vecs = np.asarray(vectors, dtype=np.float32)
    ids = [f"{prefix}{i}" for i in range(vecs.shape[0])]
    return EmbeddingStore(modality, vecs, ids)
