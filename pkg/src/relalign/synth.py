"""Synthetic paired-embedding benchmark data.

Each record pair shares a latent vector; the image and text embeddings are
independent linear maps of it plus optional noise. With orthonormal maps and
zero noise, cosines (and therefore relative representations) are identical
across modalities, which makes retrieval analytically perfect — the regime
the acceptance suite pins down before noise is dialed in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embed_store import EmbeddingStore, write_store
from .errors import SpecInvalid

MAP_KINDS = ("orthonormal", "random_gaussian")

Pairing = list[tuple[str, str]]


@dataclass(frozen=True)
class SynthSpec:
    n_pairs: int
    latent_dim: int
    image_dim: int
    text_dim: int
    noise_sigma: float = 0.0
    map_kind: str = "orthonormal"
    seed: int = 0

    def __post_init__(self):
        if self.n_pairs < 0:
            raise SpecInvalid("n_pairs must be non-negative")
        if min(self.latent_dim, self.image_dim, self.text_dim) < 1:
            raise SpecInvalid("latent_dim, image_dim and text_dim must be positive")
        if self.noise_sigma < 0:
            raise SpecInvalid("noise_sigma must be >= 0")
        if self.map_kind not in MAP_KINDS:
            raise SpecInvalid(f"map_kind must be one of {MAP_KINDS}, got {self.map_kind!r}")
        if self.map_kind == "orthonormal" and self.latent_dim > min(self.image_dim, self.text_dim):
            raise SpecInvalid(
                f"orthonormal maps need latent_dim <= min(image_dim, text_dim); "
                f"got {self.latent_dim} > {min(self.image_dim, self.text_dim)}"
            )


def _modality_map(rng: np.random.Generator, out_dim: int, latent_dim: int, kind: str) -> np.ndarray:
    g = rng.standard_normal((out_dim, latent_dim))
    if kind == "orthonormal":
        q, _ = np.linalg.qr(g)
        return q[:, :latent_dim]
    return g / np.sqrt(latent_dim)


def _project(rng: np.random.Generator, z: np.ndarray, mapping: np.ndarray, sigma: float) -> np.ndarray:
    clean = z @ mapping.T
    if sigma == 0.0:
        return clean
    scale = sigma * np.sqrt(np.einsum("ij,ij->i", clean, clean))
    return clean + scale[:, None] * rng.standard_normal(clean.shape)


def synth_generate(spec: SynthSpec) -> tuple[EmbeddingStore, EmbeddingStore, Pairing]:
    """Sample latents once, map to both modalities, return stores + pairing.

    noise_sigma is relative: every noise component has standard deviation
    noise_sigma times the record's clean embedding norm, so even modest
    sigmas bend embeddings enough to make retrieval genuinely contested.
    """
    rng = np.random.default_rng(spec.seed & 0xFFFFFFFFFFFFFFFF)
    z = rng.standard_normal((spec.n_pairs, spec.latent_dim))
    a = _modality_map(rng, spec.image_dim, spec.latent_dim, spec.map_kind)
    b = _modality_map(rng, spec.text_dim, spec.latent_dim, spec.map_kind)
    image_vecs = _project(rng, z, a, spec.noise_sigma)
    text_vecs = _project(rng, z, b, spec.noise_sigma)
    image_ids = [f"img{i:06d}" for i in range(spec.n_pairs)]
    text_ids = [f"txt{i:06d}" for i in range(spec.n_pairs)]
    images = EmbeddingStore("image", image_vecs.astype(np.float32), image_ids)
    texts = EmbeddingStore("text", text_vecs.astype(np.float32), text_ids)
    pairing = list(zip(image_ids, text_ids))
    return images, texts, pairing


def write_pairing(path: str | Path, pairing: Pairing) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, text_id in pairing:
            fh.write(
                json.dumps({"image_id": image_id, "text_id": text_id}, separators=(",", ":"))
                + "\n"
            )


def read_pairing(path: str | Path) -> Pairing:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                o = json.loads(line)
                out.append((str(o["image_id"]), str(o["text_id"])))
    return out


def write_synth(out_dir: str | Path, spec: SynthSpec) -> dict:
    """Generate and persist stores + ground-truth pairing; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images, texts, pairing = synth_generate(spec)
    paths = {
        "images": str(out / "images.emb"),
        "texts": str(out / "texts.emb"),
        "pairing": str(out / "pairing.jsonl"),
    }
    write_store(paths["images"], images.vectors, images.ids)
    write_store(paths["texts"], texts.vectors, texts.ids)
    write_pairing(paths["pairing"], pairing)
    return paths
