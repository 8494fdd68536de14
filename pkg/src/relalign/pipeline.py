"""End-to-end orchestration: select anchors, compute relreps, retrieve,
adjudicate, and export manifests; plus the anchor-strategy benchmark sweep.

Every run is a pure function of its config: identical config and inputs
produce byte-identical manifests. Wall-clock timings live only in the run
report, never in a manifest.
"""

from __future__ import annotations

import json
import time
from collections import defaultdict
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .anchors import SelectionConfig, select_anchors, write_anchors
from .captions import (
    WeaklyAlignedPair,
    adjudicate,
    read_candidates,
    write_pairs,
    write_weights,
)
from .embed_store import EmbeddingStore, load_store, unit_normalize
from .errors import SpecInvalid, StageError
from .relrep import AnchorSet, RelRep, relrep_batch
from .retrieval import SparseIndex, build_index, retrieve_all, write_results
from .synth import SynthSpec, read_pairing, synth_generate

DEFAULT_K = 50
DEFAULT_M = 8192


@dataclass(frozen=True)
class PipelineConfig:
    images: str
    texts: str
    aligned: str
    out: str
    strategy: str = "random"
    m: int = DEFAULT_M
    k: int | None = DEFAULT_K          # None = dense (k = m)
    seed: int = 0
    normalize: bool = True
    cluster_modality: str = "image"
    kmeans_iters: int = 25
    kmeans_restarts: int = 4
    candidates_registry: str | None = None
    candidates_embeddings: str | None = None
    ground_truth: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.k is not None and self.k > self.m:
            raise SpecInvalid(f"k={self.k} exceeds anchor count m={self.m}")
        if self.workers < 1:
            raise SpecInvalid("workers must be >= 1")

    def effective_k(self) -> int:
        return self.m if self.k is None else self.k

    def selection(self) -> SelectionConfig:
        return SelectionConfig(
            strategy=self.strategy,
            m=self.m,
            seed=self.seed,
            cluster_modality=self.cluster_modality,
            kmeans_iters=self.kmeans_iters,
            kmeans_restarts=self.kmeans_restarts,
        )

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise SpecInvalid(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


class _StageClock:
    def __init__(self):
        self.timings: dict[str, float] = {}
        self._t0 = time.perf_counter()

    def run(self, name: str, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start
        return result

    def total(self) -> float:
        return time.perf_counter() - self._t0


def _score_summary(scores: Sequence[float]) -> dict:
    if not scores:
        return {"min": None, "median": None, "mean": None, "max": None}
    arr = np.asarray(scores)
    return {
        "min": float(arr.min()),
        "median": float(np.median(arr)),
        "mean": float(arr.mean()),
        "max": float(arr.max()),
    }


def _load_inputs(cfg: PipelineConfig):
    for label, path in (("images", cfg.images), ("texts", cfg.texts), ("aligned", cfg.aligned)):
        if not Path(path).exists():
            raise FileNotFoundError(f"{label} path does not exist: {path}")
    images = load_store(cfg.images, "image")
    texts = load_store(cfg.texts, "text")
    if cfg.normalize:
        images = unit_normalize(images)
        texts = unit_normalize(texts)
    pool = read_pairing(cfg.aligned)
    return images, texts, pool


def _compute_relreps(store: EmbeddingStore, anchors: AnchorSet, k: int) -> list[RelRep]:
    return relrep_batch(store.ids, store, anchors, k)


def _retrieved_pairs(results, k: int, m: int) -> list[WeaklyAlignedPair]:
    pairs = []
    for res in results:
        text_id, score = res.ranked[0]
        pairs.append(
            WeaklyAlignedPair(
                image_id=res.image_id,
                partner_id=text_id,
                score=score,
                provenance="retrieved",
                k_used=k,
                m_used=m,
            )
        )
    return pairs


def _adjudicate_all(pairs, image_rels, texts, anchors, cfg) -> list[WeaklyAlignedPair]:
    if not cfg.candidates_registry:
        return list(pairs)
    candidates = read_candidates(cfg.candidates_registry, cfg.candidates_embeddings)
    by_image: dict[str, list] = defaultdict(list)
    for cand in candidates:
        by_image[cand.image_id].append(cand)
    out = []
    for pair, rel in zip(pairs, image_rels):
        out.append(adjudicate(pair, by_image.get(pair.image_id, []), rel, texts, anchors))
    return out


def run_pipeline(cfg: PipelineConfig) -> dict:
    """select -> relrep -> retrieve(top-1) -> adjudicate -> manifests.

    Returns the run report (also written to <out>/report.json). Stage
    failures surface as StageError with the stage name attached.
    """
    clock = _StageClock()
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    images, texts, pool = clock.run("load", _load_inputs, cfg)
    k = cfg.effective_k()

    def _select():
        emb = images if cfg.cluster_modality == "image" else texts
        anchors = select_anchors(pool, emb, cfg.selection())
        write_anchors(out_dir / "anchors.jsonl", anchors, cfg.selection())
        return anchors

    anchors = clock.run("anchors", _select)
    text_rels = clock.run("relrep_texts", _compute_relreps, texts, anchors, k)
    image_rels = clock.run("relrep_images", _compute_relreps, images, anchors, k)
    index: SparseIndex = clock.run("index", build_index, text_rels, texts.ids)
    results = clock.run(
        "retrieve", retrieve_all, image_rels, index, images.ids, 1, cfg.workers
    )
    def _score_and_adjudicate():
        retrieved = _retrieved_pairs(results, k, anchors.size)
        return _adjudicate_all(retrieved, image_rels, texts, anchors, cfg)

    pairs = clock.run("adjudicate", _score_and_adjudicate)

    def _export():
        write_results(out_dir / "retrieval.jsonl", results)
        write_pairs(out_dir / "pairs.jsonl", pairs)
        write_weights(out_dir / "weights.jsonl", pairs)

    clock.run("export", _export)

    provenance: dict[str, int] = {"retrieved": 0, "generated": 0}
    for p in pairs:
        provenance[p.provenance] = provenance.get(p.provenance, 0) + 1
    report = {
        "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
        "counts": {"images": images.count, "texts": texts.count, "anchors": anchors.size},
        "scores": _score_summary([p.score for p in pairs]),
        "provenance": provenance,
    }
    if cfg.ground_truth:
        truth = dict(read_pairing(cfg.ground_truth))
        hits = sum(1 for p in pairs if truth.get(p.image_id) == p.partner_id)
        report["recall_at_1"] = hits / len(pairs) if pairs else None
        report["recall_hits"] = hits
    report["timings"] = dict(clock.timings)
    report["total_seconds"] = clock.total()
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report


# --- anchor-strategy benchmark ---

@dataclass(frozen=True)
class BenchConfig:
    spec: SynthSpec
    m_values: tuple[int, ...]
    strategies: tuple[str, ...] = ("random",)
    seeds: tuple[int, ...] = (0,)
    k: int = DEFAULT_K
    cluster_modality: str = "image"
    kmeans_iters: int = 25
    kmeans_restarts: int = 4

    def __post_init__(self):
        if not self.m_values:
            raise SpecInvalid("m_values must be non-empty")
        if any(m > self.spec.n_pairs for m in self.m_values):
            raise SpecInvalid("every m must be <= n_pairs")
        if any(m < 1 for m in self.m_values):
            raise SpecInvalid("every m must be >= 1")


def _bench_cell(images, texts, pool, truth, strategy, m, seed, bench: BenchConfig) -> dict:
    cfg = SelectionConfig(
        strategy=strategy,
        m=m,
        seed=seed,
        cluster_modality=bench.cluster_modality,
        kmeans_iters=bench.kmeans_iters,
        kmeans_restarts=bench.kmeans_restarts,
    )
    emb = images if bench.cluster_modality == "image" else texts
    anchors = select_anchors(pool, emb, cfg)
    k = min(bench.k, m)
    text_rels = relrep_batch(texts.ids, texts, anchors, k)
    image_rels = relrep_batch(images.ids, images, anchors, k)
    index = build_index(text_rels, texts.ids)
    results = retrieve_all(image_rels, index, images.ids, depth=1)
    hits = sum(1 for r in results if truth.get(r.image_id) == r.ranked[0][0])
    mean_score = float(np.mean([r.ranked[0][1] for r in results])) if results else None
    return {
        "strategy": strategy,
        "m": m,
        "seed": seed,
        "k": k,
        "recall_at_1": hits / len(results) if results else None,
        "mean_quality": mean_score,
    }


def bench_anchors(bench: BenchConfig) -> dict:
    """Sweep (strategy, m, seed) cells on one synthetic dataset.

    Emits per-cell rows plus per-(strategy, m) means — the plot-ready series
    behind the anchor-count and anchor-diversity trends.
    """
    images, texts, pairing = synth_generate(bench.spec)
    truth = dict(pairing)
    images_n = unit_normalize(images)
    texts_n = unit_normalize(texts)
    rows = []
    for strategy in bench.strategies:
        for m in bench.m_values:
            for seed in bench.seeds:
                rows.append(
                    _bench_cell(images_n, texts_n, pairing, truth, strategy, m, seed, bench)
                )
    rows.sort(key=lambda r: (r["strategy"], r["m"], r["seed"]))
    series: dict[str, list[dict]] = {}
    for strategy in bench.strategies:
        points = []
        for m in sorted(set(bench.m_values)):
            cell = [r for r in rows if r["strategy"] == strategy and r["m"] == m]
            points.append(
                {
                    "m": m,
                    "mean_recall_at_1": float(np.mean([r["recall_at_1"] for r in cell])),
                    "mean_quality": float(np.mean([r["mean_quality"] for r in cell])),
                }
            )
        series[strategy] = points
    return {
        "spec": {f.name: getattr(bench.spec, f.name) for f in fields(bench.spec)},
        "k": bench.k,
        "seeds": list(bench.seeds),
        "rows": rows,
        "series": series,
    }


def format_bench_table(report: dict) -> str:
    lines = [f"{'strategy':<12} {'m':>6} {'mean recall@1':>14} {'mean quality':>13}"]
    for strategy, points in report["series"].items():
        for p in points:
            lines.append(
                f"{strategy:<12} {p['m']:>6} {p['mean_recall_at_1']:>14.4f} "
                f"{p['mean_quality']:>13.4f}"
            )
    return "\n".join(lines)
