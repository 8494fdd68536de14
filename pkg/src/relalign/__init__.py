"""relalign: anchor-relative representations for cross-modal pair mining."""

from .anchors import SelectionConfig, select_anchors, select_diverse, select_non_diverse, select_random
from .captions import (
    CandidateCaption,
    PrefixMatrix,
    PrefixWeights,
    WeaklyAlignedPair,
    adjudicate,
    build_prefix,
    export_weights,
    quality_score,
)
from .embed_store import EmbeddingStore, load_store, unit_normalize, write_store
from .pipeline import BenchConfig, PipelineConfig, bench_anchors, run_pipeline
from .relrep import (
    AnchorSet,
    RelRep,
    relrep_batch,
    relrep_cosine,
    relrep_image,
    relrep_text,
)
from .retrieval import (
    RetrievalResult,
    SparseIndex,
    build_index,
    retrieve_all,
    retrieve_bruteforce,
    retrieve_indexed,
)
from .synth import SynthSpec, synth_generate

__version__ = "0.1.0"

__all__ = [
    "AnchorSet",
    "BenchConfig",
    "CandidateCaption",
    "EmbeddingStore",
    "PipelineConfig",
    "PrefixMatrix",
    "PrefixWeights",
    "RelRep",
    "RetrievalResult",
    "SelectionConfig",
    "SparseIndex",
    "SynthSpec",
    "WeaklyAlignedPair",
    "adjudicate",
    "bench_anchors",
    "build_index",
    "build_prefix",
    "export_weights",
    "load_store",
    "quality_score",
    "relrep_batch",
    "relrep_cosine",
    "relrep_image",
    "relrep_text",
    "retrieve_all",
    "retrieve_bruteforce",
    "retrieve_indexed",
    "run_pipeline",
    "select_anchors",
    "select_diverse",
    "select_non_diverse",
    "select_random",
    "synth_generate",
    "unit_normalize",
    "write_store",
]
