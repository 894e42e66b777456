"""Page-level multi-index retrieval for visually rich documents.

Each page is reduced to a handful of text artifacts (summary, section headers,
facts, visual hotspots), embedded into four parallel exact-search indices, and
queried with three query variants fused by weighted reciprocal rank fusion.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .clients import ClientMode, ClientSettings, Embedder, ModelClient, make_client
from .corpus import QaCase, ingest, load_benchmark
from .errors import PyramidRagError
from .evalkit import EvalReport, mrr, ndcg_at_k, recall_at_k, run_eval
from .fusion import FusedResult, FusionConfig, Retriever, retrieve, rrf_fuse
from .model import EmbeddingVector, IndexKind, PageArtifacts, PageRef, RankedList
from .pyramid import IndexBuilder, PyramidIndex, build_index
from .queryx import QueryBundle, expand

__all__ = [
    "ClientMode",
    "ClientSettings",
    "Embedder",
    "EmbeddingVector",
    "EvalReport",
    "FusedResult",
    "FusionConfig",
    "IndexBuilder",
    "IndexKind",
    "ModelClient",
    "PageArtifacts",
    "PageRef",
    "PyramidIndex",
    "PyramidRagError",
    "QaCase",
    "QueryBundle",
    "RankedList",
    "Retriever",
    "build_index",
    "expand",
    "ingest",
    "load_benchmark",
    "make_client",
    "mrr",
    "ndcg_at_k",
    "recall_at_k",
    "retrieve",
    "rrf_fuse",
    "run_eval",
]
