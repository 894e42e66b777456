"""End-to-end wiring shared by the CLI and the HTTP service."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .clients import Embedder, ExtractionRequest, ModelClient
from .corpus import DEFAULT_DPI, ingest, iter_pages
from .errors import UnreadablePage
from .fusion import FusedResult, FusionConfig, Retriever
from .model import PageRef
from .pyramid import IndexBuilder, PyramidIndex

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndexSummary:
    pages: int
    counts: dict[str, int]
    median_budget: float
    seconds: float
    path: str

    def line(self) -> str:
        per = " ".join(f"{k}={v}" for k, v in self.counts.items())
        return f"indexed {self.pages} pages: {per} median_B={self.median_budget:g} time={self.seconds:.2f}s -> {self.path}"

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def build_from_corpus(
    corpus_root: str | Path, out_dir: str | Path, client: ModelClient, dim: int, dpi: int = DEFAULT_DPI
) -> tuple[PyramidIndex, IndexSummary]:
    """Ingest ``corpus_root``, extract artifacts per page, embed, and persist to ``out_dir``.

    Any page failure aborts the build; a half-built index is never written.
    """
    t0 = time.perf_counter()
    manifests = ingest(corpus_root, dpi)
    builder = IndexBuilder(Embedder(client, dim))
    for src in iter_pages(manifests):
        artifacts = client.extract_page(ExtractionRequest(src.read_bytes(), dpi))
        builder.add_page(src.page, artifacts, source=str(src.path.resolve()))
    index = builder.build(corpus_root=str(Path(corpus_root).resolve()), dpi=dpi)
    path = index.save(out_dir)
    summary = IndexSummary(
        pages=len(index.pages),
        counts=index.counts(),
        median_budget=index.median_budget(),
        seconds=time.perf_counter() - t0,
        path=str(path),
    )
    logger.info(summary.line())
    return index, summary


class Engine:
    """A loaded index plus the clients needed to query and answer against it."""

    def __init__(self, index: PyramidIndex, client: ModelClient, base_cfg: FusionConfig | None = None):
        self.index = index
        self.client = client
        self.base_cfg = base_cfg or FusionConfig()
        self.retriever = Retriever(index, Embedder(client, index.dim), client)

    @classmethod
    def open(cls, index_dir: str | Path, client: ModelClient, base_cfg: FusionConfig | None = None) -> "Engine":
        return cls(PyramidIndex.load(index_dir), client, base_cfg)

    def config(self, k: int | None = None, overrides: dict[str, Any] | None = None) -> FusionConfig:
        cfg = self.base_cfg.with_overrides(overrides or {})
        if k is not None:
            cfg = cfg.with_overrides({"k_final": k, "k_pre": max(cfg.k_pre, k)})
        return cfg

    def query(self, question: str, k: int | None = None, overrides: dict[str, Any] | None = None) -> FusedResult:
        return self.retriever.retrieve(question, self.config(k, overrides))

    def load_page(self, page: PageRef) -> bytes:
        source = self.index.metadata.page_sources.get(str(page))
        if source is None:
            raise UnreadablePage(f"{page}: no source recorded in the index")
        try:
            data = Path(source).read_bytes()
        except OSError as exc:
            raise UnreadablePage(f"{page}: {exc}") from exc
        if not data:
            raise UnreadablePage(f"{page}: {source} is empty")
        return data

    def answer(self, question: str, pages: list[PageRef]) -> str:
        return self.client.generate_answer(question, [self.load_page(p) for p in pages])

    def health(self) -> dict[str, Any]:
        return {
            "status": "ok",
            "pages": len(self.index.pages),
            "dim": self.index.dim,
            "counts": self.index.counts(),
            "median_budget": self.index.median_budget(),
            "embedder_model": self.index.metadata.embedder_model,
            "built_at": self.index.metadata.built_at,
        }
