"""Weighted reciprocal rank fusion over (index kind x query variant) page rankings."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

from . import queryx
from .errors import EmptyInput, InvalidConfig
from .model import ALL_KINDS, IndexKind, PageRef, RankedList
from .pyramid import PyramidIndex, TextEmbedder, hits_to_page_ranking

logger = logging.getLogger(__name__)

VARIANTS = (0, 1, 2)
CellKey = tuple[IndexKind, int]


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 60.0
    weights: Mapping[IndexKind, float] = field(default_factory=lambda: {k: 1.0 for k in ALL_KINDS})
    k_pre: int = 200
    enabled_indices: tuple[IndexKind, ...] = ALL_KINDS
    enabled_variants: tuple[int, ...] = VARIANTS
    k_final: int = 100
    # hits scoring <= min_score carry no match evidence and are dropped before
    # page reduction; None keeps every hit
    min_score: float | None = 0.0

    def __post_init__(self) -> None:
        weights = {IndexKind.parse(k) if isinstance(k, str) else k: float(v) for k, v in dict(self.weights).items()}
        for kind in ALL_KINDS:
            weights.setdefault(kind, 1.0)
        object.__setattr__(self, "weights", weights)
        indices = tuple(sorted({IndexKind.parse(k) if isinstance(k, str) else k for k in self.enabled_indices},
                               key=ALL_KINDS.index))
        object.__setattr__(self, "enabled_indices", indices)
        object.__setattr__(self, "enabled_variants", tuple(sorted({int(v) for v in self.enabled_variants})))
        self.validate()

    def validate(self) -> None:
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InvalidConfig("alpha must be > 0")
        if any(w < 0 or not math.isfinite(w) for w in self.weights.values()):
            raise InvalidConfig("weights must be finite and >= 0")
        if not (self.k_pre >= self.k_final >= 1):
            raise InvalidConfig(f"need k_pre >= k_final >= 1 (k_pre={self.k_pre}, k_final={self.k_final})")
        if not self.enabled_indices:
            raise InvalidConfig("enabled_indices is empty")
        if not self.enabled_variants or any(v not in VARIANTS for v in self.enabled_variants):
            raise InvalidConfig("enabled_variants must be a non-empty subset of {0, 1, 2}")
        if self.min_score is not None and not math.isfinite(self.min_score):
            raise InvalidConfig("min_score must be finite or null")

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "weights": {k.value: self.weights[k] for k in ALL_KINDS},
            "k_pre": self.k_pre,
            "enabled_indices": [k.value for k in self.enabled_indices],
            "enabled_variants": list(self.enabled_variants),
            "k_final": self.k_final,
            "min_score": self.min_score,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FusionConfig":
        known = {"alpha", "weights", "k_pre", "enabled_indices", "enabled_variants", "k_final", "min_score"}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f"unknown fusion config keys: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            if "enabled_indices" in kwargs:
                kwargs["enabled_indices"] = tuple(IndexKind.parse(k) for k in kwargs["enabled_indices"])
            if "weights" in kwargs:
                kwargs["weights"] = {IndexKind.parse(k): float(v) for k, v in kwargs["weights"].items()}
            return cls(**kwargs)
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, InvalidConfig):
                raise
            raise InvalidConfig(str(exc)) from exc

    def with_overrides(self, overrides: Mapping[str, Any]) -> "FusionConfig":
        merged = self.to_dict()
        merged.update(overrides)
        return FusionConfig.from_dict(merged)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class FusedEntry:
    page: PageRef
    rrf_score: float
    contributing_lists: int
    best_rank: int


@dataclass
class FusedResult:
    entries: list[FusedEntry]
    lists: dict[CellKey, RankedList] = field(default_factory=dict)
    failed_cells: dict[CellKey, str] = field(default_factory=dict)
    timings_ms: dict[str, float] = field(default_factory=dict)
    variants: tuple[str, ...] = ()

    def pages(self) -> list[PageRef]:
        return [e.page for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def top(self, k: int) -> list[FusedEntry]:
        return self.entries[:k]


def rrf_fuse(lists: Mapping[CellKey, RankedList], cfg: FusionConfig | None = None) -> FusedResult:
    """Score each page by the sum over lists containing it of ``w_kind / (alpha + rank)``.

    Pages missing from a list get nothing from it. Sums use :func:`math.fsum`, so
    the result does not depend on list iteration order. Order: score desc, then
    best single-list rank asc, then ``(doc_id, page_no)`` asc; truncated to
    ``cfg.k_final``.
    """
    cfg = cfg or FusionConfig()
    if not lists:
        raise EmptyInput("no ranked lists to fuse")
    terms: dict[PageRef, list[float]] = {}
    best: dict[PageRef, int] = {}
    for (kind, _variant), ranked in lists.items():
        w = cfg.weights[kind]
        for entry in ranked.entries:
            terms.setdefault(entry.page, []).append(w / (cfg.alpha + entry.rank))
            if entry.page not in best or entry.rank < best[entry.page]:
                best[entry.page] = entry.rank
    fused = [FusedEntry(page, math.fsum(t), len(t), best[page]) for page, t in terms.items()]
    fused.sort(key=lambda e: (-e.rrf_score, e.best_rank, e.page.doc_id, e.page.page_no))
    return FusedResult(entries=fused[: cfg.k_final], lists=dict(lists))


class Retriever:
    """One retrieval code path shared by the CLI, the HTTP service and the eval harness."""

    def __init__(self, index: PyramidIndex, embedder: TextEmbedder, expander: queryx.QueryExpander | None = None):
        if embedder.dim != index.dim:
            raise InvalidConfig(f"embedder dim {embedder.dim} != index dim {index.dim}")
        self.index = index
        self.embedder = embedder
        self.expander = expander

    def retrieve(self, question: str, cfg: FusionConfig | None = None) -> FusedResult:
        cfg = cfg or FusionConfig()
        t0 = time.perf_counter()
        bundle = queryx.expand(question, self.expander)
        variants = cfg.enabled_variants
        matrix = self.embedder.embed_many([bundle.variant(j) for j in variants])
        t1 = time.perf_counter()

        lists: dict[CellKey, RankedList] = {}
        failed: dict[CellKey, str] = {}
        for kind in cfg.enabled_indices:
            for row, j in enumerate(variants):
                try:
                    hits = self.index.search(kind, matrix[row], cfg.k_pre)
                    if cfg.min_score is not None:
                        hits = [h for h in hits if h.score > cfg.min_score]
                    lists[(kind, j)] = hits_to_page_ranking(hits)
                except Exception as exc:  # degrade to the cells that worked
                    failed[(kind, j)] = f"{type(exc).__name__}: {exc}"
                    logger.warning("retrieval cell (%s, q%d) failed: %s", kind.value, j, exc)
        t2 = time.perf_counter()
        if not lists:
            raise EmptyInput(f"every retrieval cell failed: {failed}")
        result = rrf_fuse(lists, cfg)
        t3 = time.perf_counter()
        result.failed_cells = failed
        result.variants = bundle.as_tuple()
        result.timings_ms = {
            "encode": (t1 - t0) * 1e3,
            "search": (t2 - t1) * 1e3,
            "fusion": (t3 - t2) * 1e3,
            "total": (t3 - t0) * 1e3,
        }
        return result


def retrieve(
    question: str,
    index: PyramidIndex,
    cfg: FusionConfig | None = None,
    *,
    embedder: TextEmbedder,
    expander: queryx.QueryExpander | None = None,
) -> FusedResult:
    return Retriever(index, embedder, expander).retrieve(question, cfg)


def fused_result_to_dict(result: FusedResult, include_lists: bool = False) -> dict[str, Any]:
    out: dict[str, Any] = {
        "results": [
            {
                "rank": i,
                "doc_id": e.page.doc_id,
                "page_no": e.page.page_no,
                "rrf_score": e.rrf_score,
                "contributing_lists": e.contributing_lists,
            }
            for i, e in enumerate(result.entries, start=1)
        ],
        "variants": list(result.variants),
        "failed_cells": {f"{k.value}:q{j}": msg for (k, j), msg in result.failed_cells.items()},
    }
    if include_lists:
        out["lists"] = {
            f"{k.value}:q{j}": [{"page": str(e.page), "rank": e.rank, "score": e.score} for e in ranked.entries]
            for (k, j), ranked in sorted(result.lists.items(), key=lambda kv: (ALL_KINDS.index(kv[0][0]), kv[0][1]))
        }
    return out
