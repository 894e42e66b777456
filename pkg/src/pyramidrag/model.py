"""Core value types shared across the package. No I/O lives here.

All stored and query vectors are unit-normalized at construction, so every
similarity in the system is a plain dot product (equal to cosine).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, NonFinite, UnknownIndexKind, ZeroVector

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True, order=True)
class PageRef:
    doc_id: str
    page_no: int

    def __post_init__(self) -> None:
        if not isinstance(self.doc_id, str) or not self.doc_id:
            raise ValueError("doc_id must be a non-empty string")
        if isinstance(self.page_no, bool) or not isinstance(self.page_no, int) or self.page_no < 1:
            raise ValueError(f"page_no must be an integer >= 1, got {self.page_no!r}")

    def __str__(self) -> str:
        return f"{self.doc_id}#{self.page_no}"

    @classmethod
    def parse(cls, text: str) -> "PageRef":
        """Parse the ``"doc_id#page_no"`` form used in benchmark files."""
        doc_id, sep, page = text.rpartition("#")
        if not sep or not doc_id:
            raise ValueError(f"expected 'doc_id#page_no', got {text!r}")
        try:
            page_no = int(page)
        except ValueError:
            raise ValueError(f"page number is not an integer in {text!r}") from None
        return cls(doc_id, page_no)


def _clean_items(name: str, items: Iterable[str]) -> tuple[str, ...]:
    out = tuple(items)
    for i, item in enumerate(out):
        if not isinstance(item, str) or not item.strip():
            raise ValueError(f"{name}[{i}] is empty")
    return out


@dataclass(frozen=True)
class PageArtifacts:
    """The four artifact sets extracted from one page image."""

    summary: str
    sections: tuple[str, ...] = ()
    facts: tuple[str, ...] = ()
    hotspots: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.summary, str) or not self.summary.strip():
            raise ValueError("summary must be non-empty")
        object.__setattr__(self, "sections", _clean_items("sections", self.sections))
        object.__setattr__(self, "facts", _clean_items("facts", self.facts))
        object.__setattr__(self, "hotspots", _clean_items("hotspots", self.hotspots))

    @property
    def vector_budget(self) -> int:
        """Vectors this page contributes to the pyramid: 1 + S + F + H."""
        return 1 + len(self.sections) + len(self.facts) + len(self.hotspots)

    def to_dict(self) -> dict:
        return {
            "summary": self.summary,
            "sections": list(self.sections),
            "facts": list(self.facts),
            "hotspots": list(self.hotspots),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PageArtifacts":
        return cls(
            summary=data["summary"],
            sections=tuple(data.get("sections", ())),
            facts=tuple(data.get("facts", ())),
            hotspots=tuple(data.get("hotspots", ())),
        )


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A unit-norm float32 vector. Use :func:`normalize` to create one."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a non-empty 1-d array")
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise NonFinite("embedding has NaN/Inf components")
        norm = float(np.linalg.norm(arr.astype(np.float64)))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"embedding is not unit-norm (|v| = {norm!r})")
        if arr.flags.writeable:
            arr = arr.copy()
            arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def dot(self, other: "EmbeddingVector") -> float:
        if other.dim != self.dim:
            raise DimensionMismatch(f"dim {self.dim} vs {other.dim}")
        return float(np.dot(self.values.astype(np.float64), other.values.astype(np.float64)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    def __len__(self) -> int:
        return self.dim


def normalize_array(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Return ``values / ||values||`` as float32, validating the input."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("expected a non-empty 1-d array")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("input has NaN/Inf components")
    norm = math.sqrt(float(np.dot(arr, arr)))
    if norm == 0.0:
        raise ZeroVector("cannot normalize an all-zero vector")
    return (arr / norm).astype(np.float32)


def normalize(values: Sequence[float] | np.ndarray) -> EmbeddingVector:
    return EmbeddingVector(normalize_array(values))


class IndexKind(str, enum.Enum):
    FUSED_PAGE = "fusedpage"
    SECTION = "section"
    FACT = "fact"
    HOTSPOT = "hotspot"

    @classmethod
    def parse(cls, name: str) -> "IndexKind":
        key = name.strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "page": cls.FUSED_PAGE,
            "fused": cls.FUSED_PAGE,
            "fusedpage": cls.FUSED_PAGE,
            "section": cls.SECTION,
            "sections": cls.SECTION,
            "sec": cls.SECTION,
            "fact": cls.FACT,
            "facts": cls.FACT,
            "hotspot": cls.HOTSPOT,
            "hotspots": cls.HOTSPOT,
            "hot": cls.HOTSPOT,
        }
        try:
            return aliases[key]
        except KeyError:
            raise UnknownIndexKind(name) from None


ALL_KINDS: tuple[IndexKind, ...] = tuple(IndexKind)


@dataclass(frozen=True)
class VectorRecord:
    index_kind: IndexKind
    page: PageRef
    ordinal: int
    vector: EmbeddingVector
    source_text: str

    def __post_init__(self) -> None:
        if self.ordinal < 0:
            raise ValueError("ordinal must be >= 0")
        if self.index_kind is IndexKind.FUSED_PAGE and self.ordinal != 0:
            raise ValueError("FusedPage records must have ordinal 0")

    @property
    def key(self) -> tuple[IndexKind, PageRef, int]:
        return (self.index_kind, self.page, self.ordinal)


@dataclass(frozen=True)
class RankedEntry:
    page: PageRef
    rank: int
    score: float


@dataclass(frozen=True)
class RankedList:
    """Pages with 1-based gap-free ranks and non-increasing scores."""

    entries: tuple[RankedEntry, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        seen: set[PageRef] = set()
        prev = math.inf
        for i, entry in enumerate(entries, start=1):
            if entry.rank != i:
                raise ValueError(f"rank {entry.rank} at position {i}; ranks must be 1..n")
            if entry.page in seen:
                raise ValueError(f"page {entry.page} appears twice")
            if not entry.score <= prev:
                raise ValueError("scores must be non-increasing with rank")
            seen.add(entry.page)
            prev = entry.score

    @classmethod
    def from_pages(cls, scored: Iterable[tuple[PageRef, float]]) -> "RankedList":
        """Assign ranks 1..n to already-ordered ``(page, score)`` pairs."""
        return cls(tuple(RankedEntry(p, i, float(s)) for i, (p, s) in enumerate(scored, start=1)))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def pages(self) -> list[PageRef]:
        return [e.page for e in self.entries]

    def rank_of(self, page: PageRef) -> int | None:
        for e in self.entries:
            if e.page == page:
                return e.rank
        return None
