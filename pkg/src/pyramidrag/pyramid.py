"""Four-level pyramid index over page artifacts.

Per page the index stores one fused page vector (summary plus hotspot
summary), one vector per section header, one per fact and one per hotspot, so
a page costs ``B = 1 + S + F + H`` vectors. Search is exhaustive and exact.

On-disk layout (one directory)::

    manifest.json                 format, version, dim, counts, metadata, checksums
    records.jsonl                 kind, doc_id, page_no, ordinal, source_text (record order)
    vectors_<kind>.bin            little-endian float32, row-major, record order
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Protocol, Sequence

import numpy as np

from .errors import (
    ChecksumMismatch,
    DimensionMismatch,
    FormatVersionMismatch,
    IndexIoError,
    UnknownIndexKind,
)
from .model import (
    ALL_KINDS,
    EmbeddingVector,
    IndexKind,
    PageArtifacts,
    PageRef,
    RankedList,
    VectorRecord,
)

logger = logging.getLogger(__name__)

FORMAT_NAME = "pyramid-index"
FORMAT_VERSION = 1
HOTSPOT_JOINER = "; "
_LE_F32 = np.dtype("<f4")


class TextEmbedder(Protocol):
    dim: int

    @property
    def model_id(self) -> str: ...

    def embed_many(self, texts: Sequence[str]) -> np.ndarray: ...


def hotspot_summary(hotspots: Sequence[str]) -> str:
    return HOTSPOT_JOINER.join(h.strip() for h in hotspots)


def fused_page_text(artifacts: PageArtifacts) -> str:
    """Summary, a blank line, then the hotspots joined by ``"; "`` (summary alone if none)."""
    if not artifacts.hotspots:
        return artifacts.summary
    return f"{artifacts.summary}\n\n{hotspot_summary(artifacts.hotspots)}"


def artifact_texts(artifacts: PageArtifacts) -> list[tuple[IndexKind, int, str]]:
    """(kind, ordinal, text) for every vector the page contributes, in build order."""
    out = [(IndexKind.FUSED_PAGE, 0, fused_page_text(artifacts))]
    out += [(IndexKind.SECTION, i, s) for i, s in enumerate(artifacts.sections)]
    out += [(IndexKind.FACT, i, f) for i, f in enumerate(artifacts.facts)]
    out += [(IndexKind.HOTSPOT, i, h) for i, h in enumerate(artifacts.hotspots)]
    return out


def build_page(page: PageRef, artifacts: PageArtifacts, embedder: TextEmbedder) -> list[VectorRecord]:
    items = artifact_texts(artifacts)
    matrix = np.asarray(embedder.embed_many([text for _, _, text in items]))
    if matrix.ndim != 2 or matrix.shape != (len(items), embedder.dim):
        raise DimensionMismatch(f"embedder returned shape {matrix.shape}, expected ({len(items)}, {embedder.dim})")
    return [
        VectorRecord(kind, page, ordinal, EmbeddingVector(matrix[row]), text)
        for row, (kind, ordinal, text) in enumerate(items)
    ]


@dataclass(frozen=True)
class SearchHit:
    record: VectorRecord
    score: float


@dataclass(frozen=True)
class _RecordMeta:
    page: PageRef
    ordinal: int
    source_text: str


@dataclass
class BuildMetadata:
    embedder_model: str
    built_at: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
    artifact_counts: dict[str, int] = field(default_factory=dict)
    page_sources: dict[str, str] = field(default_factory=dict)
    extra: dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "embedder_model": self.embedder_model,
            "built_at": self.built_at,
            "artifact_counts": dict(self.artifact_counts),
            "page_sources": dict(self.page_sources),
            "extra": dict(self.extra),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BuildMetadata":
        return cls(
            embedder_model=data["embedder_model"],
            built_at=data.get("built_at", ""),
            artifact_counts=dict(data.get("artifact_counts", {})),
            page_sources=dict(data.get("page_sources", {})),
            extra=dict(data.get("extra", {})),
        )


class PyramidIndex:
    """Immutable once built; safe for concurrent searches.

    Records of every kind are kept sorted by ``(doc_id, page_no, ordinal)`` so a
    stable sort on descending score yields the documented tie-break for free.
    """

    def __init__(
        self,
        dim: int,
        meta: dict[IndexKind, list[_RecordMeta]],
        vectors: dict[IndexKind, np.ndarray],
        pages: Sequence[PageRef],
        metadata: BuildMetadata,
    ):
        self.dim = dim
        self._meta = meta
        self._vectors = vectors
        self._vectors64 = {k: v.astype(np.float64) for k, v in vectors.items()}
        self.pages: tuple[PageRef, ...] = tuple(pages)
        self.metadata = metadata
        for kind in ALL_KINDS:
            v = vectors[kind]
            if v.ndim != 2 or v.shape[1] != dim or v.shape[0] != len(meta[kind]):
                raise DimensionMismatch(f"{kind.value}: vector block shape {v.shape} does not match {len(meta[kind])}x{dim}")
            v.flags.writeable = False
        fused = [m.page for m in meta[IndexKind.FUSED_PAGE]]
        if len(fused) != len(set(fused)) or set(fused) != set(self.pages):
            raise ValueError("FusedPage set must hold exactly one record per registered page")
        self._page_texts: dict[PageRef, str] | None = None

    # -- introspection ------------------------------------------------------

    def count(self, kind: IndexKind | None = None) -> int:
        if kind is None:
            return sum(len(m) for m in self._meta.values())
        return len(self._meta[self._kind(kind)])

    def counts(self) -> dict[str, int]:
        return {k.value: len(self._meta[k]) for k in ALL_KINDS}

    def vectors(self, kind: IndexKind) -> np.ndarray:
        return self._vectors[self._kind(kind)]

    def records(self, kind: IndexKind) -> Iterator[VectorRecord]:
        kind = self._kind(kind)
        block = self._vectors[kind]
        for row, m in enumerate(self._meta[kind]):
            yield VectorRecord(kind, m.page, m.ordinal, EmbeddingVector(block[row]), m.source_text)

    def record(self, kind: IndexKind, row: int) -> VectorRecord:
        kind = self._kind(kind)
        m = self._meta[kind][row]
        return VectorRecord(kind, m.page, m.ordinal, EmbeddingVector(self._vectors[kind][row]), m.source_text)

    def page_budgets(self) -> dict[PageRef, int]:
        budget = {p: 0 for p in self.pages}
        for kind in ALL_KINDS:
            for m in self._meta[kind]:
                budget[m.page] += 1
        return budget

    def median_budget(self) -> float:
        return float(statistics.median(self.page_budgets().values())) if self.pages else 0.0

    def page_text(self, page: PageRef) -> str:
        """All source texts stored for ``page`` (fused text, sections, facts), newline-joined.

        Hotspot texts are already part of the fused text and are not repeated.
        """
        if self._page_texts is None:
            parts: dict[PageRef, list[str]] = {p: [] for p in self.pages}
            for kind in (IndexKind.FUSED_PAGE, IndexKind.SECTION, IndexKind.FACT):
                for m in self._meta[kind]:
                    parts[m.page].append(m.source_text)
            self._page_texts = {p: "\n".join(t) for p, t in parts.items()}
        return self._page_texts[page]

    @staticmethod
    def _kind(kind: IndexKind | str) -> IndexKind:
        if isinstance(kind, IndexKind):
            return kind
        try:
            return IndexKind(kind)
        except ValueError:
            raise UnknownIndexKind(str(kind)) from None

    # -- search -------------------------------------------------------------

    def search(self, kind: IndexKind, query: EmbeddingVector | np.ndarray, k: int) -> list[SearchHit]:
        """Exact top-``k`` by dot product; ties by (doc_id, page_no, ordinal) ascending."""
        kind = self._kind(kind)
        q = query.values if isinstance(query, EmbeddingVector) else np.asarray(query)
        if q.ndim != 1 or q.shape[0] != self.dim:
            raise DimensionMismatch(f"query dim {q.shape[-1] if q.ndim else 0} != index dim {self.dim}")
        if k < 1:
            raise ValueError("k must be >= 1")
        block = self._vectors64[kind]
        n = block.shape[0]
        if n == 0:
            return []
        scores = block @ q.astype(np.float64)
        order = np.argsort(-scores, kind="stable")[: min(k, n)]
        meta = self._meta[kind]
        vecs = self._vectors[kind]
        return [
            SearchHit(
                VectorRecord(kind, meta[i].page, meta[i].ordinal, EmbeddingVector(vecs[i]), meta[i].source_text),
                float(scores[i]),
            )
            for i in order
        ]

    # -- persistence --------------------------------------------------------

    def save(self, path: str | os.PathLike) -> Path:
        return save(self, path)

    @classmethod
    def load(cls, path: str | os.PathLike, expected_dim: int | None = None) -> "PyramidIndex":
        return load(path, expected_dim=expected_dim)


def search(index: PyramidIndex, kind: IndexKind, query: EmbeddingVector | np.ndarray, k: int) -> list[SearchHit]:
    return index.search(kind, query, k)


def hits_to_page_ranking(hits: Iterable[SearchHit]) -> RankedList:
    """Reduce vector hits to pages: a page scores its best hit."""
    best: dict[PageRef, float] = {}
    for hit in hits:
        page = hit.record.page
        if page not in best or hit.score > best[page]:
            best[page] = hit.score
    ordered = sorted(best.items(), key=lambda kv: (-kv[1], kv[0].doc_id, kv[0].page_no))
    return RankedList.from_pages(ordered)


class IndexBuilder:
    """Single-writer accumulator; call :meth:`add_page` per page then :meth:`build`."""

    def __init__(self, embedder: TextEmbedder):
        self.embedder = embedder
        self.dim = int(embedder.dim)
        self._records: dict[IndexKind, list[tuple[_RecordMeta, np.ndarray]]] = {k: [] for k in ALL_KINDS}
        self._pages: list[PageRef] = []
        self._seen: set[PageRef] = set()
        self._sources: dict[str, str] = {}

    def add_page(self, page: PageRef, artifacts: PageArtifacts, source: str | None = None) -> list[VectorRecord]:
        if page in self._seen:
            raise ValueError(f"page {page} added twice")
        records = build_page(page, artifacts, self.embedder)
        for rec in records:
            if rec.vector.dim != self.dim:
                raise DimensionMismatch(f"record dim {rec.vector.dim} != index dim {self.dim}")
            self._records[rec.index_kind].append((_RecordMeta(page, rec.ordinal, rec.source_text), rec.vector.values))
        self._seen.add(page)
        self._pages.append(page)
        if source is not None:
            self._sources[str(page)] = source
        return records

    def build(self, **extra: object) -> PyramidIndex:
        meta: dict[IndexKind, list[_RecordMeta]] = {}
        vectors: dict[IndexKind, np.ndarray] = {}
        for kind in ALL_KINDS:
            rows = sorted(self._records[kind], key=lambda r: (r[0].page.doc_id, r[0].page.page_no, r[0].ordinal))
            meta[kind] = [m for m, _ in rows]
            vectors[kind] = (
                np.stack([v for _, v in rows]).astype(np.float32) if rows else np.zeros((0, self.dim), dtype=np.float32)
            )
        pages = sorted(self._pages, key=lambda p: (p.doc_id, p.page_no))
        metadata = BuildMetadata(
            embedder_model=self.embedder.model_id,
            artifact_counts={k.value: len(meta[k]) for k in ALL_KINDS},
            page_sources=dict(sorted(self._sources.items())),
            extra=dict(extra),
        )
        return PyramidIndex(self.dim, meta, vectors, pages, metadata)


def build_index(
    pages: Iterable[tuple[PageRef, PageArtifacts]], embedder: TextEmbedder, **extra: object
) -> PyramidIndex:
    builder = IndexBuilder(embedder)
    for page, artifacts in pages:
        builder.add_page(page, artifacts)
    return builder.build(**extra)


# ---------------------------------------------------------------------------
# persistence


def _blob_name(kind: IndexKind) -> str:
    return f"vectors_{kind.value}.bin"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def save(index: PyramidIndex, path: str | os.PathLike) -> Path:
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
        files: dict[str, bytes] = {}
        lines = []
        for kind in ALL_KINDS:
            for m in index._meta[kind]:
                lines.append(
                    json.dumps(
                        {
                            "kind": kind.value,
                            "doc_id": m.page.doc_id,
                            "page_no": m.page.page_no,
                            "ordinal": m.ordinal,
                            "source_text": m.source_text,
                        },
                        ensure_ascii=False,
                        sort_keys=True,
                    )
                )
        files["records.jsonl"] = ("\n".join(lines) + "\n").encode("utf-8") if lines else b""
        for kind in ALL_KINDS:
            files[_blob_name(kind)] = np.ascontiguousarray(index._vectors[kind], dtype=_LE_F32).tobytes()
        for name, data in files.items():
            (root / name).write_bytes(data)
        manifest = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "dim": index.dim,
            "dtype": "float32-le",
            "counts": index.counts(),
            "pages": [str(p) for p in index.pages],
            "metadata": index.metadata.to_dict(),
            "files": {name: {"bytes": len(data), "sha256": _sha256(data)} for name, data in sorted(files.items())},
            "checksum": _sha256("".join(_sha256(files[n]) for n in sorted(files)).encode("ascii")),
        }
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IndexIoError(f"cannot write index to {root}: {exc}") from exc
    return root


def load(path: str | os.PathLike, expected_dim: int | None = None) -> PyramidIndex:
    root = Path(path)
    try:
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise IndexIoError(f"no index manifest at {root}") from exc
    except OSError as exc:
        raise IndexIoError(f"cannot read {root / 'manifest.json'}: {exc}") from exc
    except ValueError as exc:
        raise ChecksumMismatch(f"manifest is not valid JSON: {exc}") from exc

    if manifest.get("format") != FORMAT_NAME or manifest.get("version") != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"expected {FORMAT_NAME} v{FORMAT_VERSION}, found {manifest.get('format')} v{manifest.get('version')}"
        )
    dim = manifest.get("dim")
    if not isinstance(dim, int) or dim <= 0:
        raise FormatVersionMismatch(f"invalid declared dim {dim!r}")
    if expected_dim is not None and dim != expected_dim:
        raise FormatVersionMismatch(f"index declares dim {dim}, expected {expected_dim}")

    files: dict[str, bytes] = {}
    for name, info in manifest["files"].items():
        try:
            data = (root / name).read_bytes()
        except OSError as exc:
            raise IndexIoError(f"cannot read {root / name}: {exc}") from exc
        if len(data) != info["bytes"] or _sha256(data) != info["sha256"]:
            raise ChecksumMismatch(f"{name} does not match its manifest checksum")
        files[name] = data
    overall = _sha256("".join(_sha256(files[n]) for n in sorted(files)).encode("ascii"))
    if overall != manifest.get("checksum"):
        raise ChecksumMismatch("index checksum mismatch")

    meta: dict[IndexKind, list[_RecordMeta]] = {k: [] for k in ALL_KINDS}
    for line in files["records.jsonl"].decode("utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        kind = IndexKind(row["kind"])
        meta[kind].append(_RecordMeta(PageRef(row["doc_id"], row["page_no"]), row["ordinal"], row["source_text"]))

    vectors: dict[IndexKind, np.ndarray] = {}
    for kind in ALL_KINDS:
        blob = files[_blob_name(kind)]
        n = manifest["counts"][kind.value]
        if len(blob) != n * dim * 4 or len(meta[kind]) != n:
            raise ChecksumMismatch(f"{kind.value}: expected {n} vectors of dim {dim}")
        vectors[kind] = np.frombuffer(blob, dtype=_LE_F32).reshape(n, dim).astype(np.float32)

    pages = [PageRef.parse(p) for p in manifest["pages"]]
    return PyramidIndex(dim, meta, vectors, pages, BuildMetadata.from_dict(manifest["metadata"]))
