"""Corpus ingestion and QA benchmark loading.

Corpus layout: ``<root>/<doc_id>/<page files>``; pages are ``*.page.txt`` fixtures
or ``*.png`` rasters, numbered 1..n in lexicographic filename order.

Benchmark layout: JSON Lines, one case per line::

    {"case_id": "q1", "question": "...", "gold_pages": ["docA#2"], "gold_answer": "..."}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from .errors import DanglingGoldPage, EmptyCorpus, SchemaError, UnreadablePage
from .model import PageRef

FIXTURE_SUFFIX = ".page.txt"
RASTER_SUFFIX = ".png"
DEFAULT_DPI = 180


def page_kind(name: str) -> str | None:
    lower = name.lower()
    if lower.endswith(FIXTURE_SUFFIX):
        return "fixture"
    if lower.endswith(RASTER_SUFFIX):
        return "raster"
    return None


@dataclass(frozen=True)
class PageSource:
    page: PageRef
    path: Path
    kind: str  # "fixture" | "raster"

    def read_bytes(self) -> bytes:
        try:
            data = self.path.read_bytes()
        except OSError as exc:
            raise UnreadablePage(f"{self.page}: {exc}") from exc
        if not data:
            raise UnreadablePage(f"{self.page}: {self.path} is empty")
        return data


@dataclass(frozen=True)
class DocumentManifest:
    doc_id: str
    pages: tuple[PageSource, ...]
    dpi: int = DEFAULT_DPI

    @property
    def page_count(self) -> int:
        return len(self.pages)


def ingest(corpus_root: str | os.PathLike, dpi: int = DEFAULT_DPI) -> list[DocumentManifest]:
    root = Path(corpus_root)
    if not root.is_dir():
        raise EmptyCorpus(f"corpus directory {root} does not exist")
    manifests: list[DocumentManifest] = []
    for doc_dir in sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name):
        files = sorted((f for f in doc_dir.iterdir() if f.is_file() and page_kind(f.name)), key=lambda f: f.name)
        if not files:
            continue
        pages = []
        for no, f in enumerate(files, start=1):
            if not os.access(f, os.R_OK):
                raise UnreadablePage(f"{doc_dir.name}#{no}: {f} is not readable")
            pages.append(PageSource(PageRef(doc_dir.name, no), f, page_kind(f.name) or "fixture"))
        manifests.append(DocumentManifest(doc_dir.name, tuple(pages), dpi))
    if not manifests:
        raise EmptyCorpus(f"no document pages under {root}")
    return manifests


def iter_pages(manifests: Sequence[DocumentManifest]) -> Iterator[PageSource]:
    for m in manifests:
        yield from m.pages


def page_registry(manifests: Sequence[DocumentManifest]) -> dict[PageRef, PageSource]:
    return {src.page: src for src in iter_pages(manifests)}


@dataclass(frozen=True)
class QaCase:
    case_id: str
    question: str
    gold_pages: frozenset[PageRef]
    gold_answer: str | None = None
    extra: dict = field(default_factory=dict, compare=False, hash=False)

    def to_dict(self) -> dict:
        out = {
            "case_id": self.case_id,
            "question": self.question,
            "gold_pages": sorted(str(p) for p in self.gold_pages),
        }
        if self.gold_answer is not None:
            out["gold_answer"] = self.gold_answer
        return out


def _parse_case(raw: object, line: int) -> QaCase:
    if not isinstance(raw, dict):
        raise SchemaError("case must be a JSON object", line)
    for key in ("case_id", "question", "gold_pages"):
        if key not in raw:
            raise SchemaError(f"missing field {key!r}", line)
    case_id, question, gold, answer = raw["case_id"], raw["question"], raw["gold_pages"], raw.get("gold_answer")
    if not isinstance(case_id, (str, int)) or str(case_id) == "":
        raise SchemaError("case_id must be a non-empty string", line)
    if not isinstance(question, str) or not question.strip():
        raise SchemaError("question must be a non-empty string", line)
    if not isinstance(gold, list) or not gold:
        raise SchemaError("gold_pages must be a non-empty list", line)
    if answer is not None and not isinstance(answer, str):
        raise SchemaError("gold_answer must be a string when present", line)
    pages = set()
    for g in gold:
        if not isinstance(g, str):
            raise SchemaError(f"gold page {g!r} is not a 'doc#page' string", line)
        try:
            pages.add(PageRef.parse(g))
        except ValueError as exc:
            raise SchemaError(str(exc), line) from None
    extra = {k: v for k, v in raw.items() if k not in ("case_id", "question", "gold_pages", "gold_answer")}
    return QaCase(str(case_id), question, frozenset(pages), answer, extra)


def load_benchmark(path: str | os.PathLike, manifests: Sequence[DocumentManifest] | None = None) -> list[QaCase]:
    """Load and validate a JSON-Lines benchmark.

    With ``manifests`` given, every gold page must exist in the corpus.
    """
    known = set(page_registry(manifests)) if manifests is not None else None
    cases: list[QaCase] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line_no) from None
            case = _parse_case(raw, line_no)
            if case.case_id in seen:
                raise SchemaError(f"duplicate case_id {case.case_id!r}", line_no)
            if known is not None:
                missing = sorted(str(p) for p in case.gold_pages if p not in known)
                if missing:
                    raise DanglingGoldPage(f"line {line_no}: gold page(s) {missing} not in corpus")
            seen.add(case.case_id)
            cases.append(case)
    return cases


def write_benchmark(cases: Sequence[QaCase], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
