"""Query variants: original, keywords and synonym rewrite.

Live mode asks the language model for the two rewrites. Mock mode (and any
caller without a client) uses the deterministic fallbacks below, driven by the
shipped stopword and synonym tables in ``pyramidrag/data``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Protocol

from .errors import EmptyQuery

MAX_KEYWORDS = 5
VARIANT_NAMES = ("original", "keywords", "synonyms")

# alphanumeric runs, unicode-aware (``\w`` minus underscore)
_TOKEN_RE = re.compile(r"[^\W_]+")


class QueryExpander(Protocol):
    def expand_query_llm(self, question: str) -> tuple[str, str]: ...


@dataclass(frozen=True)
class QueryBundle:
    original: str
    keywords: str
    synonyms: str

    def __post_init__(self) -> None:
        for name in VARIANT_NAMES:
            if not getattr(self, name).strip():
                raise EmptyQuery(f"{name} variant is empty")

    def variant(self, j: int) -> str:
        return (self.original, self.keywords, self.synonyms)[j]

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.original, self.keywords, self.synonyms)


def _data_lines(name: str) -> list[str]:
    text = resources.files("pyramidrag").joinpath("data").joinpath(name).read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    return frozenset(w.lower() for w in _data_lines("stopwords.txt"))


@lru_cache(maxsize=1)
def synonym_table() -> dict[str, str]:
    table: dict[str, str] = {}
    for line in _data_lines("synonyms.txt"):
        word, sep, syn = line.partition("->")
        if not sep or not word.strip() or not syn.strip():
            raise ValueError(f"bad synonym line: {line!r}")
        table[word.strip().lower()] = syn.strip()
    return table


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def content_tokens(text: str) -> list[str]:
    """Non-stopword tokens in original order and case."""
    stop = stopwords()
    return [t for t in tokenize(text) if t.lower() not in stop]


def fallback_keywords(question: str) -> str:
    """Up to five content tokens, picked longest-first, emitted in question order.

    Falls back to the stripped question when it has no content tokens at all.
    """
    seen: set[str] = set()
    unique: list[str] = []
    for tok in content_tokens(question):
        if tok.lower() not in seen:
            seen.add(tok.lower())
            unique.append(tok)
    if not unique:
        return question.strip()
    by_priority = sorted(range(len(unique)), key=lambda i: (-len(unique[i]), i))
    keep = sorted(by_priority[:MAX_KEYWORDS])
    return " ".join(unique[i] for i in keep)


def _match_case(src: str, repl: str) -> str:
    if src.isupper() and len(src) > 1:
        return repl.upper()
    if src[:1].isupper():
        return repl[:1].upper() + repl[1:]
    return repl


def fallback_synonyms(question: str) -> str:
    """The question with each content token swapped through the synonym table."""
    stop = stopwords()
    table = synonym_table()

    def swap(m: re.Match) -> str:
        tok = m.group(0)
        low = tok.lower()
        if low in stop or low not in table:
            return tok
        return _match_case(tok, table[low])

    out = _TOKEN_RE.sub(swap, question).strip()
    return out or question


def expand(question: str, client: QueryExpander | None = None) -> QueryBundle:
    """Build the three query variants for ``question``.

    When ``client`` is given and reports a live mode, both rewrites come from
    its ``expand_query_llm``; otherwise the deterministic fallbacks are used.
    """
    if not isinstance(question, str) or not question.strip():
        raise EmptyQuery("question is empty")
    if client is not None and getattr(client, "is_live", False):
        keywords, synonyms = client.expand_query_llm(question)
        keywords = keywords.strip() or fallback_keywords(question)
        synonyms = synonyms.strip() or fallback_synonyms(question)
    else:
        keywords, synonyms = fallback_keywords(question), fallback_synonyms(question)
    return QueryBundle(original=question, keywords=keywords, synonyms=synonyms)
