"""Seeded synthetic corpora with planted facts, for offline end-to-end checks.

Pages look like terse financial-filing extracts. Each planted page gets a
made-up code token in its first fact; the token is drawn so that it shares no
mock-embedder hash slot with any other token in the corpus (at every supported
dimension), which makes it unique in embedding space and not just lexically.
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .clients import SUPPORTED_DIMS, hash_slot, mock_tokens, render_labeled_blocks
from .corpus import QaCase, write_benchmark
from .model import PageArtifacts, PageRef

TOPICS = [
    "revenue", "margin", "liquidity", "inventory", "receivables", "goodwill", "leases",
    "pension", "derivatives", "hedging", "restructuring", "impairment", "litigation",
    "warranty", "backlog", "capex", "depreciation", "amortization", "royalties", "tariffs",
    "freight", "procurement", "headcount", "payroll", "dividends", "buyback", "debt",
    "covenants", "bonds", "notes", "equity", "options", "grants", "taxes", "credits",
    "subsidies", "exports", "imports", "currency", "commodities", "energy", "logistics",
    "software", "hardware", "services", "licensing", "subscriptions", "advertising",
    "insurance", "reinsurance", "deposits", "loans", "mortgages", "securities", "trading",
    "custody", "brokerage", "clearing", "settlement", "payments",
]
QUALIFIERS = [
    "consolidated", "segment", "regional", "domestic", "international", "quarterly",
    "annual", "adjusted", "reported", "organic", "deferred", "accrued", "operating",
    "net", "gross", "diluted", "basic", "current", "noncurrent", "projected",
]
REGIONS = ["americas", "emea", "apac", "europe", "asia", "canada", "mexico", "brazil", "japan", "india"]
YEARS = [str(y) for y in range(2018, 2024)]
AMOUNTS = [str(n) for n in range(10, 100)]
SUMMARY_TEMPLATES = [
    "The section reviews {q1} {t1} across {r1} for fiscal {y}.",
    "Management attributes the change in {t2} to {q2} {t3} trends.",
    "The table compares {t1} with {t2} over the prior year.",
    "Commentary notes that {q1} {t3} rose in {r1} while {t2} declined.",
    "Footnotes describe accounting policy for {t4} and {t1}.",
    "A chart tracks {q2} {t4} by quarter in {r2}.",
    "The discussion closes with guidance on {t3} for {y}.",
    "Risk factors mention exposure of {t2} to {r2} conditions.",
]
SECTION_TEMPLATES = [
    "{Q} {T} overview", "Note {n} {T}", "{T} by region", "{R} {T} results", "Table {n} {Q} {T}",
]
FACT_TEMPLATES = [
    "{q} {t} was {a} million in {y}",
    "{t} in {r} grew {a} percent",
    "{q} {t} totaled {a} billion",
    "{t} ratio stood at {a} percent for {y}",
    "{r} {t} declined {a} percent year over year",
]
HOTSPOT_TEMPLATES = [
    "bar chart peak for {t} in {y}",
    "table header {q} {t}",
    "highlighted {t} value {a} million",
    "{r} column in {t} table",
]

PLANT_FACT = "Ledger code {token} reconciles the {t} balance"
PLANT_SECTION = "Ledger code reconciliation"
PLANT_HOTSPOT = "table header ledger code"
PLANT_QUESTION = "Which filing lists ledger code {token}?"


@dataclass(frozen=True)
class Plant:
    page: PageRef
    token: str
    fact: str
    question: str


@dataclass
class SyntheticCorpus:
    seed: int
    pages: list[tuple[PageRef, PageArtifacts]]
    plants: list[Plant]

    def artifacts(self) -> dict[PageRef, PageArtifacts]:
        return dict(self.pages)

    def cases(self) -> list[QaCase]:
        return [
            QaCase(f"plant-{i:04d}", p.question, frozenset({p.page}), p.fact)
            for i, p in enumerate(self.plants, start=1)
        ]

    def write(self, root: str | Path) -> Path:
        """Write ``<root>/<doc_id>/pNNN.page.txt`` fixtures and ``<root>/benchmark.jsonl``."""
        root = Path(root)
        for page, art in self.pages:
            doc_dir = root / page.doc_id
            doc_dir.mkdir(parents=True, exist_ok=True)
            (doc_dir / f"p{page.page_no:03d}.page.txt").write_text(render_labeled_blocks(art), encoding="utf-8")
        write_benchmark(self.cases(), root / "benchmark.jsonl")
        return root


def _fill(rng: random.Random, template: str) -> str:
    return template.format(
        q=rng.choice(QUALIFIERS), q1=rng.choice(QUALIFIERS), q2=rng.choice(QUALIFIERS),
        Q=rng.choice(QUALIFIERS).capitalize(),
        t=rng.choice(TOPICS), t1=rng.choice(TOPICS), t2=rng.choice(TOPICS),
        t3=rng.choice(TOPICS), t4=rng.choice(TOPICS), T=rng.choice(TOPICS),
        r=rng.choice(REGIONS), r1=rng.choice(REGIONS), r2=rng.choice(REGIONS),
        R=rng.choice(REGIONS).capitalize(),
        y=rng.choice(YEARS), a=rng.choice(AMOUNTS), n=rng.randint(1, 20),
    )


def synth_page(
    rng: random.Random,
    sections: tuple[int, int] = (2, 4),
    facts: tuple[int, int] = (5, 8),
    hotspots: tuple[int, int] = (2, 4),
) -> PageArtifacts:
    """One page with S, F, H drawn uniformly from the inclusive ranges given."""
    summary = " ".join(_fill(rng, t) for t in rng.sample(SUMMARY_TEMPLATES, 6))
    return PageArtifacts(
        summary=summary,
        sections=tuple(_fill(rng, rng.choice(SECTION_TEMPLATES)) for _ in range(rng.randint(*sections))),
        facts=tuple(_fill(rng, rng.choice(FACT_TEMPLATES)) for _ in range(rng.randint(*facts))),
        hotspots=tuple(_fill(rng, rng.choice(HOTSPOT_TEMPLATES)) for _ in range(rng.randint(*hotspots))),
    )


def _texts(art: PageArtifacts) -> Iterable[str]:
    yield art.summary
    yield from art.sections
    yield from art.facts
    yield from art.hotspots


def _occupied_slots(tokens: Iterable[str], dims: Sequence[int]) -> dict[int, set[int]]:
    slots: dict[int, set[int]] = {d: set() for d in dims}
    for tok in tokens:
        for d in dims:
            slots[d].add(hash_slot(tok, d)[0])
    return slots


def _draw_token(rng: random.Random, taken: set[str], slots: dict[int, set[int]]) -> str:
    alphabet = string.ascii_lowercase
    for _ in range(10_000):
        tok = (
            "".join(rng.choice(alphabet) for _ in range(3))
            + str(rng.randint(1, 9))
            + "".join(rng.choice(alphabet) for _ in range(2))
        )
        if tok in taken:
            continue
        if all(hash_slot(tok, d)[0] not in s for d, s in slots.items()):
            return tok
    raise RuntimeError("could not draw a collision-free planted token")


def generate_corpus(
    seed: int,
    n_docs: int = 20,
    pages_per_doc: int = 10,
    n_planted: int = 1,
    *,
    sections: tuple[int, int] = (2, 4),
    facts: tuple[int, int] = (5, 8),
    hotspots: tuple[int, int] = (2, 4),
    dims: Sequence[int] = SUPPORTED_DIMS,
) -> SyntheticCorpus:
    """Generate ``n_docs x pages_per_doc`` pages and plant ``n_planted`` code tokens.

    Each plant rewrites the first fact of a distinct random page to carry the
    token, and its first section and hotspot to name the ledger area (shared by
    all planted pages, so only the fact pins the exact page). Vector budgets are
    unaffected.
    """
    rng = random.Random(seed)
    pages = [
        (PageRef(f"doc{d:03d}", p), synth_page(rng, sections, facts, hotspots))
        for d in range(n_docs)
        for p in range(1, pages_per_doc + 1)
    ]
    if n_planted > len(pages):
        raise ValueError("more plants than pages")
    if n_planted and facts[0] < 1:
        raise ValueError("planting needs at least one fact per page")

    vocab: set[str] = set()
    for _, art in pages:
        for text in _texts(art):
            vocab.update(mock_tokens(text))
    for template in (PLANT_FACT, PLANT_SECTION, PLANT_HOTSPOT, PLANT_QUESTION):
        vocab.update(mock_tokens(template.replace("{token}", "").replace("{t}", "")))
    slots = _occupied_slots(vocab, dims)

    plants: list[Plant] = []
    targets = sorted(rng.sample(range(len(pages)), n_planted))
    for idx in targets:
        page, art = pages[idx]
        token = _draw_token(rng, vocab, slots)
        vocab.add(token)
        for d in dims:
            slots[d].add(hash_slot(token, d)[0])
        fact = PLANT_FACT.format(token=token, t=rng.choice(TOPICS))
        pages[idx] = (
            page,
            PageArtifacts(
                art.summary,
                ((PLANT_SECTION,) + art.sections[1:]) if art.sections else (),
                (fact,) + art.facts[1:],
                ((PLANT_HOTSPOT,) + art.hotspots[1:]) if art.hotspots else (),
            ),
        )
        plants.append(Plant(page, token, fact, PLANT_QUESTION.format(token=token)))
    return SyntheticCorpus(seed, pages, plants)
