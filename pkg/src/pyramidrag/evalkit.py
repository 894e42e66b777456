"""Retrieval metrics, ablation sweeps and report emission.

Relevance is binary (a page is gold or not). Answer accuracy is case-insensitive
exact match against ``gold_answer`` and is reported as EM-only.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .corpus import QaCase
from .errors import EmptyGold
from .fusion import FusedResult, FusionConfig, Retriever
from .model import PageRef

logger = logging.getLogger(__name__)

K_SWEEP = (1, 5, 10, 20, 50, 100)
ACCURACY_MODE = "EM-only"

Ranking = FusedResult | Sequence[PageRef]


def _pages(result: Ranking) -> list[PageRef]:
    return result.pages() if isinstance(result, FusedResult) else list(result)


def _check(gold: Iterable[PageRef], k: int) -> frozenset[PageRef]:
    gold = frozenset(gold)
    if not gold:
        raise EmptyGold("gold page set is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    return gold


def recall_at_k(result: Ranking, gold: Iterable[PageRef], k: int) -> int:
    """1 if any gold page is in the top ``k``, else 0."""
    gold = _check(gold, k)
    return int(any(p in gold for p in _pages(result)[:k]))


def ndcg_at_k(result: Ranking, gold: Iterable[PageRef], k: int) -> float:
    gold = _check(gold, k)
    dcg = math.fsum(1.0 / math.log2(rank + 1) for rank, p in enumerate(_pages(result)[:k], start=1) if p in gold)
    if dcg == 0.0:
        return 0.0
    idcg = math.fsum(1.0 / math.log2(rank + 1) for rank in range(1, min(k, len(gold)) + 1))
    return dcg / idcg


def reciprocal_rank(result: Ranking, gold: Iterable[PageRef]) -> float:
    gold = _check(gold, 1)
    for rank, p in enumerate(_pages(result), start=1):
        if p in gold:
            return 1.0 / rank
    return 0.0


def mrr(results: Sequence[tuple[Ranking, Iterable[PageRef]]]) -> float:
    if not results:
        raise ValueError("mrr needs at least one case")
    return math.fsum(reciprocal_rank(r, g) for r, g in results) / len(results)


def count_tokens(text: str) -> int:
    """Approximate token count: one token per 4 UTF-8 bytes, rounded up."""
    return -(-len(text.encode("utf-8")) // 4)


def exact_match(answer: str | None, gold: str | None) -> bool:
    if answer is None or gold is None:
        return False
    return answer.strip().casefold() == gold.strip().casefold()


# ---------------------------------------------------------------------------
# ablations


INDEX_ABLATIONS: list[tuple[str, list[str]]] = [
    ("page-only", ["page"]),
    ("page+sections", ["page", "section"]),
    ("page+facts", ["page", "fact"]),
    ("page+hotspots", ["page", "hotspot"]),
    ("page+sec+facts", ["page", "section", "fact"]),
    ("page+sec+hot", ["page", "section", "hotspot"]),
    ("page+facts+hot", ["page", "fact", "hotspot"]),
    ("full-pyramid", ["page", "section", "fact", "hotspot"]),
]
VARIANT_ABLATIONS: list[tuple[str, list[int]]] = [
    ("original", [0]),
    ("orig+keywords", [0, 1]),
    ("orig+synonyms", [0, 2]),
    ("all-variants", [0, 1, 2]),
]


@dataclass(frozen=True)
class Ablation:
    name: str
    overrides: Mapping[str, Any] = field(default_factory=dict)


def index_ablations() -> list[Ablation]:
    return [Ablation(name, {"enabled_indices": kinds}) for name, kinds in INDEX_ABLATIONS]


def variant_ablations() -> list[Ablation]:
    return [Ablation(name, {"enabled_variants": v}) for name, v in VARIANT_ABLATIONS]


def standard_ablations() -> list[Ablation]:
    """Index-subset rows then query-variant rows (full pyramid, all variants is the last of each)."""
    return index_ablations() + variant_ablations()


def parse_ablation_spec(spec: str | os.PathLike | None) -> list[Ablation]:
    """``indices`` / ``variants`` / ``standard`` / ``none``, or a JSON file of ``[{name, overrides}]``."""
    if spec is None or str(spec) == "standard":
        return standard_ablations()
    if str(spec) == "indices":
        return index_ablations()
    if str(spec) == "variants":
        return variant_ablations()
    if str(spec) == "none":
        return [Ablation("base")]
    with open(spec, encoding="utf-8") as fh:
        rows = json.load(fh)
    return [Ablation(r["name"], r.get("overrides", {})) for r in rows]


# ---------------------------------------------------------------------------
# reports


@dataclass
class KRow:
    k: int
    recall: float
    ndcg: float
    accuracy: float | None
    avg_tokens: float
    n: int


@dataclass
class EvalReport:
    name: str
    config: dict[str, Any]
    config_hash: str
    n: int
    rows: list[KRow]
    mrr: float
    latency_ms: dict[str, float]
    failures: dict[str, str] = field(default_factory=dict)
    accuracy_mode: str = ACCURACY_MODE

    def row(self, k: int) -> KRow:
        for r in self.rows:
            if r.k == k:
                return r
        raise KeyError(k)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "config": self.config,
            "config_hash": self.config_hash,
            "n": self.n,
            "mrr": self.mrr,
            "rows": [r.__dict__ for r in self.rows],
            "latency_ms": self.latency_ms,
            "failures": self.failures,
            "accuracy_mode": self.accuracy_mode,
        }


def _percentile(values: Sequence[float], q: float) -> float:
    if not values:
        return 0.0
    xs = sorted(values)
    pos = (len(xs) - 1) * q
    lo, hi = math.floor(pos), math.ceil(pos)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def evaluate_config(
    retriever: Retriever,
    cases: Sequence[QaCase],
    cfg: FusionConfig,
    *,
    name: str = "base",
    ks: Sequence[int] = K_SWEEP,
    answer_fn: Callable[[str, list[PageRef]], str] | None = None,
) -> EvalReport:
    """Run every case through ``retriever`` with ``cfg`` and aggregate one report.

    Cases are processed in ``case_id`` order. A case whose retrieval raises is
    recorded in ``failures`` and scored as an empty ranking.
    """
    ks = sorted(set(ks))
    if cfg.k_final < ks[-1]:
        cfg = cfg.with_overrides({"k_final": ks[-1], "k_pre": max(cfg.k_pre, ks[-1])})
    ordered = sorted(cases, key=lambda c: c.case_id)
    if not ordered:
        raise ValueError("no cases to evaluate")

    recall = {k: 0 for k in ks}
    ndcg = {k: 0.0 for k in ks}
    tokens = {k: 0 for k in ks}
    correct = {k: 0 for k in ks}
    answerable = 0
    rr: list[float] = []
    latencies: list[float] = []
    failures: dict[str, str] = {}

    for case in ordered:
        try:
            result = retriever.retrieve(case.question, cfg)
            pages = result.pages()
            latencies.append(result.timings_ms.get("total", 0.0))
        except Exception as exc:
            failures[case.case_id] = f"{type(exc).__name__}: {exc}"
            logger.warning("case %s failed: %s", case.case_id, exc)
            pages = []
        rr.append(reciprocal_rank(pages, case.gold_pages))
        page_tokens = [count_tokens(retriever.index.page_text(p)) for p in pages]
        for k in ks:
            recall[k] += recall_at_k(pages, case.gold_pages, k)
            ndcg[k] += ndcg_at_k(pages, case.gold_pages, k)
            tokens[k] += sum(page_tokens[:k])
        if answer_fn is not None and case.gold_answer is not None:
            answerable += 1
            for k in ks:
                if not pages:
                    continue
                try:
                    answer = answer_fn(case.question, pages[:k])
                except Exception as exc:
                    failures.setdefault(case.case_id, f"answer: {type(exc).__name__}: {exc}")
                    continue
                correct[k] += exact_match(answer, case.gold_answer)

    n = len(ordered)
    rows = [
        KRow(
            k=k,
            recall=recall[k] / n,
            ndcg=ndcg[k] / n,
            accuracy=(correct[k] / answerable) if answerable else None,
            avg_tokens=tokens[k] / n,
            n=n,
        )
        for k in ks
    ]
    latency = {
        "mean": statistics.fmean(latencies) if latencies else 0.0,
        "p50": _percentile(latencies, 0.50),
        "p90": _percentile(latencies, 0.90),
        "p99": _percentile(latencies, 0.99),
    }
    return EvalReport(
        name=name,
        config=cfg.to_dict(),
        config_hash=cfg.digest(),
        n=n,
        rows=rows,
        mrr=math.fsum(rr) / n,
        latency_ms=latency,
        failures=failures,
    )


def run_eval(
    retriever: Retriever,
    cases: Sequence[QaCase],
    base_cfg: FusionConfig | None = None,
    ablations: Sequence[Ablation] | None = None,
    *,
    ks: Sequence[int] = K_SWEEP,
    answer_fn: Callable[[str, list[PageRef]], str] | None = None,
) -> list[EvalReport]:
    """One :class:`EvalReport` per ablation (or a single ``base`` report when none are given)."""
    base_cfg = base_cfg or FusionConfig()
    ablations = list(ablations) if ablations else [Ablation("base")]
    return [
        evaluate_config(retriever, cases, base_cfg.with_overrides(a.overrides), name=a.name, ks=ks, answer_fn=answer_fn)
        for a in ablations
    ]


def page_answerer(client: Any, load_page: Callable[[PageRef], bytes]) -> Callable[[str, list[PageRef]], str]:
    """Adapt ``client.generate_answer`` to take page refs, loading page bytes on demand."""

    def answer(question: str, pages: list[PageRef]) -> str:
        return client.generate_answer(question, [load_page(p) for p in pages])

    return answer


# -- emission ---------------------------------------------------------------

CSV_COLUMNS = ["config", "config_hash", "K", "Recall", "nDCG", "Acc", "AvgTok", "n", "MRR"]


def _fmt(x: float | None, digits: int = 4) -> str:
    return "" if x is None else f"{x:.{digits}f}"


def report_csv(reports: Sequence[EvalReport]) -> str:
    """One row per (config, K). Contains no timing data, so reruns are byte-identical."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        for r in rep.rows:
            w.writerow(
                [rep.name, rep.config_hash, r.k, _fmt(r.recall), _fmt(r.ndcg), _fmt(r.accuracy), _fmt(r.avg_tokens, 2), r.n, _fmt(rep.mrr)]
            )
    return buf.getvalue()


def ksweep_table(report: EvalReport) -> str:
    """K | Recall | nDCG | Acc. | AvgTok | n, one line per cutoff."""
    lines = [f"{'K':>4} {'Recall':>8} {'nDCG':>8} {'Acc.':>8} {'AvgTok':>12} {'n':>6}"]
    for r in report.rows:
        acc = _fmt(r.accuracy) or "--"
        lines.append(f"{r.k:>4} {r.recall:>8.4f} {r.ndcg:>8.4f} {acc:>8} {r.avg_tokens:>12,.2f} {r.n:>6,}")
    return "\n".join(lines)


def ablation_table(reports: Sequence[EvalReport], k: int = 10) -> str:
    """Configuration | Recall@k | nDCG@k | Accuracy, one line per report."""
    width = max([len("Configuration")] + [len(r.name) for r in reports])
    lines = [f"{'Configuration':<{width}} {f'Recall@{k}':>10} {f'nDCG@{k}':>9} {'Accuracy':>9}"]
    for rep in reports:
        row = rep.row(k)
        lines.append(f"{rep.name:<{width}} {row.recall:>10.4f} {row.ndcg:>9.4f} {_fmt(row.accuracy) or '--':>9}")
    return "\n".join(lines)


def write_reports(reports: Sequence[EvalReport], out_dir: str | os.PathLike) -> list[Path]:
    """Write ``<name>-<hash>.csv``/``.json`` per config plus ``summary.csv`` for all."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for rep in reports:
        stem = f"{rep.name}-{rep.config_hash}"
        csv_path = out / f"{stem}.csv"
        csv_path.write_text(report_csv([rep]), encoding="utf-8")
        json_path = out / f"{stem}.json"
        json_path.write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written += [csv_path, json_path]
    summary = out / "summary.csv"
    summary.write_text(report_csv(reports), encoding="utf-8")
    written.append(summary)
    return written
