"""Acceptance criteria 1-11, each at its stated tolerance and time limit.

Each test records one ``criterion N: PASS|FAIL ...`` line, printed in the
pytest terminal summary, before asserting.
"""

from __future__ import annotations

import json
import math
import random
import statistics
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from pyramidrag import cli, evalkit
from pyramidrag.clients import ClientSettings, Embedder, ModelClient
from pyramidrag.fusion import FusionConfig, Retriever, rrf_fuse
from pyramidrag.lateint import maxsim_macs, maxsim_score, pool_patches, synth_grid, synth_query
from pyramidrag.model import ALL_KINDS, PageRef, RankedList
from pyramidrag.pyramid import PyramidIndex, build_index
from pyramidrag.synth import TOPICS, generate_corpus

README = Path(__file__).resolve().parents[1] / "README.md"


@pytest.fixture
def check(acceptance_log):
    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        acceptance_log.append(line)
        print(line)
        assert ok, line

    return record


def test_criterion_01_cost_model_golden(check):
    t0 = time.perf_counter()
    out = CliRunner().invoke(cli.main, ["budget", "--json"])
    elapsed = time.perf_counter() - t0
    data = json.loads(out.output)
    per_page = [r["bytes_per_page"] for r in data["per_page"]]
    sizes = {r["method"]: r for r in data["scaling"]}
    expected_sizes = {
        "ColPali full": ["25 MB", "250 MB", "2.5 GB", "250 GB"],
        "ColPali pooled": ["8.3 MB", "83 MB", "830 MB", "83 GB"],
        "Pyramid (d=1024)": ["2.7 MB", "27 MB", "270 MB", "27 GB"],
        "Pyramid (d=1536)": ["4.1 MB", "41 MB", "410 MB", "41 GB"],
        "Pyramid (d=3072)": ["8.2 MB", "82 MB", "820 MB", "82 GB"],
    }
    pages = (100, 1000, 10_000, 1_000_000)
    strings_ok = all([sizes[m][f"size_{p}"] for p in pages] == v for m, v in expected_sizes.items())
    raw_ok = all(
        sizes[m][f"bytes_{p}"] == p * b for m, b in zip(expected_sizes, per_page) for p in pages
    ) and sizes["ColPali full"]["bytes_10000"] == 2_621_440_000
    ok = (
        out.exit_code == 0
        and per_page == [262_144, 87_296, 28_672, 43_008, 86_016]
        and strings_ok
        and raw_ok
        and elapsed < 1.0
    )
    check(1, ok, f"per-page bytes {per_page}, 20/20 scaling cells match, {elapsed:.3f}s")


def test_criterion_02_maxsim_macs(check):
    macs = maxsim_macs(20, 1024, 128)
    check(2, macs == 2_621_440, f"maxsim_macs(20, 1024, 128) = {macs:,}")


def _naive_maxsim(q: np.ndarray, vectors: np.ndarray) -> float:
    total = 0.0
    for qi in q:
        best = -math.inf
        for p in vectors:
            s = 0.0
            for a, b in zip(qi, p):
                s += float(a) * float(b)
            best = max(best, s)
        total += best
    return total


def test_criterion_03_maxsim_oracle(check):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        q_len, h, w, d = int(rng.integers(1, 33)), int(rng.integers(1, 17)), int(rng.integers(1, 17)), int(rng.integers(1, 65))
        grid = synth_grid(seed, h, w, d)
        q = synth_query(seed + 10_000, q_len, d)
        worst = max(worst, abs(maxsim_score(q, grid) - _naive_maxsim(q, grid.vectors)))
    elapsed = time.perf_counter() - t0
    check(3, worst <= 1e-6 and elapsed < 10.0, f"100 instances, max |diff| {worst:.2e}, {elapsed:.2f}s")


def test_criterion_04_pooling_counts(check):
    grid = synth_grid(0, 32, 32, 16)
    block = pool_patches(grid, 3, "block2d").num_patches
    seq = pool_patches(grid, 3, "seq1d").num_patches
    check(4, block == 121 and seq == 342, f"block2d 32x32/3 -> {block}, seq1d 1024/3 -> {seq}")


def _oracle_rrf(lists, alpha=60):
    pages = {e.page for r in lists.values() for e in r.entries}
    rows = []
    for page in pages:
        total, best = Fraction(0), None
        for ranked in lists.values():
            for e in ranked.entries:
                if e.page == page:
                    total += Fraction(1) / (alpha + e.rank)
                    best = e.rank if best is None else min(best, e.rank)
        rows.append((page, total, best))
    rows.sort(key=lambda r: (-r[1], r[2], r[0].doc_id, r[0].page_no))
    return rows


def test_criterion_05_rrf_oracle(check):
    t0 = time.perf_counter()
    mismatches = 0
    worst = 0.0
    for seed in range(100):
        rng = random.Random(seed)
        universe = [PageRef(f"d{rng.randint(0, 9)}", rng.randint(1, 20)) for _ in range(80)]
        universe = sorted(set(universe))[:50]
        lists = {}
        for kind in rng.sample(list(ALL_KINDS), rng.randint(1, 4)):
            for j in rng.sample([0, 1, 2], rng.randint(1, 3)):
                chosen = rng.sample(universe, rng.randint(1, len(universe)))
                lists[(kind, j)] = RankedList.from_pages((p, -i) for i, p in enumerate(chosen))
        got = rrf_fuse(lists, FusionConfig(k_final=200))
        want = _oracle_rrf(lists)
        if [e.page for e in got.entries] != [r[0] for r in want]:
            mismatches += 1
        for e, r in zip(got.entries, want):
            worst = max(worst, abs(e.rrf_score - float(r[1])))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and worst <= 1e-12 and elapsed < 5.0
    check(5, ok, f"100 instances, order mismatches {mismatches}, max |diff| {worst:.1e}, {elapsed:.2f}s")


def test_criterion_06_vector_budget(check):
    corpus = generate_corpus(2024, n_docs=50, pages_per_doc=10, n_planted=0)
    index = build_index(corpus.pages, Embedder(ModelClient(ClientSettings()), 1024))
    budgets = index.page_budgets()
    exact = all(budgets[p] == 1 + len(a.sections) + len(a.facts) + len(a.hotspots) for p, a in corpus.pages)
    med = statistics.median(budgets.values())
    ok = len(budgets) == 500 and exact and 11 <= med <= 17
    check(6, ok, f"500 pages, every page 1+S+F+H: {exact}, median B = {med}")


def test_criterion_07_planted_relevance(check):
    t0 = time.perf_counter()
    client = ModelClient(ClientSettings())
    embedder = Embedder(client, 1536)
    rank1 = 0
    recall10 = 0
    for seed in range(100):
        corpus = generate_corpus(seed, n_docs=20, pages_per_doc=10, n_planted=1)
        plant = corpus.plants[0]
        result = Retriever(build_index(corpus.pages, embedder), embedder).retrieve(plant.token)
        pages = result.pages()
        rank1 += pages[:1] == [plant.page]
        recall10 += evalkit.recall_at_k(pages, {plant.page}, 10)
    elapsed = time.perf_counter() - t0
    ok = rank1 >= 99 and recall10 == 100 and elapsed < 60.0
    check(7, ok, f"planted page at rank 1 in {rank1}/100, Recall@10 = {recall10 / 100:.2f}, {elapsed:.1f}s")


def test_criterion_08_ablation_direction(check):
    embedder = Embedder(ModelClient(ClientSettings()), 1024)
    totals = {"page-only": 0.0, "page+facts": 0.0, "full-pyramid": 0.0}
    n = 0
    for seed in range(5):
        corpus = generate_corpus(100 + seed, n_docs=20, pages_per_doc=10, n_planted=20)
        retriever = Retriever(build_index(corpus.pages, embedder), embedder)
        reports = evalkit.run_eval(retriever, corpus.cases(), FusionConfig(), evalkit.index_ablations())
        by_name = {r.name: r for r in reports}
        for name in totals:
            totals[name] += by_name[name].row(10).recall * by_name[name].n
        n += reports[0].n
    r = {k: v / n for k, v in totals.items()}
    ok = r["full-pyramid"] >= r["page-only"] and r["page+facts"] > r["page-only"]
    detail = ", ".join(f"{k} R@10 {v:.3f}" for k, v in r.items())
    check(8, ok, f"{n} planted-fact cases: {detail}")


def test_criterion_09_persistence_round_trip(check, tmp_path):
    corpus = generate_corpus(77, n_docs=10, pages_per_doc=10, n_planted=5)
    embedder = Embedder(ModelClient(ClientSettings()), 1536)
    index = build_index(corpus.pages, embedder)
    loaded = PyramidIndex.load(index.save(tmp_path / "idx"))
    before, after = Retriever(index, embedder), Retriever(loaded, embedder)
    rng = random.Random(9)
    cfg = FusionConfig(k_final=10)
    identical = 0
    for _ in range(20):
        q = " ".join(rng.sample(TOPICS, 3))
        a = [(e.page, e.rrf_score, e.contributing_lists) for e in before.retrieve(q, cfg).entries]
        b = [(e.page, e.rrf_score, e.contributing_lists) for e in after.retrieve(q, cfg).entries]
        identical += a == b and len(a) == 10
    check(9, identical == 20, f"{identical}/20 random queries give bit-identical top-10 after save/load (100 pages)")


def test_criterion_10_metrics_suite(check):
    pages = [PageRef("d", i) for i in range(1, 11)]
    ndcg = evalkit.ndcg_at_k(pages, {pages[1]}, 10)
    mrr = evalkit.mrr([(pages, {pages[0]}), (pages, {pages[1]})])
    rng = random.Random(10)
    monotone = True
    for _ in range(1000):
        ranking = [PageRef("d", i) for i in rng.sample(range(1, 200), rng.randint(0, 120))]
        gold = {PageRef("d", i) for i in rng.sample(range(1, 200), rng.randint(1, 4))}
        values = [evalkit.recall_at_k(ranking, gold, k) for k in range(1, 121)]
        monotone &= all(x <= y for x, y in zip(values, values[1:]))
    ok = abs(ndcg - 1 / math.log2(3)) <= 1e-9 and mrr == 0.75 and monotone
    check(10, ok, f"nDCG(single gold @2) = {ndcg:.10f}, MRR(1,2) = {mrr}, Recall@K monotone over 1000 lists: {monotone}")


def test_criterion_11_non_reproducibility_and_table_shape(check, small_index, small_corpus):
    text = README.read_text(encoding="utf-8") if README.exists() else ""
    statement = "not reproducible" in text and "FinanceBench" in text and "TAT-DQA" in text
    embedder = Embedder(ModelClient(ClientSettings()), small_index.dim)
    reports = evalkit.run_eval(Retriever(small_index, embedder), small_corpus.cases(), FusionConfig(), evalkit.standard_ablations())
    sweep = evalkit.ksweep_table(reports[-1]).splitlines()
    sweep_ok = sweep[0].split() == ["K", "Recall", "nDCG", "Acc.", "AvgTok", "n"] and [
        int(line.split()[0]) for line in sweep[1:]
    ] == [1, 5, 10, 20, 50, 100]
    index_table = evalkit.ablation_table(reports[:8]).splitlines()
    variant_table = evalkit.ablation_table(reports[8:]).splitlines()
    ablation_ok = (
        index_table[0].split() == ["Configuration", "Recall@10", "nDCG@10", "Accuracy"]
        and len(index_table) == 9
        and len(variant_table) == 5
    )
    ok = statement and sweep_ok and ablation_ok
    check(11, ok, f"README statement: {statement}, K-sweep shape: {sweep_ok}, ablation tables 8+4 rows: {ablation_ok}")
