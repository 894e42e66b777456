from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pyramidrag.errors import EmptyInput, EmptyQuery, InvalidConfig
from pyramidrag.fusion import FusionConfig, Retriever, fused_result_to_dict, rrf_fuse
from pyramidrag.model import ALL_KINDS, IndexKind, PageRef, RankedList
from pyramidrag.pyramid import hits_to_page_ranking


def brute_rrf(lists, weights, alpha):
    """Exact rational double sum over (page, list), then the documented order."""
    pages = {e.page for ranked in lists.values() for e in ranked.entries}
    rows = []
    for page in pages:
        total = Fraction(0)
        best = None
        count = 0
        for (kind, _j), ranked in lists.items():
            for e in ranked.entries:
                if e.page == page:
                    total += Fraction(weights[kind]) / (Fraction(alpha) + e.rank)
                    best = e.rank if best is None else min(best, e.rank)
                    count += 1
        rows.append((page, total, best, count))
    rows.sort(key=lambda r: (-r[1], r[2], r[0].doc_id, r[0].page_no))
    return rows


def random_lists(rng: random.Random):
    universe = [PageRef(f"d{d}", p) for d in range(rng.randint(1, 5)) for p in range(1, rng.randint(2, 11))]
    universe = universe[:50]
    kinds = rng.sample(list(ALL_KINDS), rng.randint(1, 4))
    variants = rng.sample([0, 1, 2], rng.randint(1, 3))
    lists = {}
    for kind in kinds:
        for j in variants:
            chosen = rng.sample(universe, rng.randint(1, len(universe)))
            lists[(kind, j)] = RankedList.from_pages((p, 1.0 - i * 1e-3) for i, p in enumerate(chosen))
    return lists


def test_rrf_matches_oracle_seeded():
    for seed in range(100):
        rng = random.Random(seed)
        lists = random_lists(rng)
        weights = {k: rng.choice([0.5, 1.0, 1.5, 2.0]) for k in ALL_KINDS}
        cfg = FusionConfig(weights=weights, k_final=200, k_pre=200)
        got = rrf_fuse(lists, cfg)
        want = brute_rrf(lists, weights, 60)
        assert [e.page for e in got.entries] == [r[0] for r in want]
        for e, r in zip(got.entries, want):
            assert abs(e.rrf_score - float(r[1])) <= 1e-12
            assert e.best_rank == r[2] and e.contributing_lists == r[3]


def test_single_list_preserves_order():
    pages = [PageRef("x", i) for i in range(1, 8)]
    ranked = RankedList.from_pages((p, 1.0 - i / 10) for i, p in enumerate(pages))
    out = rrf_fuse({(IndexKind.FACT, 0): ranked}, FusionConfig(k_final=10, k_pre=10))
    assert out.pages() == pages
    assert out.entries[0].rrf_score == pytest.approx(1 / 61)


def test_two_list_example():
    a, b, c = PageRef("a", 1), PageRef("b", 1), PageRef("c", 1)
    lists = {
        (IndexKind.FUSED_PAGE, 0): RankedList.from_pages([(a, 0.9), (b, 0.8)]),
        (IndexKind.FACT, 0): RankedList.from_pages([(b, 0.7), (c, 0.6)]),
    }
    out = rrf_fuse(lists)
    assert out.pages() == [b, a, c]
    assert out.entries[0].rrf_score == pytest.approx(1 / 62 + 1 / 61)
    assert out.entries[1].rrf_score == pytest.approx(1 / 61)


def test_tie_break_by_best_rank_then_page():
    c, d = PageRef("c", 1), PageRef("d", 1)
    # c and d each hold ranks 1 and 2, so their sums are exactly equal
    lists = {
        (IndexKind.SECTION, 0): RankedList.from_pages([(d, 0.9), (c, 0.8)]),
        (IndexKind.FACT, 0): RankedList.from_pages([(c, 0.9), (d, 0.8)]),
    }
    out = rrf_fuse(lists)
    assert out.pages() == [c, d]  # equal score, equal best rank -> doc order


def test_truncates_to_k_final():
    pages = [PageRef("x", i) for i in range(1, 30)]
    ranked = RankedList.from_pages((p, 1.0) for p in pages)
    out = rrf_fuse({(IndexKind.FACT, 0): ranked}, FusionConfig(k_final=5, k_pre=5))
    assert len(out) == 5


def test_empty_input():
    with pytest.raises(EmptyInput):
        rrf_fuse({})


@settings(max_examples=60)
@given(st.integers(0, 1_000_000))
def test_list_order_does_not_matter(seed):
    rng = random.Random(seed)
    lists = random_lists(rng)
    keys = list(lists)
    rng.shuffle(keys)
    shuffled = {k: lists[k] for k in keys}
    cfg = FusionConfig(k_final=200)
    a, b = rrf_fuse(lists, cfg), rrf_fuse(shuffled, cfg)
    assert [(e.page, e.rrf_score) for e in a.entries] == [(e.page, e.rrf_score) for e in b.entries]


@settings(max_examples=60)
@given(st.integers(0, 1_000_000))
def test_fused_scores_bounded_and_sorted(seed):
    lists = random_lists(random.Random(seed))
    out = rrf_fuse(lists, FusionConfig(k_final=200))
    scores = [e.rrf_score for e in out.entries]
    assert scores == sorted(scores, reverse=True)
    assert all(0 < s <= len(lists) / 61 + 1e-15 for s in scores)


# -- config ------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(InvalidConfig):
        FusionConfig(k_pre=10, k_final=20)
    with pytest.raises(InvalidConfig):
        FusionConfig(enabled_indices=())
    with pytest.raises(InvalidConfig):
        FusionConfig(enabled_variants=(3,))
    with pytest.raises(InvalidConfig):
        FusionConfig(alpha=0)
    with pytest.raises(InvalidConfig):
        FusionConfig.from_dict({"alhpa": 60})


def test_config_round_trip_and_digest():
    cfg = FusionConfig.from_dict({"enabled_indices": ["fact", "page"], "weights": {"facts": 2}})
    assert cfg.enabled_indices == (IndexKind.FUSED_PAGE, IndexKind.FACT)
    assert cfg.weights[IndexKind.FACT] == 2.0 and cfg.weights[IndexKind.SECTION] == 1.0
    assert FusionConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.digest() == FusionConfig.from_dict(cfg.to_dict()).digest()
    assert cfg.digest() != FusionConfig().digest()
    assert len(cfg.digest()) == 12


# -- retriever -------------------------------------------------------------------


def test_retriever_single_cell_matches_direct_search(small_index, embedder):
    retriever = Retriever(small_index, embedder)
    question = "ledger code reconciliation balance"
    cfg = FusionConfig(enabled_indices=("page",), enabled_variants=(0,), k_final=10, k_pre=50, min_score=None)
    result = retriever.retrieve(question, cfg)
    direct = hits_to_page_ranking(small_index.search(IndexKind.FUSED_PAGE, embedder.embed(question), 50))
    assert result.pages() == direct.pages()[:10]


def test_retriever_finds_planted_page(small_index, small_corpus, embedder):
    retriever = Retriever(small_index, embedder)
    for plant in small_corpus.plants:
        assert retriever.retrieve(plant.token).pages()[0] == plant.page


def test_retriever_records_failed_cells(small_index, embedder, monkeypatch):
    retriever = Retriever(small_index, embedder)
    real = small_index.search

    def flaky(kind, q, k):
        if kind is IndexKind.SECTION:
            raise RuntimeError("section shard down")
        return real(kind, q, k)

    monkeypatch.setattr(small_index, "search", flaky)
    result = retriever.retrieve("ledger code")
    assert set(result.failed_cells) == {(IndexKind.SECTION, j) for j in range(3)}
    assert len(result.lists) == 9
    payload = fused_result_to_dict(result)
    assert "section:q0" in payload["failed_cells"]


def test_retriever_all_cells_failing(small_index, embedder, monkeypatch):
    monkeypatch.setattr(small_index, "search", lambda *a: (_ for _ in ()).throw(RuntimeError("down")))
    with pytest.raises(EmptyInput):
        Retriever(small_index, embedder).retrieve("anything")


def test_retriever_empty_question(small_index, embedder):
    with pytest.raises(EmptyQuery):
        Retriever(small_index, embedder).retrieve("  ")


def test_retriever_dim_mismatch(small_index, mock_client):
    with pytest.raises(InvalidConfig):
        Retriever(small_index, mock_client.embedder(1536))


def test_fused_result_json_shape(small_index, embedder):
    result = Retriever(small_index, embedder).retrieve("ledger code", FusionConfig(k_final=3, k_pre=200))
    payload = fused_result_to_dict(result, include_lists=True)
    assert [r["rank"] for r in payload["results"]] == [1, 2, 3]
    assert set(payload["results"][0]) == {"rank", "doc_id", "page_no", "rrf_score", "contributing_lists"}
    assert len(payload["variants"]) == 3
    assert len(payload["lists"]) == 12
