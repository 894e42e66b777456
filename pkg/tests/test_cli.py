from __future__ import annotations

import json

import httpx
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from pyramidrag import cli
from pyramidrag.clients import ClientSettings, ModelClient
from pyramidrag.evalkit import K_SWEEP
from pyramidrag.model import IndexKind
from pyramidrag.pipeline import Engine
from pyramidrag.pyramid import PyramidIndex
from pyramidrag.service import create_app
from pyramidrag.synth import generate_corpus


@pytest.fixture
def runner(monkeypatch):
    for var in ("CLIENT_MODE", "EMBED_DIM", "INDEX_DIR", "CORPUS_DIR", "BENCHMARK_PATH", "CACHE_DIR"):
        monkeypatch.delenv(var, raising=False)
    return CliRunner()


@pytest.fixture
def built(tmp_path, runner):
    corpus = generate_corpus(21, n_docs=10, pages_per_doc=5, n_planted=8)
    root = corpus.write(tmp_path / "corpus")
    result = runner.invoke(cli.main, ["--dim", "1024", "index", str(root), "--out", str(tmp_path / "idx")])
    assert result.exit_code == 0, result.output
    return corpus, root, tmp_path / "idx", result.output


def test_index_summary(built):
    corpus, _, idx, output = built
    assert "indexed 50 pages" in output and "fusedpage=50" in output and "median_B=" in output
    assert PyramidIndex.load(idx).count(IndexKind.FUSED_PAGE) == 50


def test_index_rerun_identical(built, runner, tmp_path):
    _, root, idx, _ = built
    again = tmp_path / "idx2"
    assert runner.invoke(cli.main, ["--dim", "1024", "index", str(root), "--out", str(again)]).exit_code == 0
    for blob in sorted(idx.glob("*.bin")) + [idx / "records.jsonl"]:
        assert blob.read_bytes() == (again / blob.name).read_bytes()


def test_index_with_cache(tmp_path, runner, fixture_root):
    args = ["--dim", "1024", "--cache-dir", str(tmp_path / "cache"), "index", str(fixture_root), "--out"]
    assert runner.invoke(cli.main, args + [str(tmp_path / "a")]).exit_code == 0
    assert runner.invoke(cli.main, args + [str(tmp_path / "b")]).exit_code == 0
    assert (tmp_path / "a" / "vectors_fact.bin").read_bytes() == (tmp_path / "b" / "vectors_fact.bin").read_bytes()
    assert any((tmp_path / "cache").rglob("*.json"))


def test_missing_corpus_exit_2(runner, tmp_path):
    result = runner.invoke(cli.main, ["index", str(tmp_path / "nope"), "--out", str(tmp_path / "x")])
    assert result.exit_code == 2
    assert json.loads(result.stderr)["error"] == "EmptyCorpus"


def test_query_table_and_k(built, runner):
    corpus, _, idx, _ = built
    plant = corpus.plants[0]
    result = runner.invoke(cli.main, ["--dim", "1024", "query", plant.token, "--index", str(idx), "--k", "5"])
    assert result.exit_code == 0, result.output
    rows = result.output.strip().splitlines()[1:]
    assert rows[0].split()[1:3] == [plant.page.doc_id, str(plant.page.page_no)]
    result = runner.invoke(cli.main, ["--dim", "1024", "query", plant.question, "--index", str(idx), "--k", "5"])
    assert len(result.output.strip().splitlines()[1:]) == 5


def test_query_json_single_index_order(built, runner):
    corpus, _, idx, _ = built
    q = corpus.plants[2].question
    args = ["--dim", "1024", "query", q, "--index", str(idx), "--k", "10", "--indices", "page", "--variants", "0", "--json"]
    result = runner.invoke(cli.main, args)
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output)
    assert all(r["contributing_lists"] == 1 for r in payload["results"])
    scores = [r["rrf_score"] for r in payload["results"]]
    assert scores == [pytest.approx(1 / (60 + i)) for i in range(1, len(scores) + 1)]


def test_query_answer(built, runner):
    corpus, _, idx, _ = built
    plant = corpus.plants[0]
    result = runner.invoke(cli.main, ["--dim", "1024", "query", plant.token, "--index", str(idx), "--k", "3", "--answer", "--json"])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output)
    assert payload["answer"] == plant.fact
    assert payload["pages"][0] == str(plant.page)


def test_query_missing_index(runner, tmp_path):
    result = runner.invoke(cli.main, ["query", "q", "--index", str(tmp_path / "none")])
    assert result.exit_code == 2
    assert json.loads(result.stderr)["error"] == "IndexIoError"


def test_query_bad_variants(built, runner):
    _, _, idx, _ = built
    result = runner.invoke(cli.main, ["--dim", "1024", "query", "q", "--index", str(idx), "--variants", "0,9"])
    assert result.exit_code == 2
    assert json.loads(result.stderr)["error"] == "InvalidConfig"


def test_query_via_server_matches_local(built, runner, monkeypatch):
    corpus, _, idx, _ = built
    app = create_app(Engine(PyramidIndex.load(idx), ModelClient(ClientSettings())))
    test_client = TestClient(app)

    class Proxy:
        def __init__(self, *a, **k):
            pass

        def __enter__(self):
            return self

        def __exit__(self, *exc):
            return None

        def post(self, url, json=None):
            return test_client.post(httpx.URL(url).path, json=json)

    monkeypatch.setattr(cli.httpx, "Client", Proxy)
    q = corpus.plants[3].question
    remote = runner.invoke(cli.main, ["query", q, "--server", "http://svc", "--k", "6", "--json"])
    local = runner.invoke(cli.main, ["--dim", "1024", "query", q, "--index", str(idx), "--k", "6", "--json"])
    assert remote.exit_code == 0, remote.output
    assert json.loads(remote.output) == json.loads(local.output)


def test_eval_writes_reports(built, runner, tmp_path):
    _, root, idx, _ = built
    out = tmp_path / "rep"
    args = ["--dim", "1024", "eval", "--index", str(idx), "--benchmark", str(root / "benchmark.jsonl"), "--out", str(out)]
    result = runner.invoke(cli.main, args + ["--ablations", "indices", "--answer"])
    assert result.exit_code == 0, result.output
    assert len(list(out.glob("*.json"))) == 8
    summary = (out / "summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 8 * len(K_SWEEP)
    first = (out / "summary.csv").read_bytes()
    assert runner.invoke(cli.main, args + ["--ablations", "indices", "--answer"]).exit_code == 0
    assert (out / "summary.csv").read_bytes() == first


def test_eval_dangling_gold(built, runner, tmp_path):
    _, _, idx, _ = built
    bench = tmp_path / "b.jsonl"
    bench.write_text(json.dumps({"case_id": "x", "question": "q", "gold_pages": ["nodoc#1"]}) + "\n")
    result = runner.invoke(cli.main, ["--dim", "1024", "eval", "--index", str(idx), "--benchmark", str(bench)])
    assert result.exit_code == 2
    assert json.loads(result.stderr)["error"] == "DanglingGoldPage"


def test_budget_default(runner):
    result = runner.invoke(cli.main, ["budget"])
    assert result.exit_code == 0
    assert "256.0 KB" in result.output and "262,144" in result.output and "2.5 GB" in result.output


def test_budget_single_config(runner, tmp_path):
    out = tmp_path / "b.csv"
    result = runner.invoke(cli.main, ["budget", "--pages", "1000000", "--dim", "1536", "--vectors", "14", "--csv", str(out)])
    assert result.exit_code == 0
    assert "41 GB" in result.output
    rows = out.read_text().splitlines()
    assert rows[-1].startswith("Pyramid (d=1536),14,1536,2,43008")


def test_budget_bytes_doubles(runner):
    half = json.loads(runner.invoke(cli.main, ["budget", "--json"]).output)
    full = json.loads(runner.invoke(cli.main, ["budget", "--json", "--bytes", "4"]).output)
    assert [r["bytes_per_page"] * 2 for r in half["per_page"]] == [r["bytes_per_page"] for r in full["per_page"]]


def test_gen_fixtures_seeded(runner, tmp_path):
    for name in ("a", "b"):
        assert runner.invoke(cli.main, ["gen-fixtures", str(tmp_path / name), "--seed", "4", "--docs", "2", "--plants", "3"]).exit_code == 0
    a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert a == sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    for rel in a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert len((tmp_path / "a" / "benchmark.jsonl").read_text().splitlines()) == 3


def test_invalid_config_file(runner, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nope": 1}))
    result = runner.invoke(cli.main, ["--config", str(cfg), "query", "q", "--index", str(tmp_path)])
    assert result.exit_code == 2
    assert json.loads(result.stderr)["error"] == "InvalidConfig"


def test_serve_wires_uvicorn(built, runner, monkeypatch):
    _, _, idx, _ = built
    seen = {}
    import uvicorn

    monkeypatch.setattr(uvicorn, "run", lambda app, host, port, log_level: seen.update(app=app, host=host, port=port))
    result = runner.invoke(cli.main, ["--dim", "1024", "serve", "--index", str(idx), "--port", "9123"])
    assert result.exit_code == 0, result.output
    assert seen["port"] == 9123 and seen["host"] == "127.0.0.1"
    assert TestClient(seen["app"]).get("/healthz").json()["pages"] == 50
