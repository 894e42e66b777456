"""Command-line entry point: ``pyramidrag <index|query|eval|budget|serve|gen-fixtures>``.

Every command takes the shared options (``--config``, ``--mode``, ``--dim``,
``--cache-dir``) which layer over env vars and the JSON config file. Failures
print ``{"error": <class>, "message": ...}`` to stderr and exit nonzero.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable

import click
import httpx

from . import evalkit, lateint
from .clients import ModelClient
from .config import AppConfig, load_config
from .corpus import load_benchmark
from .errors import (
    DanglingGoldPage,
    EmptyCorpus,
    FormatVersionMismatch,
    IndexIoError,
    InvalidConfig,
    PyramidRagError,
    SchemaError,
)
from .fusion import fused_result_to_dict
from .pipeline import Engine, build_from_corpus
from .pyramid import PyramidIndex
from .synth import generate_corpus

logger = logging.getLogger("pyramidrag")

# errors caused by the caller's inputs exit 2; everything else exits 1
_INPUT_ERRORS = (EmptyCorpus, SchemaError, DanglingGoldPage, InvalidConfig, IndexIoError, FormatVersionMismatch)


class CliFailure(Exception):
    def __init__(self, code: str, message: str, exit_code: int = 1):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


def _fail(code: str, message: str, exit_code: int) -> None:
    click.echo(json.dumps({"error": code, "message": message}), err=True)
    sys.exit(exit_code)


def structured_errors(fn: Callable) -> Callable:
    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except CliFailure as exc:
            _fail(exc.code, str(exc), exc.exit_code)
        except PyramidRagError as exc:
            _fail(exc.code, str(exc), 2 if isinstance(exc, _INPUT_ERRORS) else 1)
        except httpx.HTTPError as exc:
            _fail("ServiceError", str(exc), 1)

    return wrapper


def _config(ctx: click.Context, **flags: Any) -> AppConfig:
    base = ctx.obj or {}
    overrides = {
        "client.mode": base.get("mode"),
        "dim": base.get("dim"),
        "paths.cache": base.get("cache_dir"),
    }
    overrides.update(flags)
    return load_config(base.get("config"), overrides)


def _csv_list(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def _require(value: str | None, what: str) -> str:
    if not value:
        raise CliFailure("InvalidConfig", f"no {what} given (flag, env var or config file)", 2)
    return value


def _print_results(payload: dict, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(payload, indent=2, ensure_ascii=False))
        return
    click.echo(f"{'rank':>4}  {'doc':<16} {'page':>5}  {'rrf_score':>10}  lists")
    for row in payload["results"]:
        click.echo(
            f"{row['rank']:>4}  {row['doc_id']:<16} {row['page_no']:>5}  {row['rrf_score']:>10.6f}  {row['contributing_lists']}"
        )
    if payload.get("failed_cells"):
        click.echo(f"failed cells: {', '.join(sorted(payload['failed_cells']))}", err=True)
    if "answer" in payload:
        click.echo(f"\nanswer: {payload['answer']}")
        click.echo(f"pages:  {', '.join(payload['pages'])}")


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config file.")
@click.option("--mode", type=click.Choice(["mock", "live"]), help="Model client mode.")
@click.option("--dim", type=int, help="Embedding dimension (1024, 1536 or 3072).")
@click.option("--cache-dir", type=click.Path(file_okay=False), help="Response cache directory.")
@click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug).")
@click.version_option(package_name="pyramidrag")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, mode: str | None, dim: int | None, cache_dir: str | None, verbose: int) -> None:
    """Page-level pyramid retrieval: build, query, evaluate and serve."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    ctx.obj = {"config": config_path, "mode": mode, "dim": dim, "cache_dir": cache_dir}


@main.command("index")
@click.argument("corpus", required=False, type=click.Path())
@click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Index output directory.")
@click.option("--json", "as_json", is_flag=True, help="Print the summary as JSON.")
@click.pass_context
@structured_errors
def index_cmd(ctx: click.Context, corpus: str | None, out_dir: str | None, as_json: bool) -> None:
    """Extract artifacts for every page under CORPUS and build the four indices."""
    cfg = _config(ctx, **{"paths.corpus": corpus, "paths.index": out_dir})
    corpus_root = cfg.paths.corpus
    if not corpus_root or not Path(corpus_root).is_dir():
        raise EmptyCorpus(f"corpus directory {corpus_root!r} does not exist")
    target = _require(cfg.paths.index, "index output directory (--out)")
    with ModelClient(cfg.client_settings()) as client:
        _, summary = build_from_corpus(corpus_root, target, client, cfg.dim)
    click.echo(json.dumps(summary.to_dict(), indent=2) if as_json else summary.line())


@main.command("query")
@click.argument("question")
@click.option("--index", "index_dir", type=click.Path(file_okay=False), help="Index directory.")
@click.option("--server", help="Query a running service at this base URL instead of a local index.")
@click.option("--k", type=int, default=10, show_default=True, help="Pages to return.")
@click.option("--indices", help="Comma list of indices to fuse (page,section,fact,hotspot).")
@click.option("--variants", help="Comma list of query variants (0=original,1=keywords,2=synonyms).")
@click.option("--answer", "with_answer", is_flag=True, help="Also generate an answer from the top-k pages.")
@click.option("--lists", "include_lists", is_flag=True, help="Include per-list rankings (JSON output).")
@click.option("--json", "as_json", is_flag=True, help="Print JSON instead of a table.")
@click.pass_context
@structured_errors
def query_cmd(
    ctx: click.Context,
    question: str,
    index_dir: str | None,
    server: str | None,
    k: int,
    indices: str | None,
    variants: str | None,
    with_answer: bool,
    include_lists: bool,
    as_json: bool,
) -> None:
    """Retrieve the top-k pages for QUESTION."""
    overrides: dict[str, Any] = {}
    if indices:
        overrides["enabled_indices"] = _csv_list(indices)
    if variants:
        try:
            overrides["enabled_variants"] = [int(v) for v in _csv_list(variants) or []]
        except ValueError:
            raise CliFailure("InvalidConfig", f"bad --variants {variants!r}", 2) from None
    if server:
        payload = _remote_query(server, question, k, overrides, with_answer, include_lists)
        _print_results(payload, as_json)
        return

    cfg = _config(ctx, **{"paths.index": index_dir})
    target = _require(cfg.paths.index, "index directory (--index)")
    with ModelClient(cfg.client_settings()) as client:
        engine = Engine.open(target, client, cfg.fusion_config())
        result = engine.query(question, k, overrides)
        payload = fused_result_to_dict(result, include_lists=include_lists)
        if with_answer:
            pages = result.pages()[:k]
            payload["answer"] = engine.answer(question, pages)
            payload["pages"] = [str(p) for p in pages]
    _print_results(payload, as_json)


def _remote_query(server: str, question: str, k: int, overrides: dict, with_answer: bool, include_lists: bool) -> dict:
    base = server.rstrip("/")
    with httpx.Client(timeout=120.0) as http:
        body: dict[str, Any] = {"question": question, "k": k, "config": overrides}
        if with_answer:
            resp = http.post(f"{base}/answer", json=body)
        else:
            resp = http.post(f"{base}/query", json={**body, "include_lists": include_lists})
        if resp.status_code != 200:
            try:
                err = resp.json()
            except ValueError:
                err = {"error": "ServiceError", "message": resp.text}
            raise CliFailure(err.get("error", "ServiceError"), err.get("message", resp.text), 1)
        return resp.json()


@main.command("eval")
@click.option("--index", "index_dir", type=click.Path(file_okay=False), help="Index directory.")
@click.option("--benchmark", type=click.Path(dir_okay=False), help="JSON-Lines benchmark file.")
@click.option(
    "--ablations",
    default="standard",
    show_default=True,
    help="standard | indices | variants | none | path to a JSON list of {name, overrides}.",
)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="reports", show_default=True)
@click.option("--answer", "with_answer", is_flag=True, help="Score exact-match answer accuracy (needs gold_answer).")
@click.option("--table-k", type=int, default=10, show_default=True, help="Cutoff for the ablation table.")
@click.pass_context
@structured_errors
def eval_cmd(
    ctx: click.Context,
    index_dir: str | None,
    benchmark: str | None,
    ablations: str,
    out_dir: str,
    with_answer: bool,
    table_k: int,
) -> None:
    """Run the benchmark under each ablation and write CSV/JSON reports."""
    cfg = _config(ctx, **{"paths.index": index_dir, "paths.benchmark": benchmark})
    target = _require(cfg.paths.index, "index directory (--index)")
    bench = _require(cfg.paths.benchmark, "benchmark file (--benchmark)")
    try:
        specs = evalkit.parse_ablation_spec(ablations)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliFailure("InvalidConfig", f"bad --ablations: {exc}", 2) from None
    with ModelClient(cfg.client_settings()) as client:
        engine = Engine.open(target, client, cfg.fusion_config())
        cases = load_benchmark(bench)
        known = set(engine.index.pages)
        for case in cases:
            missing = sorted(str(p) for p in case.gold_pages if p not in known)
            if missing:
                raise DanglingGoldPage(f"case {case.case_id}: gold page(s) {missing} not in index")
        answer_fn = engine.answer if with_answer else None
        reports = evalkit.run_eval(engine.retriever, cases, engine.base_cfg, specs, answer_fn=answer_fn)
    written = evalkit.write_reports(reports, out_dir)
    click.echo(evalkit.ablation_table(reports, table_k))
    click.echo(f"\nK sweep ({reports[-1].name}, accuracy {evalkit.ACCURACY_MODE}):")
    click.echo(evalkit.ksweep_table(reports[-1]))
    failures = sum(len(r.failures) for r in reports)
    if failures:
        click.echo(f"\n{failures} case-level failure(s) recorded in the JSON reports", err=True)
    click.echo(f"\nwrote {len(written)} files to {out_dir}")


@main.command("budget")
@click.option("--pages", multiple=True, type=int, help="Corpus sizes for the scaling table (repeatable).")
@click.option("--dim", "pyr_dim", type=int, help="Only this pyramid embedding dimension.")
@click.option("--vectors", type=int, default=14, show_default=True, help="Pyramid vectors per page.")
@click.option("--bytes", "scalar_bytes", type=int, default=2, show_default=True, help="Bytes per scalar (2 = float16).")
@click.option("--pooled", type=int, default=341, show_default=True, help="Patch vectors after pooling.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Also write both tables as CSV.")
@click.option("--json", "as_json", is_flag=True, help="Print JSON instead of text tables.")
@structured_errors
def budget_cmd(
    pages: tuple[int, ...], pyr_dim: int | None, vectors: int, scalar_bytes: int, pooled: int, csv_path: str | None, as_json: bool
) -> None:
    """Per-page memory and corpus scaling for patch-level vs pyramid storage."""
    if scalar_bytes < 1 or vectors < 1 or pooled < 1 or any(p < 1 for p in pages):
        raise CliFailure("InvalidConfig", "--bytes, --vectors, --pooled and --pages must be positive", 2)
    rows = lateint.default_rows(scalar_bytes, pooled, vectors)
    if pyr_dim is not None:
        rows = rows[:2] + [lateint.BudgetRow(f"Pyramid (d={pyr_dim})", lateint.CostSpec(vectors, pyr_dim, scalar_bytes))]
    page_counts = tuple(pages) or lateint.TABLE2_PAGES
    t1 = lateint.table1(rows)
    t2 = lateint.table2(rows, page_counts)
    if csv_path:
        Path(csv_path).write_text(_budget_csv(t1, t2, page_counts), encoding="utf-8")
    if as_json:
        click.echo(json.dumps({"per_page": t1, "scaling": t2}, indent=2))
        return
    width = max(len(r["method"]) for r in t1)
    click.echo(f"{'Method':<{width}} {'Vectors':>8} {'Dim':>5} {'Bytes/page':>11} {'Mem/page':>10}  Efficiency")
    for r in t1:
        click.echo(
            f"{r['method']:<{width}} {r['vectors']:>8} {r['dim']:>5} {r['bytes_per_page']:>11,} {r['mem_per_page']:>10}  {r['efficiency']}"
        )
    click.echo("")
    click.echo(f"{'Method':<{width}} " + " ".join(f"{f'{p:,} pages':>16}" for p in page_counts))
    for r in t2:
        click.echo(f"{r['method']:<{width}} " + " ".join(f"{r[f'size_{p}']:>16}" for p in page_counts))


def _budget_csv(t1: list[dict], t2: list[dict], page_counts: tuple[int, ...]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "vectors", "dim", "bytes_per_scalar", "bytes_per_page", "mem_per_page", "efficiency"]
               + [f"bytes_{p}" for p in page_counts] + [f"size_{p}" for p in page_counts])
    for a, b in zip(t1, t2):
        w.writerow([a["method"], a["vectors"], a["dim"], a["bytes_per_scalar"], a["bytes_per_page"], a["mem_per_page"],
                    a["efficiency"]] + [b[f"bytes_{p}"] for p in page_counts] + [b[f"size_{p}"] for p in page_counts])
    return buf.getvalue()


@main.command("serve")
@click.option("--index", "index_dir", type=click.Path(file_okay=False), help="Index directory.")
@click.option("--host", help="Bind address.")
@click.option("--port", type=int, help="Bind port.")
@click.pass_context
@structured_errors
def serve_cmd(ctx: click.Context, index_dir: str | None, host: str | None, port: int | None) -> None:
    """Serve /query, /answer and /healthz over a loaded index."""
    import uvicorn

    from .service import create_app

    cfg = _config(ctx, **{"paths.index": index_dir, "serve.host": host, "serve.port": port})
    client = ModelClient(cfg.client_settings())
    engine = None
    if cfg.paths.index:
        engine = Engine(PyramidIndex.load(cfg.paths.index), client, cfg.fusion_config())
    else:
        logger.warning("no index configured; index routes will answer 404")
    try:
        uvicorn.run(create_app(engine), host=cfg.serve.host, port=cfg.serve.port, log_level="info")
    finally:
        client.close()


@main.command("gen-fixtures")
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--docs", type=int, default=20, show_default=True)
@click.option("--pages", "pages_per_doc", type=int, default=10, show_default=True, help="Pages per document.")
@click.option("--plants", type=int, default=20, show_default=True, help="Planted-fact questions to generate.")
@structured_errors
def gen_fixtures_cmd(out_dir: str, seed: int, docs: int, pages_per_doc: int, plants: int) -> None:
    """Write a seeded synthetic corpus and its planted-fact benchmark to OUT_DIR."""
    try:
        corpus = generate_corpus(seed, docs, pages_per_doc, plants)
    except ValueError as exc:
        raise CliFailure("InvalidConfig", str(exc), 2) from None
    root = corpus.write(out_dir)
    click.echo(f"wrote {len(corpus.pages)} pages and {len(corpus.plants)} cases to {root} (seed {seed})")


if __name__ == "__main__":
    main()
