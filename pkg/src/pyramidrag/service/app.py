"""Read-only JSON API over one loaded index.

The index is immutable after load, so request handlers share it without locks.
Handlers are plain ``def`` so FastAPI runs them in its worker threadpool.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import EmptyQuery, InvalidConfig, PyramidRagError
from ..fusion import fused_result_to_dict
from ..pipeline import Engine
from .schemas import AnswerRequest, AnswerResponse, HealthResponse, QueryRequest, QueryResponse

logger = logging.getLogger(__name__)

# caller mistakes; everything else from the package is a server-side failure
_BAD_REQUEST = (EmptyQuery, InvalidConfig)


class NoIndexLoaded(PyramidRagError):
    pass


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "message": message})


def create_app(engine: Engine | None) -> FastAPI:
    """Build the app around ``engine``; ``None`` serves 404 on every index-backed route."""
    app = FastAPI(title="pyramidrag", version=__version__)
    app.state.engine = engine

    def current() -> Engine:
        if app.state.engine is None:
            raise NoIndexLoaded("no index is loaded")
        return app.state.engine

    @app.exception_handler(RequestValidationError)
    def _invalid(request: Request, exc: RequestValidationError) -> JSONResponse:
        return _error(400, "BadRequest", str(exc.errors()))

    @app.exception_handler(NoIndexLoaded)
    def _no_index(request: Request, exc: NoIndexLoaded) -> JSONResponse:
        return _error(404, exc.code, str(exc))

    @app.exception_handler(PyramidRagError)
    def _known(request: Request, exc: PyramidRagError) -> JSONResponse:
        if isinstance(exc, _BAD_REQUEST):
            return _error(400, exc.code, str(exc))
        logger.exception("request failed")
        return _error(500, exc.code, str(exc))

    @app.exception_handler(Exception)
    def _unexpected(request: Request, exc: Exception) -> JSONResponse:
        logger.exception("unhandled error")
        return _error(500, type(exc).__name__, str(exc))

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> dict:
        return current().health()

    @app.post("/query", response_model=QueryResponse, response_model_exclude_none=True)
    def query(req: QueryRequest) -> dict:
        result = current().query(req.question, req.k, req.config)
        return fused_result_to_dict(result, include_lists=req.include_lists)

    @app.post("/answer", response_model=AnswerResponse)
    def answer(req: AnswerRequest) -> dict:
        eng = current()
        result = eng.query(req.question, req.k, req.config)
        pages = result.pages()[: req.k]
        text = eng.answer(req.question, pages)
        return {
            "answer": text,
            "pages": [str(p) for p in pages],
            "results": fused_result_to_dict(result)["results"][: req.k],
        }

    return app
