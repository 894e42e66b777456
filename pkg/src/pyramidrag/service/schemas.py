"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, ConfigDict, Field


class QueryRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    question: str = Field(min_length=1)
    k: int | None = Field(default=None, ge=1)
    config: dict[str, Any] = Field(default_factory=dict)
    include_lists: bool = False


class AnswerRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    question: str = Field(min_length=1)
    k: int = Field(default=5, ge=1)
    config: dict[str, Any] = Field(default_factory=dict)


class ResultRow(BaseModel):
    rank: int
    doc_id: str
    page_no: int
    rrf_score: float
    contributing_lists: int


class QueryResponse(BaseModel):
    results: list[ResultRow]
    variants: list[str]
    failed_cells: dict[str, str] = Field(default_factory=dict)
    lists: dict[str, list[dict[str, Any]]] | None = None


class AnswerResponse(BaseModel):
    answer: str
    pages: list[str]
    results: list[ResultRow]


class HealthResponse(BaseModel):
    status: str
    pages: int
    dim: int
    counts: dict[str, int]
    median_budget: float
    embedder_model: str
    built_at: str


class ErrorBody(BaseModel):
    error: str
    message: str
