"""Model-service clients: page extraction, text embedding, query expansion, answering.

Each operation has a live implementation speaking the OpenAI-compatible
JSON-over-HTTP protocol (``/chat/completions`` and ``/embeddings``) and a
deterministic offline mock. Both are fronted by :class:`~pyramidrag.cache.ResponseCache`
when a cache directory is configured.

Mock conventions:

* a "page image" is a UTF-8 fixture with ``SUMMARY:`` / ``SECTION:`` / ``FACT:`` /
  ``HOTSPOT:`` labeled lines;
* embeddings are signed feature hashes of lowercase tokens (FNV-1a, 64 bit),
  normalized to unit length;
* query expansion uses the fallbacks in :mod:`pyramidrag.queryx`;
* answers are the first ``FACT`` of the first page sharing a content token with
  the question, else ``"UNKNOWN"``.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Sequence

import httpx
import numpy as np

from . import queryx
from .cache import ResponseCache, cache_key, canonical_json
from .errors import EmptyText, FixtureMissing, NoPages, ParseError, ServiceError
from .model import EmbeddingVector, PageArtifacts, normalize_array

logger = logging.getLogger(__name__)

SUPPORTED_DIMS = (1024, 1536, 3072)
MOCK_EMBED_MODEL = "mock-fnv1a"
MOCK_CHAT_MODEL = "mock-chat"
UNKNOWN_ANSWER = "UNKNOWN"

KEYWORDS_PROMPT = "Extract the 3-5 most important keywords from this question."
SYNONYMS_PROMPT = "Generate a semantically equivalent version of this question using synonyms and related phrases."

EXTRACTION_PROMPT = """You are analysing one page of a document, supplied as an image.
Describe the page using exactly these labeled lines and nothing else:

SUMMARY: 6-10 sentences describing the key topics and claims of the page.
SECTION: one line per heading, caption or figure title, in reading order.
FACT: one line per atomic factual unit (a number, entity or short statement), keeping units and periods.
HOTSPOT: one line per visually salient region (chart peak, table header, highlighted value) with a concise description.

Repeat SECTION, FACT and HOTSPOT lines as often as needed. Write SUMMARY exactly once."""

ANSWER_PROMPT = (
    "Answer the question using only the attached document pages. "
    "Reply with the answer alone; reply UNKNOWN if the pages do not contain it."
)

_LABELS = ("SUMMARY", "SECTION", "FACT", "HOTSPOT")
_LABEL_RE = re.compile(r"^\s*(?:[-*]\s*)?\**(SUMMARY|SECTION|FACT|HOTSPOT)\**\s*:\s*(.*)$", re.IGNORECASE)
_TOKEN_RE = re.compile(r"[^\W_]+")
_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class ClientMode(str, enum.Enum):
    LIVE = "live"
    MOCK = "mock"


@dataclass(frozen=True)
class ExtractionRequest:
    page_image_bytes: bytes
    dpi: int = 180

    def __post_init__(self) -> None:
        if not self.page_image_bytes:
            raise ValueError("page image is empty")
        if self.dpi < 160 or self.dpi > 200:
            logger.debug("dpi %s outside the recommended 160-200 range", self.dpi)


@dataclass(frozen=True)
class ClientSettings:
    mode: ClientMode = ClientMode.MOCK
    endpoint_url: str = "https://api.openai.com/v1"
    api_key: str | None = field(default=None, repr=False)
    model_extract: str = "gpt-4o"
    model_embed: str = "text-embedding-3-large"
    model_generate: str = "gpt-4o"
    cache_dir: str | None = None
    retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 60.0
    max_pages: int = 100
    embed_batch: int = 256
    allowed_dims: tuple[int, ...] = SUPPORTED_DIMS

    @classmethod
    def from_env(cls, environ: dict[str, str] | None = None, **overrides: Any) -> "ClientSettings":
        env = os.environ if environ is None else environ
        kwargs: dict[str, Any] = {}
        mapping = {
            "CLIENT_MODE": "mode",
            "ENDPOINT_URL": "endpoint_url",
            "API_KEY": "api_key",
            "MODEL_EXTRACT": "model_extract",
            "MODEL_EMBED": "model_embed",
            "MODEL_GENERATE": "model_generate",
            "CACHE_DIR": "cache_dir",
        }
        for var, attr in mapping.items():
            if env.get(var):
                kwargs[attr] = env[var]
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        if "mode" in kwargs:
            kwargs["mode"] = ClientMode(str(kwargs["mode"]).lower())
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# parsing helpers


def parse_labeled_blocks(text: str) -> PageArtifacts:
    """Parse labeled-line output (fixture files or model replies) into artifacts.

    Unlabeled lines continue the previous block. Raises :class:`ParseError` when
    no SUMMARY block is present.
    """
    blocks: dict[str, list[str]] = {label: [] for label in _LABELS}
    current: list[str] | None = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("```"):
            continue
        m = _LABEL_RE.match(line)
        if m:
            label = m.group(1).upper()
            blocks[label].append(m.group(2).strip())
            current = blocks[label]
        elif current is not None:
            current[-1] = f"{current[-1]} {line}".strip()
    summaries = [s for s in blocks["SUMMARY"] if s]
    if not summaries:
        raise ParseError("response has no SUMMARY block")
    try:
        return PageArtifacts(
            summary=" ".join(summaries),
            sections=tuple(s for s in blocks["SECTION"] if s),
            facts=tuple(s for s in blocks["FACT"] if s),
            hotspots=tuple(s for s in blocks["HOTSPOT"] if s),
        )
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def render_labeled_blocks(artifacts: PageArtifacts) -> str:
    lines = [f"SUMMARY: {artifacts.summary}"]
    lines += [f"SECTION: {s}" for s in artifacts.sections]
    lines += [f"FACT: {f}" for f in artifacts.facts]
    lines += [f"HOTSPOT: {h}" for h in artifacts.hotspots]
    return "\n".join(lines) + "\n"


def _decode_fixture(data: bytes) -> str:
    if data.startswith(_PNG_MAGIC):
        raise FixtureMissing("mock mode needs a labeled-text page fixture, got PNG data")
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        raise FixtureMissing("page bytes are not a UTF-8 fixture") from None


# ---------------------------------------------------------------------------
# mock embedder


@lru_cache(maxsize=65536)
def fnv1a_64(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def hash_slot(token: str, dim: int) -> tuple[int, float]:
    """Component index and sign the mock embedder assigns to ``token``."""
    h = fnv1a_64(token)
    return h % dim, (-1.0 if h >> 63 else 1.0)


def mock_tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def mock_embed_array(text: str, dim: int) -> np.ndarray:
    tokens = mock_tokens(text)
    if not tokens:
        raise EmptyText("text has no alphanumeric tokens")
    acc = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        idx, sign = hash_slot(tok, dim)
        acc[idx] += sign
    if not acc.any():
        # every token cancelled out; fall back to a slot keyed on the sorted token multiset
        idx, sign = hash_slot("\x00".join(sorted(tokens)), dim)
        acc[idx] = sign
    return normalize_array(acc)


# ---------------------------------------------------------------------------


class ModelClient:
    """All model-service operations behind one object.

    ``transport`` is passed to :class:`httpx.Client` (tests inject
    :class:`httpx.MockTransport`). ``sleep`` is the backoff hook.
    """

    def __init__(
        self,
        settings: ClientSettings | None = None,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.settings = settings or ClientSettings()
        self.cache = ResponseCache(self.settings.cache_dir) if self.settings.cache_dir else None
        self._transport = transport
        self._sleep = sleep
        self._http: httpx.Client | None = None
        self.network_calls = 0

    @property
    def mode(self) -> ClientMode:
        return self.settings.mode

    @property
    def is_live(self) -> bool:
        return self.settings.mode is ClientMode.LIVE

    @property
    def embed_model(self) -> str:
        return self.settings.model_embed if self.is_live else MOCK_EMBED_MODEL

    @property
    def chat_model(self) -> str:
        return self.settings.model_generate if self.is_live else MOCK_CHAT_MODEL

    def close(self) -> None:
        if self._http is not None:
            self._http.close()
            self._http = None

    def __enter__(self) -> "ModelClient":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    # -- plumbing -----------------------------------------------------------

    def _cached(self, op: str, model: str, payload: Any, compute: Callable[[], Any]) -> Any:
        """Run ``compute`` through the cache; miss and hit both return parsed canonical JSON."""
        if self.cache is None:
            return json.loads(canonical_json(compute()))
        key = cache_key(op, model, payload)
        text = self.cache.get(key)
        if text is None:
            text = canonical_json(compute())
            self.cache.put(key, text)
        return json.loads(text)

    def _client(self) -> httpx.Client:
        if self._http is None:
            headers = {"Content-Type": "application/json"}
            if self.settings.api_key:
                headers["Authorization"] = f"Bearer {self.settings.api_key}"
            self._http = httpx.Client(
                base_url=self.settings.endpoint_url.rstrip("/") + "/",
                headers=headers,
                timeout=self.settings.timeout_s,
                transport=self._transport,
            )
        return self._http

    def _post(self, path: str, body: dict) -> dict:
        if not self.is_live:
            raise RuntimeError("network call attempted in mock mode")
        attempts = self.settings.retries + 1
        last: str = "no attempt made"
        for attempt in range(attempts):
            if attempt:
                self._sleep(self.settings.backoff_s * 2 ** (attempt - 1))
            self.network_calls += 1
            try:
                resp = self._client().post(path, json=body)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
                logger.warning("POST %s failed (attempt %d/%d): %s", path, attempt + 1, attempts, last)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                logger.warning("POST %s returned %s (attempt %d/%d)", path, resp.status_code, attempt + 1, attempts)
                continue
            if resp.status_code >= 400:
                raise ServiceError(f"POST {path}: HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError:
                raise ServiceError(f"POST {path}: response is not JSON") from None
        raise ServiceError(f"POST {path} failed after {attempts} attempts: {last}")

    def _chat(self, model: str, messages: list[dict]) -> str:
        data = self._post("chat/completions", {"model": model, "messages": messages, "temperature": 0.0})
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            raise ServiceError("chat response missing choices[0].message.content") from None

    # -- operations ---------------------------------------------------------

    def extract_page(self, req: ExtractionRequest) -> PageArtifacts:
        if self.is_live:
            model = self.settings.model_extract
            image_b64 = base64.b64encode(req.page_image_bytes).decode("ascii")
            payload = {"image_sha256": _sha256(req.page_image_bytes), "dpi": req.dpi, "prompt": EXTRACTION_PROMPT}

            def compute() -> dict:
                messages = [
                    {
                        "role": "user",
                        "content": [
                            {"type": "text", "text": EXTRACTION_PROMPT},
                            {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{image_b64}"}},
                        ],
                    }
                ]
                return {"text": self._chat(model, messages)}

            response = self._cached("extract_page", model, payload, compute)
            return parse_labeled_blocks(response["text"])

        text = _decode_fixture(req.page_image_bytes)
        response = self._cached(
            "extract_page", MOCK_CHAT_MODEL, {"fixture_sha256": _sha256(req.page_image_bytes)}, lambda: {"text": text}
        )
        try:
            return parse_labeled_blocks(response["text"])
        except ParseError as exc:
            raise FixtureMissing(f"page fixture has no labeled blocks: {exc}") from exc

    def embed_text(self, text: str, dim: int = 1536) -> EmbeddingVector:
        return EmbeddingVector(self.embed_many([text], dim)[0])

    def embed_many(self, texts: Sequence[str], dim: int = 1536) -> np.ndarray:
        """Embed ``texts`` into a ``(len(texts), dim)`` float32 array of unit rows."""
        if dim not in self.settings.allowed_dims:
            raise ValueError(f"dim {dim} is not one of {self.settings.allowed_dims}")
        for t in texts:
            if not isinstance(t, str) or not t.strip():
                raise EmptyText("cannot embed empty text")
        out = np.empty((len(texts), dim), dtype=np.float32)
        if not self.is_live:
            for i, t in enumerate(texts):
                if self.cache is None:
                    out[i] = mock_embed_array(t, dim)
                else:
                    vec = self._cached(
                        "embed_text", MOCK_EMBED_MODEL, {"text": t, "dim": dim}, lambda t=t: mock_embed_array(t, dim).tolist()
                    )
                    out[i] = np.asarray(vec, dtype=np.float32)
            return out

        model = self.settings.model_embed
        pending: list[int] = []
        for i, t in enumerate(texts):
            hit = self.cache.get(cache_key("embed_text", model, {"text": t, "dim": dim})) if self.cache else None
            if hit is None:
                pending.append(i)
            else:
                out[i] = np.asarray(json.loads(hit), dtype=np.float32)
        step = max(1, self.settings.embed_batch)
        for start in range(0, len(pending), step):
            chunk = pending[start : start + step]
            data = self._post("embeddings", {"model": model, "input": [texts[i] for i in chunk], "dimensions": dim})
            try:
                rows = sorted(data["data"], key=lambda r: r.get("index", 0))
                vectors = [r["embedding"] for r in rows]
            except (KeyError, TypeError):
                raise ServiceError("embedding response missing data[].embedding") from None
            if len(vectors) != len(chunk):
                raise ServiceError(f"asked for {len(chunk)} embeddings, got {len(vectors)}")
            for i, vec in zip(chunk, vectors):
                if len(vec) != dim:
                    raise ServiceError(f"embedding has dim {len(vec)}, expected {dim}")
                arr = normalize_array(vec)
                text = canonical_json(arr.tolist())
                if self.cache:
                    self.cache.put(cache_key("embed_text", model, {"text": texts[i], "dim": dim}), text)
                out[i] = np.asarray(json.loads(text), dtype=np.float32)
        return out

    def embedder(self, dim: int = 1536) -> "Embedder":
        return Embedder(self, dim)

    def expand_query_llm(self, question: str) -> tuple[str, str]:
        if not question or not question.strip():
            raise EmptyText("question is empty")
        if not self.is_live:
            return queryx.fallback_keywords(question), queryx.fallback_synonyms(question)
        model = self.settings.model_generate

        def ask(prompt: str) -> Callable[[], dict]:
            def compute() -> dict:
                messages = [
                    {"role": "system", "content": prompt},
                    {"role": "user", "content": question},
                ]
                return {"text": self._chat(model, messages).strip()}

            return compute

        kw = self._cached("expand_keywords", model, {"question": question, "prompt": KEYWORDS_PROMPT}, ask(KEYWORDS_PROMPT))
        syn = self._cached("expand_synonyms", model, {"question": question, "prompt": SYNONYMS_PROMPT}, ask(SYNONYMS_PROMPT))
        keywords, synonyms = kw["text"].strip(), syn["text"].strip()
        if not keywords or not synonyms:
            raise ServiceError("query expansion returned an empty variant")
        return keywords, synonyms

    def generate_answer(self, question: str, pages: Sequence[bytes]) -> str:
        if not pages:
            raise NoPages("at least one page is required")
        if len(pages) > self.settings.max_pages:
            raise ValueError(f"{len(pages)} pages exceeds the limit of {self.settings.max_pages}")
        if not self.is_live:
            return mock_answer(question, pages)
        model = self.settings.model_generate
        payload = {"question": question, "pages_sha256": [_sha256(p) for p in pages], "prompt": ANSWER_PROMPT}

        def compute() -> dict:
            content: list[dict] = [{"type": "text", "text": f"{ANSWER_PROMPT}\n\nQuestion: {question}"}]
            for page in pages:
                b64 = base64.b64encode(page).decode("ascii")
                content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}})
            return {"text": self._chat(model, [{"role": "user", "content": content}]).strip()}

        return self._cached("generate_answer", model, payload, compute)["text"]


def mock_answer(question: str, pages: Sequence[bytes]) -> str:
    wanted = {t.lower() for t in queryx.content_tokens(question)}
    if not wanted:
        return UNKNOWN_ANSWER
    for page in pages:
        try:
            text = page.decode("utf-8")
        except UnicodeDecodeError:
            continue
        if wanted.isdisjoint(mock_tokens(text)):
            continue
        for line in text.splitlines():
            m = _LABEL_RE.match(line.strip())
            if m and m.group(1).upper() == "FACT" and m.group(2).strip():
                return m.group(2).strip()
    return UNKNOWN_ANSWER


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class Embedder:
    """A client pinned to one output dimension, as the index builder needs."""

    client: ModelClient
    dim: int

    @property
    def model_id(self) -> str:
        return f"{self.client.embed_model}@{self.dim}"

    def embed(self, text: str) -> EmbeddingVector:
        return self.client.embed_text(text, self.dim)

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        return self.client.embed_many(texts, self.dim)


def make_client(settings: ClientSettings | None = None, **kwargs: Any) -> ModelClient:
    return ModelClient(settings or ClientSettings.from_env(), **kwargs)


__all__ = [
    "ClientMode",
    "ClientSettings",
    "Embedder",
    "ExtractionRequest",
    "ModelClient",
    "SUPPORTED_DIMS",
    "fnv1a_64",
    "hash_slot",
    "make_client",
    "mock_embed_array",
    "parse_labeled_blocks",
    "render_labeled_blocks",
]
