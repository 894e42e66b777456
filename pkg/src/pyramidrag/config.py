"""Application configuration: defaults < JSON file < environment < CLI flags."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .clients import SUPPORTED_DIMS, ClientMode, ClientSettings
from .errors import InvalidConfig
from .fusion import FusionConfig

# environment variable -> dotted config path
ENV_VARS: dict[str, str] = {
    "CLIENT_MODE": "client.mode",
    "ENDPOINT_URL": "client.endpoint_url",
    "API_KEY": "client.api_key",
    "MODEL_EXTRACT": "client.model_extract",
    "MODEL_EMBED": "client.model_embed",
    "MODEL_GENERATE": "client.model_generate",
    "CACHE_DIR": "paths.cache",
    "EMBED_DIM": "dim",
    "INDEX_DIR": "paths.index",
    "CORPUS_DIR": "paths.corpus",
    "BENCHMARK_PATH": "paths.benchmark",
    "SERVE_HOST": "serve.host",
    "SERVE_PORT": "serve.port",
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ClientSection(_Strict):
    mode: ClientMode = ClientMode.MOCK
    endpoint_url: str = "https://api.openai.com/v1"
    api_key: str | None = Field(default=None, repr=False)
    model_extract: str = "gpt-4o"
    model_embed: str = "text-embedding-3-large"
    model_generate: str = "gpt-4o"
    retries: int = Field(default=3, ge=0)
    timeout_s: float = Field(default=60.0, gt=0)
    max_pages: int = Field(default=100, ge=1)


class PathsSection(_Strict):
    corpus: str | None = None
    index: str | None = None
    cache: str | None = None
    benchmark: str | None = None


class ServeSection(_Strict):
    host: str = "127.0.0.1"
    port: int = Field(default=8080, ge=0, le=65535)


class AppConfig(_Strict):
    client: ClientSection = Field(default_factory=ClientSection)
    dim: int = 1536
    fusion: dict[str, Any] = Field(default_factory=dict)
    paths: PathsSection = Field(default_factory=PathsSection)
    serve: ServeSection = Field(default_factory=ServeSection)

    @field_validator("dim")
    @classmethod
    def _dim_supported(cls, v: int) -> int:
        if v not in SUPPORTED_DIMS:
            raise ValueError(f"dim must be one of {SUPPORTED_DIMS}")
        return v

    @field_validator("fusion")
    @classmethod
    def _fusion_valid(cls, v: dict[str, Any]) -> dict[str, Any]:
        FusionConfig.from_dict(v)  # raises on unknown keys / bad values
        return v

    def fusion_config(self) -> FusionConfig:
        return FusionConfig.from_dict(self.fusion)

    def client_settings(self) -> ClientSettings:
        c = self.client
        return ClientSettings(
            mode=c.mode,
            endpoint_url=c.endpoint_url,
            api_key=c.api_key,
            model_extract=c.model_extract,
            model_embed=c.model_embed,
            model_generate=c.model_generate,
            cache_dir=self.paths.cache,
            retries=c.retries,
            timeout_s=c.timeout_s,
            max_pages=c.max_pages,
        )


def _set_dotted(target: dict[str, Any], dotted: str, value: Any) -> None:
    node = target
    *parents, leaf = dotted.split(".")
    for p in parents:
        node = node.setdefault(p, {})
    node[leaf] = value


def _merge(base: dict[str, Any], over: Mapping[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict) and k != "fusion":
            out[k] = _merge(out[k], v)
        elif k == "fusion" and isinstance(v, Mapping):
            out[k] = {**out.get(k, {}), **v}
        else:
            out[k] = v
    return out


def env_layer(environ: Mapping[str, str] | None = None) -> dict[str, Any]:
    env = os.environ if environ is None else environ
    layer: dict[str, Any] = {}
    for var, dotted in ENV_VARS.items():
        if env.get(var):
            _set_dotted(layer, dotted, env[var])
    return layer


def load_config(
    path: str | os.PathLike | None = None,
    overrides: Mapping[str, Any] | None = None,
    environ: Mapping[str, str] | None = None,
) -> AppConfig:
    """Resolve the layered configuration.

    ``overrides`` are dotted keys from CLI flags (``{"dim": 1024, "paths.index": "idx"}``);
    ``None`` values are ignored so unset flags fall through.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise InvalidConfig("config file must hold a JSON object")
        data = raw
    data = _merge(data, env_layer(environ))
    flags: dict[str, Any] = {}
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(flags, dotted, value)
    data = _merge(data, flags)
    try:
        return AppConfig.model_validate(data)
    except ValidationError as exc:
        raise InvalidConfig(str(exc)) from exc
