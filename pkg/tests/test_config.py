from __future__ import annotations

import json

import pytest

from pyramidrag.clients import ClientMode
from pyramidrag.config import AppConfig, load_config
from pyramidrag.errors import InvalidConfig
from pyramidrag.model import IndexKind


def test_defaults():
    cfg = load_config(environ={})
    assert cfg == AppConfig()
    assert cfg.dim == 1536 and cfg.client.mode is ClientMode.MOCK
    assert cfg.fusion_config().k_pre == 200


def test_precedence_flags_over_env_over_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dim": 3072, "paths": {"index": "from-file", "corpus": "c"}, "fusion": {"k_final": 50}}))
    env = {"EMBED_DIM": "1024", "INDEX_DIR": "from-env"}
    cfg = load_config(path, {"paths.index": "from-flag", "dim": None}, environ=env)
    assert cfg.paths.index == "from-flag"
    assert cfg.dim == 1024
    assert cfg.paths.corpus == "c"
    assert cfg.fusion_config().k_final == 50


def test_client_settings_mapping():
    cfg = load_config(overrides={"paths.cache": "/tmp/c"}, environ={"CLIENT_MODE": "live", "MODEL_EMBED": "emb"})
    s = cfg.client_settings()
    assert s.mode is ClientMode.LIVE and s.model_embed == "emb" and s.cache_dir == "/tmp/c"


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"client": {"mode": "live", "extra": 1}},
        {"dim": 999},
        {"fusion": {"alpha": -1}},
        {"fusion": {"unknown": 1}},
    ],
)
def test_invalid_configs(tmp_path, data):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    with pytest.raises(InvalidConfig):
        load_config(path, environ={})


def test_unreadable_config(tmp_path):
    with pytest.raises(InvalidConfig):
        load_config(tmp_path / "missing.json", environ={})
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(InvalidConfig):
        load_config(bad, environ={})


def test_fusion_section_parses_aliases():
    cfg = load_config(overrides={"fusion": {"enabled_indices": ["page", "facts"]}}, environ={})
    assert cfg.fusion_config().enabled_indices == (IndexKind.FUSED_PAGE, IndexKind.FACT)
