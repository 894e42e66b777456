from __future__ import annotations

import pytest

from pyramidrag.clients import ClientSettings, Embedder, ModelClient
from pyramidrag.pyramid import build_index
from pyramidrag.synth import generate_corpus


@pytest.fixture
def mock_client() -> ModelClient:
    return ModelClient(ClientSettings())


@pytest.fixture
def embedder(mock_client: ModelClient) -> Embedder:
    return Embedder(mock_client, 1024)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(seed=11, n_docs=5, pages_per_doc=4, n_planted=3)


@pytest.fixture(scope="session")
def small_index(small_corpus):
    return build_index(small_corpus.pages, Embedder(ModelClient(ClientSettings()), 1024))


@pytest.fixture
def fixture_root(tmp_path, small_corpus):
    """The small synthetic corpus written to disk as labeled-text fixtures."""
    return small_corpus.write(tmp_path / "corpus")


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request) -> list[str]:
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
