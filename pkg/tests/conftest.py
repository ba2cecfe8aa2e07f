import pytest

from pathlib import Path

from script2board import pipeline
from script2board.backends import make_backends, mock_backend_configs
from script2board.workspace import Workspace

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def two_scene_text():
    return (DATA / "two_scene.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def corpus_text():
    return (DATA / "corpus_10p.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def mock_set():
    return make_backends(mock_backend_configs(seed=7))


def run_fixture_pipeline(root: Path, script: Path, seed: int = 7) -> Workspace:
    ws = Workspace(root)
    backends = make_backends(mock_backend_configs(seed=seed))
    pipeline.run_pipeline(ws, script, backends, seed=seed)
    return ws


@pytest.fixture(scope="session")
def fixture_ws(tmp_path_factory):
    """Full mock pipeline over the 2-scene fixture, shared across tests."""
    root = tmp_path_factory.mktemp("two_scene_ws")
    return run_fixture_pipeline(root / "ws", DATA / "two_scene.txt")


@pytest.fixture(scope="session")
def ten_chars_ws(tmp_path_factory):
    """Full mock pipeline over the 10-character fixture."""
    root = tmp_path_factory.mktemp("ten_chars_ws")
    return run_fixture_pipeline(root / "ws", DATA / "ten_chars.txt")
