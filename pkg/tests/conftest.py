from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def fixtures_dir() -> Path:
    return REPO_ROOT / "fixtures"


@pytest.fixture
def repo_root() -> Path:
    return REPO_ROOT


@pytest.fixture
def in_repo_root(monkeypatch):
    """Run the test with the repository root as cwd so fixture-relative
    config paths resolve the same way they do for a user."""
    monkeypatch.chdir(REPO_ROOT)
    return REPO_ROOT
