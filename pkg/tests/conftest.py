import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fixtures import build_repo  # noqa: E402

from featrend.miner import mine  # noqa: E402


@pytest.fixture(scope="session")
def fixture_repo(tmp_path_factory):
    return build_repo(tmp_path_factory.mktemp("repo") / "fx")


@pytest.fixture(scope="session")
def fixture_history(fixture_repo):
    return mine(fixture_repo.path)


@pytest.fixture
def kotlin_dir(tmp_path) -> Path:
    d = tmp_path / "src"
    d.mkdir()
    return d
