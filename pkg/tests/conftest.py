import pathlib

import pytest

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def fixtures_dir() -> pathlib.Path:
    return REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def golden_dir() -> pathlib.Path:
    return pathlib.Path(__file__).resolve().parent / "golden"
