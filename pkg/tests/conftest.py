from __future__ import annotations

import hashlib
from pathlib import Path

import pytest

from cargoloop.domaindb import load_database

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fig3_path() -> Path:
    return FIXTURES / "fig3.db"


@pytest.fixture(scope="session")
def fig3_db(fig3_path):
    return load_database(fig3_path)


@pytest.fixture(scope="session")
def hexnet_db():
    return load_database(FIXTURES / "hexnet.db")


def sha256_of_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()
