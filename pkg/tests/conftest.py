"""Shared fixtures for the mixclus test suites"""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from mixclus.data import load_dataset, parse_schema  # noqa: E402
from mixclus.settings import reset_settings  # noqa: E402
from mixclus.synthetic import two_group_mixed  # noqa: E402

FIXTURES = ROOT / "fixtures"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end training runs")


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def toy_dataset():
    """Three-row table covering every variable kind"""
    schema = parse_schema((FIXTURES / "toy_schema.json").read_text(encoding="utf-8"))
    return load_dataset((FIXTURES / "toy_gower.csv").read_text(encoding="utf-8"), schema)


@pytest.fixture(scope="session")
def small_two_group():
    """120-row two-group mixed data (4 continuous, 4 binary)"""
    return two_group_mixed(n=120, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _fresh_settings():
    reset_settings()
    yield
    reset_settings()
