import sys
from pathlib import Path

import pytest

from skelgen.corpus import load_corpus


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        status = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.skipped:
        status = "SKIP"
    else:
        return
    sys.stderr.write(f"ACCEPTANCE {status}: {name}\n")

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = DATA_DIR / "golden"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN_DIR


@pytest.fixture(scope="session")
def train_corpus():
    return load_corpus(DATA_DIR / "train_small.jsonl", name="train")


@pytest.fixture(scope="session")
def test_corpus():
    return load_corpus(DATA_DIR / "test_small.jsonl", name="test")
