import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ML_SMALL_DEFAULT = "/root/data/ml-latest-small/ratings.csv"

_acceptance_lines = []


def record_acceptance(number, name, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name}"
    if detail:
        line += f" ({detail})"
    _acceptance_lines.append(line)
    print(line)
    return passed


@pytest.fixture
def acceptance():
    return record_acceptance


@pytest.fixture(scope="session")
def ml_small_path():
    path = Path(os.environ.get("BROADCF_ML_LATEST_SMALL", ML_SMALL_DEFAULT))
    if not path.is_file():
        pytest.skip(f"MovieLens ml-latest-small ratings.csv not found at {path}; set BROADCF_ML_LATEST_SMALL")
    return path


@pytest.fixture(scope="session")
def ml_small(ml_small_path):
    from broadcf import load_ratings

    return load_ratings(ml_small_path, "movielens")


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
