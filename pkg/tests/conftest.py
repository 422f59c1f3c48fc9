import numpy as np
import pytest

from privspec.spectrum_db import DbMatrix

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_db(rows: int, block_bytes: int, rng) -> DbMatrix:
    return DbMatrix(rows, block_bytes * 8, rng.integers(0, 256, size=(rows, block_bytes), dtype=np.uint8))
