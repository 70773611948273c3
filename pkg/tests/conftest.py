import os
from pathlib import Path

import numpy as np
import pytest

from fairtarget.core import Dataset

ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = Path(os.environ.get("FAIRTARGET_DATA", ROOT / "data"))
ADULT_PATH = DATA_DIR / "adult.data"
COMPAS_PATH = DATA_DIR / "compas-scores-two-years.csv"


def make_dataset(x, y, s, **kw):
    return Dataset(x=np.asarray(x, dtype=float), y=np.asarray(y), s=np.asarray(s), **kw)


@pytest.fixture
def tiny():
    """Four examples, both groups, both labels in each group."""
    return make_dataset([[0.0], [1.0], [2.0], [3.0]], [0, 1, 0, 1], [0, 0, 1, 1])


@pytest.fixture
def random_batch():
    rng = np.random.default_rng(11)
    n, d = 8, 3
    return (
        rng.normal(size=(n, d)),
        rng.integers(0, 2, size=n),
        rng.integers(0, 2, size=n),
    )


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
