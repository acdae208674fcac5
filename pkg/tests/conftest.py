import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def quarterly(start, n):
    return pd.period_range(pd.Period(start, "Q"), periods=n, freq="Q")


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def record_criterion(number, passed, detail: str) -> None:
    status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
    ACCEPTANCE_LINES[int(number)] = f"criterion {int(number):>2}: {status:<5} {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
