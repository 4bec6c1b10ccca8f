import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from campaign_lens.core import data_path

settings.register_profile(
    "default", deadline=None, max_examples=60, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return Path(data_path("fixture_corpus"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number: int, title: str, failures: list[str], elapsed: float):
        ok = not failures
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({elapsed:.2f}s)"
        if failures:
            line += " | " + "; ".join(failures[:5])
        ACCEPTANCE[number] = (ok, line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n][1])
