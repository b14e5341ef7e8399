from __future__ import annotations

import time
from pathlib import Path

import pytest

from flexopt.ingestion import generate_synthetic_dataset
from flexopt.scenarios import StudyOptions, run_study

GOLDENS = Path(__file__).parent / "goldens"

# criterion number -> (title, passed); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, bool]] = {}


@pytest.fixture(scope="session")
def week():
    """Bundled synthetic dataset: seed 1, one week."""
    return generate_synthetic_dataset(1, 168)


@pytest.fixture(scope="session")
def two_days():
    return generate_synthetic_dataset(1, 48)


@pytest.fixture(scope="session")
def study(week):
    """Full 7 x 3 study on the bundled dataset, with its wall time."""
    t0 = time.perf_counter()
    result = run_study(week, options=StudyOptions())
    result.wall_time_s = time.perf_counter() - t0
    return result


@pytest.fixture(scope="session")
def small_study(two_days):
    from flexopt.scenarios import context_presets, scenario_presets

    ctx = context_presets(two_days.prices)[:1]
    return run_study(two_days, ctx, scenario_presets())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
