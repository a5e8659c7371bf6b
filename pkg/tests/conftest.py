import os
import sys
import time
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def acceptance_report():
    """The 5-seed desk-scale benchmark, run once per session and shared."""
    from transfer_lmr.config import load_config
    from transfer_lmr.pipeline import run_experiment

    cfg = load_config(ROOT / "configs" / "acceptance.yaml")
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    return {"config": cfg, "report": report, "seconds": time.perf_counter() - t0}


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        _CRITERIA[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
