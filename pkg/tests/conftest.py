import dataclasses
import time
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from frictobs.config import preset
from frictobs.harness import run

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"
FIXTURE_SEED = 1

# wall-clock seconds of each session run, keyed by preset name
RUN_SECONDS = {}
# one summary line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def _run(name, **changes):
    cfg = dataclasses.replace(preset(name), **changes)
    start = time.perf_counter()
    result = run(cfg)
    RUN_SECONDS[name] = time.perf_counter() - start
    return cfg, result


@pytest.fixture(scope="session")
def stable_run():
    return _run("illustration_stable", seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def divergent_run():
    return _run("illustration_divergent", seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def constant_velocity_run():
    return _run("constant_velocity")


@pytest.fixture(scope="session")
def positioning_runs():
    return _run("positioning_pid"), _run("positioning_pid_observer")


@pytest.fixture(scope="session")
def chirp_runs():
    return _run("chirp_pid"), _run("chirp_pid_observer")


@pytest.fixture(scope="session")
def run_seconds():
    return RUN_SECONDS


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line, then assert the outcome."""
    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
