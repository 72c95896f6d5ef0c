import time
from pathlib import Path

import pytest

from atl import scenario_file as sfm
from atl.simulate import run

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

_RUNS = {}
RUN_SECONDS = {}
ACCEPTANCE_LINES = []


def scenario(name, *overrides):
    """Build a shipped scenario (``name`` without .cfg) with overrides applied."""
    sf = sfm.load(SCENARIOS / f"{name}.cfg", overrides, env={})
    return sfm.build_scenario(sf)


def cached_run(name, *overrides):
    """Run a shipped scenario once per session; returns (scenario, trace)."""
    key = (name, overrides)
    if key not in _RUNS:
        sc = scenario(name, *overrides)
        start = time.perf_counter()
        _RUNS[key] = (sc, run(sc))
        RUN_SECONDS[key] = time.perf_counter() - start
    return _RUNS[key]


def report(criterion, ok, detail):
    """Record one acceptance line; printed again in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def scenarios_dir():
    return SCENARIOS


@pytest.fixture(autouse=True)
def _no_default_h_env(monkeypatch):
    # the env var changes scenario resolution; tests set it explicitly when needed
    monkeypatch.delenv(sfm.ENV_DEFAULT_H, raising=False)
