import time

import pytest

from spikedroop.config import SystemConfig
from spikedroop.scenarios import run_scenario, scenario_config


class CaseRuns:
    """Runs each named case at most once per session and remembers how long it took."""

    def __init__(self):
        self.system = SystemConfig()
        self._cache = {}

    def __call__(self, case_id):
        if case_id not in self._cache:
            t0 = time.perf_counter()
            log, metrics = run_scenario(scenario_config(case_id, self.system), self.system)
            self._cache[case_id] = (log, metrics, time.perf_counter() - t0)
        return self._cache[case_id]


@pytest.fixture(scope="session")
def case_runs():
    return CaseRuns()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
