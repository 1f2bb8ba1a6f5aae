import time

import pytest

from gibbsgram.experiments import FhnExperimentConfig, run_fhn_reproduction

# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES = []


class FhnRuns:
    """Full-size network runs, cached so several test modules can share them."""

    def __init__(self):
        self._cache = {}
        self.elapsed = {}

    def get(self, temperature, seed):
        key = (temperature, seed)
        if key not in self._cache:
            t0 = time.perf_counter()
            self._cache[key] = run_fhn_reproduction(
                FhnExperimentConfig(temperature=temperature, seed=seed))
            self.elapsed[key] = time.perf_counter() - t0
        return self._cache[key]


@pytest.fixture(scope="session")
def fhn_runs():
    return FhnRuns()


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
