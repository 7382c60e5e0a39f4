import os

import pytest

from oracles import constant_model, default_array


@pytest.fixture
def std_array():
    return default_array()


@pytest.fixture
def std_model():
    return constant_model(1.0)


@pytest.fixture(scope="session")
def default_zeta_draws():
    """10^4 limit draws for the default config, on the streams the convergence check uses."""
    from poisloc import harness
    from poisloc.limit_process import LimitModel

    cfg = harness.default_config()
    limit = LimitModel.from_model(cfg.signal, cfg.array, cfg.theta0)
    return harness.sample_zeta_draws(limit, 10_000, cfg.seed + 1, jobs=os.cpu_count() or 1)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def report():
    """Record one pass/fail line per acceptance criterion."""

    def emit(criterion, passed, detail):
        line = f"CRITERION {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
