import warnings

import pytest

from pblf import experiment as ex

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def run_preset(name, mode="x-space", overrides=()):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        built = ex.build(ex.apply_overrides(ex.preset(name), list(overrides)))
    return built, ex.run(built, mode=mode)


@pytest.fixture(scope="session")
def oc_run():
    """Output-constrained preset, x-space, RK4 h=1e-3 over 30 s."""
    built, recs = run_preset("paper-output-constrained")
    return built, recs["x"]


@pytest.fixture(scope="session")
def fs_run():
    """Full-state preset, x-space."""
    built, recs = run_preset("paper-full-state")
    return built, recs["x"]
