"""Shared fixtures: default-plan runs of the named presets, computed once."""

from functools import lru_cache

import pytest

from optosync.analysis import DISPLACEMENT, INTENSITY, classify, power_spectrum
from optosync.config import preset
from optosync.dynamics import SimPlan, integrate, steady_window


class Run:
    def __init__(self, setup, traj):
        self.setup = setup
        self.traj = traj
        self.spectra = power_spectrum(traj, INTENSITY + DISPLACEMENT)
        self.cls = classify(self.spectra, traj)


@lru_cache(maxsize=None)
def _run(name, overrides):
    setup = preset(name).with_values(**dict(overrides)) if overrides else preset(name)
    plan = SimPlan()
    traj = integrate(plan, setup.config, setup.coupling())
    return Run(setup, steady_window(traj, plan.discard_fraction))


@pytest.fixture(scope="session")
def simulate():
    """``simulate("fig2b", J=0.1)`` returns a cached steady-state ``Run``."""

    def get(name, **overrides):
        return _run(name, tuple(sorted(overrides.items())))

    return get


# acceptance report: one line per criterion, printed after the run

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance():
    """``acceptance(label, ok, detail)`` records a criterion outcome."""

    def record(label, ok, detail=""):
        _ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
