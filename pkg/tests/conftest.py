import numpy as np
import pytest

from qndsim.params import CampaignPlan, ExperimentParams

N_REF = 8.5e5


def single_bin_params(n_trials, n_atoms=N_REF, d0=43.5, seed=1, **kw):
    """Reference parameters at a fixed atom number with one RO trial per atom trial."""
    plan = CampaignPlan(n_cycles=n_trials, n_steps=1, loss_per_step=0.0, ro_trials_per_cycle=1)
    return ExperimentParams(n_atoms_total=n_atoms / 0.9, d0=d0, sigma0_over_A=None,
                            campaign=plan, seed=seed, **kw)


@pytest.fixture
def reference_params():
    return ExperimentParams(n_atoms_total=N_REF / 0.9, d0=43.5, sigma0_over_A=None)


@pytest.fixture(autouse=True)
def _quiet_numpy():
    with np.errstate(all="ignore"):
        yield


_acceptance = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append(report)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for rep in _acceptance:
        name = rep.nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if rep.passed else 'FAIL'}  {name}  ({rep.duration:.1f}s)")
