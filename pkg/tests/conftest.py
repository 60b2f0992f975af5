import numpy as np
import pytest

from rtmixed.dataio import TrialTable
from rtmixed.gibbs import McmcConfig
from rtmixed.simulate import SimSpec, generate

# Lines recorded by tests/test_acceptance.py, echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_table(rows, names=("0", "1")):
    subj, cond, rt = zip(*rows)
    return TrialTable(np.array(subj), np.array(cond), np.array(rt, dtype=float), names)


@pytest.fixture
def small_mcmc():
    return McmcConfig(n_chains=2, n_iterations=1500, burn_in=500, seed=5)


@pytest.fixture(scope="session")
def toy_table():
    """3 subjects x 2 conditions x 4 replicates on the raw scale."""
    return generate(SimSpec(true_model="unconstrained", n_subjects=3, trials_per_cell=4,
                            mu=1200, sigma=150, nu=60, eta=30, seed=7))


@pytest.fixture(scope="session")
def sim_table():
    """20 subjects, 40 trials per cell, unconstrained effects."""
    return generate(SimSpec(true_model="unconstrained", n_subjects=20, trials_per_cell=40,
                            mu=1200, sigma=200, nu=60, eta=30, seed=20))
