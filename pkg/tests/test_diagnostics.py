import numpy as np
import pytest

from rtmixed.diagnostics import bulk_ess, diagnose, split_rhat
from rtmixed.errors import DomainError
from rtmixed.gibbs import McmcConfig, gibbs_fit


def test_iid_chains_rhat_near_one():
    x = np.random.default_rng(1).standard_normal((2, 5000))
    assert 1.0 <= split_rhat(x) <= 1.01
    assert bulk_ess(x) == pytest.approx(10_000, rel=0.1)


def test_shifted_chains_flagged():
    x = np.random.default_rng(2).standard_normal((2, 2000))
    x[1] += 3.0
    assert split_rhat(x) > 1.1


def test_trending_chain_flagged():
    x = np.random.default_rng(3).standard_normal((4, 1000)) + np.linspace(0, 4, 1000)
    assert split_rhat(x) > 1.1


def test_autocorrelated_chain_has_low_ess():
    rng = np.random.default_rng(4)
    x = np.zeros((4, 4000))
    for k in range(1, 4000):
        x[:, k] = 0.95 * x[:, k - 1] + rng.standard_normal(4)
    # AR(1) with phi = 0.95: ESS per draw = (1 - phi) / (1 + phi)
    assert bulk_ess(x) == pytest.approx(16_000 * 0.05 / 1.95, rel=0.35)


def test_single_chain_is_error():
    with pytest.raises(DomainError):
        split_rhat(np.zeros((1, 100)))
    with pytest.raises(DomainError):
        bulk_ess(np.zeros((1, 100)))


def test_constant_chain_is_nan():
    assert np.isnan(split_rhat(np.ones((2, 100))))


def test_default_fit_converges(sim_table):
    d = gibbs_fit(sim_table, m=McmcConfig(4, 4000, 1000, seed=2))
    diag = diagnose(d)
    assert len(diag) == 6 + sim_table.n_subjects
    assert diag["rhat"].max() < 1.05
    assert diag["ess_bulk"].min() > 100
