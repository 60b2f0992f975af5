import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_table
from rtmixed.dataio import apply_shift_log
from rtmixed.errors import DomainError, ScaleError
from rtmixed.gibbs import McmcConfig, PosteriorDraws, gibbs_fit
from rtmixed.model import read_kv
from rtmixed.summary import (
    back_transform,
    posterior_model_prob,
    summarize_effects,
    write_effects,
    write_summary,
)


def constant_draws(t, value=5.0):
    shape = (2, 50)
    n = t.n_subjects
    z = np.zeros(shape)
    return PosteriorDraws(mu=z, nu=z + value, sigma2=z + 1, g_alpha=z + 1, g_nu=z + 1,
                          g_delta=z + 1, alpha=np.zeros(shape + (n,)),
                          theta=np.zeros(shape + (n,)), subjects=t.subjects)


@pytest.fixture
def log_table():
    rows = [(s, c, 400.0 + 100 * c + 5 * k + 20 * i)
            for i, s in enumerate("ab") for c in (0, 1) for k in range(4)]
    return apply_shift_log(make_table(rows), 200)


def test_posterior_model_prob_values():
    assert round(posterior_model_prob(7.19), 2) == 0.88
    assert round(posterior_model_prob(4.17), 2) == 0.81
    assert posterior_model_prob(1.0) == 0.5
    assert posterior_model_prob(2.0, prior_odds=0.5) == 0.5
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(DomainError):
            posterior_model_prob(bad)


def test_back_transform_factors(log_table):
    assert round(back_transform(0.15, log_table).multiplicative_factor, 2) == 1.16
    assert 1.08 <= back_transform(0.08, log_table).multiplicative_factor <= 1.09
    zero = back_transform(0.0, log_table)
    assert (zero.multiplicative_factor, zero.percent_increase, zero.approx_ms) == (1.0, 0.0, 0.0)


def test_back_transform_percent_consistency(log_table):
    bt = back_transform(0.123, log_table)
    assert bt.percent_increase == pytest.approx(100 * (bt.multiplicative_factor - 1), rel=1e-12)
    baseline = np.mean([400.0 + 5 * k + 20 * i - 200 for i in range(2) for k in range(4)])
    assert bt.baseline_ms == pytest.approx(baseline, rel=1e-12)
    assert bt.approx_ms == pytest.approx((bt.multiplicative_factor - 1) * baseline, rel=1e-12)


def test_back_transform_refuses_raw_scale():
    t = make_table([("a", 0, 500.0), ("a", 1, 560.0)])
    with pytest.raises(ScaleError):
        back_transform(0.1, t)


def test_degenerate_draws(log_table):
    s = summarize_effects(constant_draws(log_table), log_table)
    assert (s.table.ci_low == 5.0).all() and (s.table.ci_high == 5.0).all()
    assert s.variance_ratio == 0.0
    assert s.nu_ci == (5.0, 5.0)


def test_level_bounds(log_table):
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(DomainError):
            summarize_effects(constant_draws(log_table), log_table, level=bad)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.99))
def test_intervals_bracket_mean_and_nest(level):
    rng = np.random.default_rng(0)
    t = make_table([(s, c, 500.0 + 10 * c) for s in "abc" for c in (0, 1)])
    d = constant_draws(t)
    d = PosteriorDraws(mu=d.mu, nu=d.nu, sigma2=d.sigma2, g_alpha=d.g_alpha, g_nu=d.g_nu,
                       g_delta=d.g_delta, alpha=d.alpha, theta=rng.normal(size=d.theta.shape),
                       subjects=d.subjects)
    narrow = summarize_effects(d, t, level)
    wide = summarize_effects(d, t, min(level + 0.009, 0.999))
    assert (narrow.table.ci_low <= narrow.table.ci_high).all()
    assert (wide.table.ci_low <= narrow.table.ci_low).all()
    assert (wide.table.ci_high >= narrow.table.ci_high).all()


def test_shrinkage_on_simulated_data(sim_table):
    s = summarize_effects(gibbs_fit(sim_table, m=McmcConfig(2, 2000, 500, seed=4)), sim_table)
    assert 0 <= s.variance_ratio < 1
    assert s.estimated_range[1] - s.estimated_range[0] < s.observed_range[1] - s.observed_range[0]
    assert list(s.table.observed_effect) == sorted(s.table.observed_effect)
    assert s.interval_violations == ()


def test_writers(tmp_path, log_table):
    s = summarize_effects(constant_draws(log_table, 0.15), log_table)
    write_effects(tmp_path / "effects.csv", s)
    write_summary(tmp_path / "summary.txt", s, back_transform(s.nu_mean, log_table))
    kv = read_kv(tmp_path / "summary.txt")
    assert kv["scale"] == "shifted_log"
    assert float(kv["multiplicative_factor"]) == pytest.approx(np.exp(0.15))
    assert (tmp_path / "effects.csv").read_text().startswith("subject,observed_effect")
