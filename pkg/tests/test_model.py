import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from conftest import make_table
from rtmixed.errors import DomainError
from rtmixed.model import (
    Block,
    ModelKind,
    PriorConfig,
    build_design,
    log_prior_density_g,
    prior_density_g,
    read_prior_config,
    sample_g,
    write_prior_config,
)
from rtmixed.rng import stream


@pytest.fixture
def two_by_two():
    return make_table([("a", 0, 500), ("a", 1, 560), ("b", 0, 480), ("b", 1, 530)])


def test_design_shapes(two_by_two):
    assert build_design(two_by_two, ModelKind.NULL).matrix.shape == (4, 3)
    assert build_design(two_by_two, ModelKind.COMMON).matrix.shape == (4, 4)
    assert build_design(two_by_two, ModelKind.UNCONSTRAINED).matrix.shape == (4, 6)
    assert build_design(two_by_two, ModelKind.POSITIVE).matrix.shape == (4, 6)


def test_design_row_layout(two_by_two):
    w = build_design(two_by_two, ModelKind.UNCONSTRAINED).matrix
    # subject a, condition 1: intercept, alpha_a, alpha_b, nu, theta_a, theta_b
    assert w[1].tolist() == [1, 1, 0, 1, 1, 0]
    assert w[2].tolist() == [1, 0, 1, 0, 0, 0]


def test_common_column_is_sum_of_deviation_columns(sim_table):
    d = build_design(sim_table, ModelKind.UNCONSTRAINED)
    common = d.block(Block.COMMON_EFFECT)
    devs = d.block(Block.EFFECT_DEV)
    np.testing.assert_array_equal(common[:, 0], devs.sum(axis=1))
    np.testing.assert_array_equal(d.block(Block.SUBJECT_DEV).sum(axis=1), 1.0)


def test_designs_are_nested(sim_table):
    null = build_design(sim_table, ModelKind.NULL).matrix
    common = build_design(sim_table, ModelKind.COMMON).matrix
    full = build_design(sim_table, ModelKind.UNCONSTRAINED).matrix
    np.testing.assert_array_equal(common[:, : null.shape[1]], null)
    np.testing.assert_array_equal(full[:, : common.shape[1]], common)


def test_design_groups(two_by_two):
    assert list(build_design(two_by_two, ModelKind.NULL).groups) == ["g_alpha"]
    assert list(build_design(two_by_two, ModelKind.COMMON).groups) == ["g_alpha", "g_nu"]
    assert list(build_design(two_by_two, "unconstrained").groups) == ["g_alpha", "g_nu", "g_delta"]


def test_prior_density_integrates_to_one():
    r = 1 / 6
    # the mass above 1e6 is erf(r / sqrt(2e6)), about 1.3e-4, so compare
    # the finite-range integral with that closed form and the full one with 1
    finite, _ = integrate.quad(prior_density_g, 0, 1e6, args=(r,), points=[r * r, 1, 100], limit=200)
    assert finite == pytest.approx(1 - special.erf(r / math.sqrt(2e6)), abs=1e-8)
    full, _ = integrate.quad(prior_density_g, 0, np.inf, args=(r,), limit=200)
    assert full == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("r", [1.0, 1 / 6, 0.1])
def test_density_matches_chi_square_change_of_variable(r):
    g = np.array([r * r, 0.01, 0.5, 3.0])
    # g = r^2 / X with X ~ chi2(1): p(g) = chi2.pdf(r^2/g) * r^2 / g^2
    expected = stats.chi2.pdf(r * r / g, df=1) * r * r / g**2
    np.testing.assert_allclose(prior_density_g(g, r), expected, rtol=1e-12)
    np.testing.assert_allclose(np.exp(log_prior_density_g(g, r)), expected, rtol=1e-12)


def test_prior_density_rejects_nonpositive_arguments():
    for g, r in ((0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)):
        with pytest.raises(DomainError):
            prior_density_g(g, r)


def test_sample_g_matches_distribution():
    r = 1 / 6
    g = sample_g(r, stream(1, 99), size=1_000_000)
    assert np.all(g > 0)
    ks = stats.kstest(g, stats.invgamma(0.5, scale=0.5 * r * r).cdf).statistic
    assert ks < 0.005
    assert np.median(g) == pytest.approx(r * r / 0.4549, rel=0.02)


def test_prior_config_validation_and_io(tmp_path):
    with pytest.raises(DomainError):
        PriorConfig(r_nu=0)
    path = tmp_path / "prior.txt"
    path.write_text("# defaults, spelled as fractions\nr_nu = 1/6\nr_delta = 0.1\nshift_ms = 250\n")
    p = read_prior_config(path)
    assert p.r_nu == pytest.approx(1 / 6)
    assert p.shift_ms == 250
    write_prior_config(tmp_path / "out.txt", p)
    assert read_prior_config(tmp_path / "out.txt") == p
