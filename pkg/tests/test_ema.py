import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adams.ema import (
    GaussianSpec,
    MomentStats,
    best_variance_match_beta,
    burn_in_steps,
    denominator_gap,
    mc_moments,
    s_moments,
    v_moments_inf,
)


def test_stationary_variance_coefficient_at_095():
    # (1 - beta2) / (1 + beta2) = 0.0256410...
    spec = GaussianSpec(0.0, 1.0)
    stats = s_moments(spec, 0.95, None)
    coefficient = stats.variance / (2.0 * 1.0 + 4.0 * 0.0)
    assert abs(coefficient - 0.0256410) < 5e-7
    assert coefficient == (1.0 - 0.95) / (1.0 + 0.95)


def test_s_moments_plug_in_and_deterministic():
    assert s_moments(GaussianSpec(1.0, 0.5), 0.95, None).mean == 1.25
    stats = s_moments(GaussianSpec(2.0, 0.0), 0.9, 7)
    assert stats.mean == 4.0 * (1.0 - 0.9**7)
    assert stats.variance == 0.0


def test_s_moments_mean_increases_with_t():
    spec = GaussianSpec(1.0, 1.0)
    means = [s_moments(spec, 0.9, t).mean for t in (1, 2, 5, 20, 100)]
    assert all(a < b for a, b in zip(means, means[1:]))
    assert means[-1] < s_moments(spec, 0.9, None).mean


def test_v_variance_coefficients_at_paper_betas():
    # beta = 0.95, beta1 = 0.9: sigma^4 bracket 0.005, mu^2 sigma^2 bracket 0.05
    sig4 = v_moments_inf(GaussianSpec(0.0, 1.0), 0.95, 0.9).variance / 2.0
    assert abs(sig4 - 0.005) < 0.005 * 1e-6
    total = v_moments_inf(GaussianSpec(1.0, 1.0), 0.95, 0.9).variance
    mu2sig2 = (total - 2.0 * sig4) / 4.0
    assert abs(mu2sig2 - 0.05) < 0.05 * 1e-6


def test_v_moments_beta_zero_is_single_chi_square():
    stats = v_moments_inf(GaussianSpec(1.5, 2.0), 0.0, 0.9)
    assert abs(stats.mean - (1.5**2 + 4.0)) < 1e-12
    assert abs(stats.variance - (2.0 * 16.0 + 4.0 * 1.5**2 * 4.0)) < 1e-12


def test_v_moments_sigma_zero():
    stats = v_moments_inf(GaussianSpec(3.0, 0.0), 0.95, 0.9)
    assert stats.mean == 9.0 and stats.variance == 0.0


def test_v_mean_plug_in():
    got = v_moments_inf(GaussianSpec(0.0, 1.0), 0.9, 0.9).mean
    assert abs(got - (1.0 - 2.0 * 0.81 / 1.9)) < 1e-12


def test_denominator_gap_examples():
    _, rel = denominator_gap(GaussianSpec(10.0, 1.0), 0.95, 0.9, 0.95)
    assert abs(rel - 0.9 / 101.0) < 1e-15
    assert abs(rel - 0.00891) < 5e-6

    abs_gap, rel = denominator_gap(GaussianSpec(5.0, 0.0), 0.95, 0.9, 0.95)
    assert abs_gap == 0.0 and rel == 0.0

    _, rel = denominator_gap(GaussianSpec(0.0, 2.0), 0.95, 0.9, 0.95)
    assert abs(rel - 2.0 * 0.95 * 0.9 / 1.9) < 1e-15

    _, rel00 = denominator_gap(GaussianSpec(0.0, 0.0), 0.95, 0.9, 0.95)
    assert rel00 == 0.0


def test_rel_gap_decreases_in_snr():
    rels = [
        denominator_gap(GaussianSpec(snr, 1.0), 0.95, 0.9, 0.95)[1]
        for snr in (0.0, 0.5, 1.0, 2.0, 10.0, 100.0)
    ]
    assert all(a > b for a, b in zip(rels, rels[1:]))


@given(
    st.floats(-5, 5),
    st.floats(0, 5),
    st.floats(0, 0.999),
    st.floats(0, 0.999),
    st.floats(0, 0.999),
)
@settings(max_examples=300)
def test_variances_never_negative(mu, sigma, beta2, beta, beta1):
    spec = GaussianSpec(mu, sigma)
    assert s_moments(spec, beta2, None).variance >= 0.0
    assert s_moments(spec, beta2, 3).variance >= 0.0
    assert v_moments_inf(spec, beta, beta1).variance >= 0.0


def test_burn_in_steps():
    assert burn_in_steps(0.95) == math.ceil(math.log(1e-6) / math.log(0.95))
    assert burn_in_steps(0.0) == 1
    assert burn_in_steps(0.9, 0.95) == burn_in_steps(0.95)


def test_mc_matches_analytic_s_process():
    spec = GaussianSpec(1.0, 0.5)
    mc = mc_moments("S", spec, beta2=0.95, samples=10**5, seed=42)
    analytic = s_moments(spec, 0.95, None)
    assert abs(mc.mean - analytic.mean) <= 3.0 * mc.se_mean
    assert abs(mc.variance - analytic.variance) <= 3.0 * mc.se_variance


def test_mc_matches_analytic_v_process():
    spec = GaussianSpec(0.0, 1.0)
    mc = mc_moments("V", spec, beta=0.9, beta1=0.9, samples=2 * 10**5, seed=7)
    analytic = v_moments_inf(spec, 0.9, 0.9)
    assert abs(mc.mean - analytic.mean) <= 3.0 * mc.se_mean
    assert abs(mc.variance - analytic.variance) <= 3.0 * mc.se_variance


def test_mc_sigma_zero_short_circuits_exactly():
    mc = mc_moments("S", GaussianSpec(2.0, 0.0), beta2=0.9, samples=10**4, seed=0)
    assert mc.mean == 4.0 and mc.variance == 0.0 and mc.se_mean == 0.0
    mc = mc_moments("V", GaussianSpec(2.0, 0.0), beta=0.9, beta1=0.9, samples=10**4, seed=0)
    assert mc.mean == 4.0 and mc.variance == 0.0


def test_mc_reproducible_and_validated():
    spec = GaussianSpec(1.0, 1.0)
    a = mc_moments("S", spec, beta2=0.9, samples=10**4, seed=7)
    b = mc_moments("S", spec, beta2=0.9, samples=10**4, seed=7)
    assert a == b
    with pytest.raises(ValueError):
        mc_moments("S", spec, beta2=0.9, samples=5000, seed=0)
    with pytest.raises(ValueError):
        mc_moments("S", spec, samples=10**4, seed=0)  # missing beta2
    with pytest.raises(ValueError):
        mc_moments("X", spec, beta2=0.9, samples=10**4, seed=0)


def test_best_variance_match_beta_reported_not_asserted():
    spec = GaussianSpec(1.0, 1.0)
    best = best_variance_match_beta(spec, 0.9, 0.95)
    assert 0.0 <= best < 1.0
    target = s_moments(spec, 0.95, None).variance
    err_best = abs(v_moments_inf(spec, best, 0.9).variance - target)
    for endpoint in (0.0, 0.5, 0.99):
        assert err_best <= abs(v_moments_inf(spec, endpoint, 0.9).variance - target) + 1e-12


def test_moment_stats_validation():
    with pytest.raises(ValueError):
        MomentStats(0.0, -1e-9)
    with pytest.raises(ValueError):
        GaussianSpec(0.0, -0.1)
