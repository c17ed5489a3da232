import numpy as np
from scipy import stats

from mmfc.samplers import inverse_wishart, truncated_normal


def _ks_against(draws, cdf):
    res = stats.ks_1samp(draws, cdf)
    assert res.pvalue > 1e-4, res


def test_truncated_normal_matches_scipy_cdf():
    rng = np.random.default_rng(0)
    cases = [(-1.0, 0.5), (-np.inf, -1.0), (1.0, np.inf), (-0.2, 0.2), (2.0, 3.0)]
    for lo, hi in cases:
        draws = truncated_normal(rng, np.full(20000, lo), np.full(20000, hi), 0.0, 1.0)
        assert np.all(draws >= lo) and np.all(draws <= hi)
        _ks_against(draws, lambda x, lo=lo, hi=hi: stats.truncnorm.cdf(x, lo, hi))


def test_truncated_normal_location_scale():
    rng = np.random.default_rng(1)
    draws = truncated_normal(rng, 1.0, 4.0, np.full(20000, 2.0), 1.5)
    a, b = (1.0 - 2.0) / 1.5, (4.0 - 2.0) / 1.5
    ref_mean = stats.truncnorm.mean(a, b, loc=2.0, scale=1.5)
    ref_sd = stats.truncnorm.std(a, b, loc=2.0, scale=1.5)
    assert abs(draws.mean() - ref_mean) < 4 * ref_sd / np.sqrt(20000)


def test_truncated_normal_far_right_tail():
    # reflection keeps precision where the plain inverse CDF saturates
    rng = np.random.default_rng(2)
    draws = truncated_normal(rng, np.full(20000, 8.0), np.inf, 0.0, 1.0)
    assert np.all(np.isfinite(draws)) and np.all(draws >= 8.0)
    ref_mean = stats.truncnorm.mean(8.0, np.inf)
    assert abs(draws.mean() - ref_mean) < 0.01


def test_truncated_normal_beyond_representable_tail_collapses_to_bound():
    rng = np.random.default_rng(3)
    draws = truncated_normal(rng, np.full(10, -50.0), np.full(10, -40.0), 0.0, 1.0)
    assert np.all(np.isfinite(draws))
    assert np.all((draws >= -50.0) & (draws <= -40.0))


def test_inverse_wishart_moments_match_theory():
    # dof high enough that fourth moments exist, so sample variances are stable
    rng = np.random.default_rng(4)
    scale = np.array([[2.0, 0.4], [0.4, 1.0]])
    dof, q = 14.0, 2
    draws = np.array([inverse_wishart(rng, dof, scale) for _ in range(8000)])
    mean = scale / (dof - q - 1)
    assert np.allclose(draws.mean(axis=0), mean, atol=0.01)
    var_diag = 2 * np.diag(scale) ** 2 / ((dof - q - 1) ** 2 * (dof - q - 3))
    assert np.allclose(draws[:, [0, 1], [0, 1]].var(axis=0), var_diag, rtol=0.12)


def test_inverse_wishart_matches_scipy_distribution():
    rng = np.random.default_rng(7)
    scale = np.array([[2.0, 0.4], [0.4, 1.0]])
    dof = 7.0
    mine = np.array([inverse_wishart(rng, dof, scale) for _ in range(6000)])
    ref = np.array([stats.invwishart.rvs(dof, scale, random_state=rng) for _ in range(6000)])
    for i, j in [(0, 0), (0, 1), (1, 1)]:
        res = stats.ks_2samp(mine[:, i, j], ref[:, i, j])
        assert res.pvalue > 1e-4, (i, j, res)


def test_inverse_wishart_univariate_matches_invgamma_cdf():
    # one-dimensional inverse-Wishart(dof, s) is inverse-gamma(dof/2, s/2)
    rng = np.random.default_rng(5)
    dof, s = 5.0, 1.7
    draws = np.array([inverse_wishart(rng, dof, np.array([[s]]))[0, 0] for _ in range(8000)])
    _ks_against(draws, lambda x: stats.invgamma.cdf(x, dof / 2, scale=s / 2))


def test_inverse_wishart_draws_are_spd():
    rng = np.random.default_rng(6)
    scale = np.array([[1.0, 0.2, 0.1], [0.2, 2.0, -0.3], [0.1, -0.3, 1.5]])
    for _ in range(50):
        draw = inverse_wishart(rng, 6.0, scale)
        np.linalg.cholesky(draw)
        assert np.allclose(draw, draw.T)
