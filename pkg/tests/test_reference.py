import io
import math

import numpy as np
import pytest
from scipy import stats

from telescale.estimators import hill_estimate
from telescale.reference import (
    fbm_path,
    fgn_autocovariance,
    moderate_truncation_bound,
    moderate_y_path,
    moderate_y_truncation_pair,
    sssi_jump_mass,
    stable_levy_path,
    stable_sssi_marginal,
)
from telescale.samplers import RateLaw, substream
from telescale.tabular import read_table


def test_fbm_variance_and_covariance():
    grid = np.linspace(0, 2, 65)
    x = fbm_path(0.75, 1.0, grid, substream(1), n_paths=10_000).values
    i1, i2 = 32, 64
    assert x[:, 0].tolist() == [0.0] * 10_000
    assert abs(x[:, i1].var() - 1.0) < 0.05
    cov = np.mean(x[:, i1] * x[:, i2])
    assert abs(cov - math.sqrt(2)) < 0.05


@pytest.mark.parametrize("method", ["circulant", "cholesky"])
def test_fbm_covariance_matrix(method):
    H, s2 = 0.7, 2.5
    grid = np.linspace(0, 1, 9)
    x = fbm_path(H, s2, grid, substream(2), n_paths=40_000, method=method).values[:, 1:]
    t = grid[1:]
    cov = 0.5 * s2 * (t[:, None] ** (2 * H) + t[None, :] ** (2 * H) - np.abs(t[:, None] - t[None, :]) ** (2 * H))
    np.testing.assert_allclose(np.cov(x.T, bias=True), cov, atol=0.06)


def test_fbm_stationary_increments():
    x = fbm_path(0.8, 1.0, np.linspace(0, 1, 17), substream(3), n_paths=20_000).values
    inc = np.diff(x, axis=1)
    v = inc.var(axis=0)
    se = v.mean() * math.sqrt(2 / inc.shape[0])
    assert np.all(np.abs(v - v.mean()) < 4 * se)
    assert np.all(np.abs(inc.mean(axis=0)) < 4 * math.sqrt(v.mean() / inc.shape[0]))


def test_fbm_validation():
    with pytest.raises(ValueError):
        fbm_path(0.75, 1.0, [0.0, 0.1, 0.3], substream(0))
    with pytest.raises(ValueError):
        fbm_path(0.4, 1.0, [0.0, 1.0], substream(0))
    with pytest.raises(ValueError):
        fbm_path(0.75, 1.0, [0.5, 1.0], substream(0))
    assert fgn_autocovariance(0.5, 4).tolist() == [1.0, 0.0, 0.0, 0.0]


def test_fbm_deterministic():
    g = np.linspace(0, 1, 33)
    np.testing.assert_array_equal(fbm_path(0.75, 1, g, substream(4)).values, fbm_path(0.75, 1, g, substream(4)).values)


def test_stable_levy_self_similarity():
    a = 1.5
    x = stable_levy_path(a, 1.0, [0.0, 1.0, 2.0], substream(5), n_paths=10_000).values
    y = stable_levy_path(a, 1.0, [0.0, 1.0], substream(6), n_paths=10_000).values
    assert stats.ks_2samp(x[:, 2], 2 ** (1 / a) * y[:, 1]).statistic < 0.02
    assert x[:, 0].tolist() == [0.0] * 10_000


def test_stable_levy_zero_scale_and_independence():
    z = stable_levy_path(1.4, 0.0, [0.0, 0.5, 1.0], substream(7), n_paths=10).values
    assert np.all(z == 0)
    x = stable_levy_path(1.7, 1.0, np.linspace(0, 1, 5), substream(8), n_paths=10_000).values
    inc = np.diff(x, axis=1)
    # rank correlation: Pearson is unstable under infinite variance
    rho = stats.spearmanr(inc[:, 0], inc[:, 2]).statistic
    assert abs(rho) < 0.03


def test_stable_levy_hill_tail():
    x = stable_levy_path(1.5, 2.0, [0.0, 1.0], substream(9), n_paths=100_000).values[:, 1]
    assert abs(hill_estimate(x[x > 0], 200, 1000) - 1.5) <= 0.1


def test_moderate_y_zero_mean_and_variance_growth():
    grid = np.linspace(0, 1, 6)
    p = moderate_y_path(1.0, 1.5, RateLaw.lognormal(0.0, 0.3), grid, 0.02, substream(10), n_paths=10_000)
    x = p.values
    assert np.all(x[:, 0] == 0)
    se = x[:, 1:].std(axis=0) / math.sqrt(x.shape[0])
    assert np.all(np.abs(x[:, 1:].mean(axis=0)) < 3 * se)
    v = x.var(axis=0)
    assert np.all(np.diff(v) > 0)
    assert np.all(np.diff(v, 2) > 0)


def test_moderate_truncation_halving_within_bound():
    grid = np.linspace(0, 1, 3)
    rate = RateLaw.constant(1.0)
    coarse, fine = moderate_y_truncation_pair(1.0, 1.5, rate, grid, 0.02, substream(11), n_paths=10_000)
    assert coarse.error_bound == pytest.approx(moderate_truncation_bound(1.0, 1.5, rate, 1.0, 0.02))
    assert fine.error_bound < coarse.error_bound
    assert fine.error_bound == pytest.approx(coarse.error_bound * 2**-0.5)
    gap = abs(fine.values[:, -1].var() - coarse.values[:, -1].var())
    assert gap < coarse.error_bound
    assert np.var(fine.values[:, -1] - coarse.values[:, -1]) < coarse.error_bound


def test_moderate_validation():
    with pytest.raises(ValueError):
        moderate_y_path(1.0, 1.5, RateLaw.constant(), [0.0, 1.0], 2.0, substream(0))
    with pytest.raises(ValueError):
        moderate_y_path(0.0, 1.5, RateLaw.constant(), [0.0, 1.0], 0.1, substream(0))


def test_sssi_marginal_zero_time_and_validation():
    assert np.all(stable_sssi_marginal(1.7, 0.8, 0.0, 5, substream(0)) == 0)
    with pytest.raises(ValueError):
        stable_sssi_marginal(1.7, 0.5, 1.0, 5, substream(0))
    with pytest.raises(ValueError):
        sssi_jump_mass(1.5, 1.7)


def test_sssi_marginal_tail_and_scaling():
    a_r, h = 1.7, (1.7 + 1 - 1.5) / 1.7
    z1 = stable_sssi_marginal(a_r, h, 1.0, 100_000, substream(12))
    assert abs(hill_estimate(np.abs(z1), 200, 1000) - a_r) <= 0.15
    z2 = stable_sssi_marginal(a_r, h, 2.0, 100_000, substream(13))
    assert stats.ks_2samp(z2 / 2**h, z1).statistic < 0.03
    assert abs(np.mean(z1)) < 0.05 * np.quantile(np.abs(z1), 0.9)


def test_sssi_jump_mass_matches_quadrature():
    from scipy import integrate

    p, a = 1.7, 1.5

    def inner(u):
        L = lambda s: max(0.0, min(1.0, s + u) - max(0.0, s))
        return integrate.quad(lambda s: L(s) ** p, -u, 1.0, points=[0.0, 1.0 - u] if u < 1 else [1.0 - u, 0.0], limit=200)[0]

    val = integrate.quad(lambda u: inner(u) * a * u ** (-a - 1), 0, 1, limit=200)[0]
    val += integrate.quad(lambda u: inner(u) * a * u ** (-a - 1), 1, np.inf, limit=200)[0]
    assert sssi_jump_mass(p, a) == pytest.approx(val, rel=1e-6)


def test_reference_path_export():
    p = fbm_path(0.75, 1.0, [0.0, 0.5, 1.0], substream(14), n_paths=2)
    buf = io.StringIO()
    p.write(buf)
    meta, cols = read_table(io.StringIO(buf.getvalue()))
    assert meta["kind"] == "reference_path" and meta["law"] == "FBM"
    assert list(cols) == ["t", "value_0", "value_1"]
    np.testing.assert_array_equal(cols["value_1"], p.values[1])
