import io

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from telescale.estimators import (
    AD_CRITICAL,
    AggregatedVarianceHurst,
    AndersonDarlingNormality,
    HillEstimator,
    SeasonalDetrender,
    aggregated_variances,
    anderson_darling_normal,
    default_block_sizes,
    detrend_deseasonalize,
    hill,
    hill_estimate,
    hurst_aggregated_variance,
    hurst_variance_time,
    qq_exponential_log,
    qq_normal,
)
from telescale.reference import fbm_path
from telescale.samplers import substream
from telescale.tabular import read_table


def test_ad_statistic_matches_scipy():
    x = np.random.default_rng(0).normal(3, 2, 500)
    assert anderson_darling_normal(x).statistic == pytest.approx(stats.anderson(x).statistic, rel=1e-10)


def test_ad_bands():
    rng = np.random.default_rng(1)
    assert anderson_darling_normal(rng.normal(size=1000)).band in (">0.10", "0.05-0.10", "0.01-0.05")
    res = anderson_darling_normal(rng.pareto(1.5, 1000))
    assert res.band == "p<0.01" and res.rejects(0.01)
    assert AD_CRITICAL[0.10] < AD_CRITICAL[0.05] < AD_CRITICAL[0.01]


def test_ad_false_rejection_rate():
    rng = np.random.default_rng(2)
    rej = np.mean([anderson_darling_normal(rng.normal(size=200)).rejects(0.05) for _ in range(2000)])
    assert abs(rej - 0.05) < 0.015


def test_ad_errors():
    with pytest.raises(ValueError):
        anderson_darling_normal([1.0] * 20)
    with pytest.raises(ValueError):
        anderson_darling_normal(np.arange(5.0))


def test_hill_on_pareto():
    x = np.random.default_rng(3).pareto(1.6, 100_000) + 1.0
    assert abs(hill_estimate(x, 200, 2000) - 1.6) < 0.05


def test_hill_exact_small_sample():
    tr = hill([1.0, np.e, np.e**2, np.e**3])
    # k=1: 1/(3-2); k=2: 1/((3+2)/2 - 1); k=3: 1/((3+2+1)/3 - 0)
    np.testing.assert_allclose(tr.alpha, [1.0, 1 / 1.5, 0.5])
    np.testing.assert_allclose(tr.ci_halfwidth, 1.96 * tr.alpha / np.sqrt([1, 2, 3]))


def test_hill_errors():
    with pytest.raises(ValueError):
        hill([1.0, 2.0])
    with pytest.raises(ValueError):
        hill([1.0, -2.0, 3.0])
    with pytest.raises(ValueError):
        hill([1.0, 2.0, 3.0], k_max=3)
    with pytest.raises(ValueError):
        hill([2.0, 2.0, 2.0])


@given(arrays(float, st.integers(5, 50), elements=st.floats(1e-3, 1e6)), st.floats(0.01, 100.0))
def test_hill_scale_invariant(x, c):
    assume(np.ptp(np.log(x)) > 0)
    # compare log-excesses: 1/excess is ill-conditioned when top values tie to within an ulp
    a, b = (np.nan_to_num(1.0 / hill(v).alpha) for v in (x, c * x))
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12 * np.abs(np.log(x)).max() + 1e-12)


def test_qq_normal_on_gaussian():
    x = np.random.default_rng(4).normal(5, 2, 2000)
    q = qq_normal(x)
    assert q.slope == pytest.approx(2, rel=0.05) and q.intercept == pytest.approx(5, abs=0.1)
    assert q.r > 0.999 and q.fit_count == 2000
    assert np.all(np.diff(q.empirical) >= 0)


def test_qq_log_slope_is_inverse_tail_index():
    x = np.random.default_rng(5).pareto(1.5, 20_000) + 1
    q = qq_exponential_log(x, 20_000)
    assert 1 / q.slope == pytest.approx(1.5, rel=0.05)
    assert qq_exponential_log(x).fit_count == 55


def test_qq_write_roundtrip():
    q = qq_normal(np.random.default_rng(6).normal(size=10))
    buf = io.StringIO()
    q.write(buf, series="x")
    meta, cols = read_table(io.StringIO(buf.getvalue()))
    assert meta["kind"] == "qq" and meta["series"] == "x"
    np.testing.assert_array_equal(cols["empirical"], q.empirical)


def test_hurst_on_fbm_increments():
    for H in (0.6, 0.75, 0.9):
        x = fbm_path(H, 1.0, np.arange(4097) / 4096, substream(7, int(100 * H))).values
        assert abs(hurst_aggregated_variance(np.diff(x)) - H) < 0.05


def test_hurst_white_noise():
    x = np.random.default_rng(8).normal(size=2**14)
    assert abs(hurst_aggregated_variance(x) - 0.5) < 0.03


def test_hurst_variance_time_exact():
    t = np.array([0.25, 0.5, 1.0])
    assert hurst_variance_time(t, 3 * t**1.5) == pytest.approx(0.75)


def test_block_validation():
    assert default_block_sizes(4096).tolist() == [2**k for k in range(10)]
    with pytest.raises(ValueError):
        aggregated_variances(np.ones(100), [1])
    with pytest.raises(ValueError):
        aggregated_variances(np.random.default_rng(0).normal(size=100), [1, 64])


@pytest.mark.parametrize("period", [None, 7])
def test_detrend_idempotent_and_phase_means(period):
    rng = np.random.default_rng(9)
    n = 140
    season = np.tile(rng.normal(size=7) * 5, n // 7)
    y = 3 + 0.1 * np.arange(n) + season + rng.normal(size=n)
    r = detrend_deseasonalize(y, period)
    np.testing.assert_allclose(detrend_deseasonalize(r, period), r, atol=1e-10)
    if period:
        np.testing.assert_allclose([r[p::period].mean() for p in range(period)], 0, atol=1e-10)
        assert r.std() < 1.3
    assert abs(np.polyfit(np.arange(n), r, 1)[0]) < 1e-10


def test_detrend_errors():
    with pytest.raises(ValueError):
        detrend_deseasonalize(np.ones(10), 7)
    with pytest.raises(ValueError):
        detrend_deseasonalize(np.ones(10), 1)


def test_sklearn_wrappers():
    rng = np.random.default_rng(10)
    x = rng.pareto(1.5, 5000) + 1
    est = HillEstimator(k_range=(50, 200)).fit(x)
    assert est.alpha_ == pytest.approx(hill_estimate(x, 50, 200))
    assert clone(est).get_params() == {"k_max": None, "k_range": (50, 200)}
    assert AndersonDarlingNormality().fit(x).rejects()
    noise = rng.normal(size=4096)
    assert AggregatedVarianceHurst().fit(noise).hurst_ == pytest.approx(hurst_aggregated_variance(noise))
    y = np.arange(50.0) + rng.normal(size=50)
    np.testing.assert_allclose(SeasonalDetrender(period=5).fit_transform(y), detrend_deseasonalize(y, 5), atol=1e-10)
    pipe = make_pipeline(SeasonalDetrender(), AndersonDarlingNormality()).fit(y)
    assert pipe[-1].band_ in (">0.10", "0.05-0.10", "0.01-0.05", "p<0.01")
