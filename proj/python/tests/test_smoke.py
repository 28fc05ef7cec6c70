import math

import pytest

import spext


def test_gpd_round_trip():
    p = spext.GpdParams(u=0.0, sigma=1.0, xi=0.5)
    assert spext.gpd_cdf(2.0, p) == pytest.approx(0.75, abs=1e-15)
    assert spext.gpd_quantile(0.75, p) == pytest.approx(2.0, abs=1e-14)
    assert spext.gpd_logpdf(2.0, p) == pytest.approx(-math.log(8.0), abs=1e-14)


def test_return_level_exponential_limit():
    z, clamped = spext.return_level(20, 365, 0.005, spext.GpdParams(5.0, 1.0, 0.0))
    assert z == pytest.approx(5 + math.log(36.5), abs=1e-12)
    assert not clamped


def test_matern_and_range():
    assert spext.matern_correlation(1.0, 0.5) == pytest.approx(math.exp(-1.0))
    r = spext.effective_range([[1.0, 0.0], [0.0, 1.0]], 0.5, [1.0, 0.0])
    assert r == pytest.approx(-math.log(0.05), abs=1e-9)


def test_prior_set_and_periods():
    assert len(spext.beta_prior_set()) == 20
    assert spext.empirical_return_periods([0.1, 0.2, 0.3], 1.0) == pytest.approx([4 / 3, 2.0, 4.0])


def test_decluster_and_threshold():
    dates = [f"2001-01-{d:02d}" for d in range(1, 11)]
    values = [0.0] * 10
    values[3], values[4], values[5] = 2.2, 3.0, 2.5
    ex = spext.decluster(1, dates, values, 1.0)
    assert ex["clusters"] == 1
    assert ex["excesses"] == pytest.approx([2.0])
    assert spext.site_threshold(list(range(1, 1001)), 99.5) == pytest.approx(995.005)


def test_errors_are_value_errors():
    with pytest.raises(ValueError):
        spext.site_threshold([], 50.0)
    with pytest.raises(spext.SpextError):
        spext.gpd_quantile(1.5, spext.GpdParams())


def test_small_fit():
    out = spext.fit_synthetic(nx=4, ny=4, knot_stride=3, n_iter=300, burn_in=100, thin=10, n_chains=2)
    assert len(out["chains"]) == 2
    assert out["chains"][0].shape == (20, len(out["names"]))
    assert "phi.alpha0" in out["names"]
