import numpy as np
import pytest

from vstoxx_lab.core.errors import DomainError
from vstoxx_lab.models.vstoxx_pricer import (
    FUTURE_GRID_POINTS,
    FUTURE_S_MIN,
    deterministic_future,
    expected_variance,
    future_integrand,
    future_term_structure,
    index_window,
    vstoxx_future,
    vstoxx_index,
)
from vstoxx_lab.schemas.heston import CALIBRATION_BOUNDS, HestonParams

from tests.conftest import random_box_params


def test_index_identity_over_the_box():
    rng = np.random.default_rng(0)
    for _ in range(200):
        values = {name: rng.uniform(lo, hi) for name, (lo, hi) in CALIBRATION_BOUNDS.items()}
        values["v0"] = values["theta"]
        params = HestonParams(**values)
        assert vstoxx_index(params) == pytest.approx(100.0 * np.sqrt(params.theta), rel=1e-12)


def test_index_at_four_percent_variance():
    params = HestonParams(kappa=3.0, theta=0.04, xi=0.6, rho=-0.5, v0=0.04)
    assert vstoxx_index(params) == pytest.approx(20.0, abs=1e-12)


def test_index_window_weights():
    params = HestonParams(kappa=2.0, theta=0.05, xi=0.5, rho=-0.5, v0=0.1)
    window = index_window(params)
    kt = 2.0 * 30.0 / 365.0
    assert window.a == pytest.approx((1.0 - np.exp(-kt)) / kt, rel=1e-14)
    assert window.b == pytest.approx(0.05 * (1.0 - window.a), rel=1e-14)


def test_future_at_zero_maturity_is_the_index(base_params):
    assert vstoxx_future(base_params, 0.0) == pytest.approx(vstoxx_index(base_params), rel=1e-6)
    assert vstoxx_future(base_params, 1e-8) == pytest.approx(vstoxx_index(base_params), rel=1e-6)


def test_small_vol_of_vol_matches_deterministic_limit():
    params = HestonParams(kappa=2.0, theta=0.04, xi=1e-4, rho=-0.5, v0=0.09)
    for tau in (7 / 365, 21 / 365, 35 / 365, 0.5):
        assert vstoxx_future(params, tau) == pytest.approx(deterministic_future(params, tau), rel=1e-5)


def test_zero_vol_of_vol_branch():
    params = HestonParams(kappa=2.0, theta=0.04, xi=0.0, rho=-0.5, v0=0.09)
    assert vstoxx_future(params, 0.2) == pytest.approx(deterministic_future(params, 0.2), rel=1e-6)


def test_jensen_upper_bound():
    rng = np.random.default_rng(1)
    for _ in range(200):
        params = random_box_params(rng)
        tau = rng.uniform(1 / 365, 0.5)
        assert vstoxx_future(params, tau) <= deterministic_future(params, tau) * (1.0 + 1e-8)


def test_integrand_slope_at_lower_boundary(base_params):
    s = np.array([FUTURE_S_MIN, 10.0 * FUTURE_S_MIN])
    values = future_integrand(s, base_params, 21 / 365)
    slope = np.diff(np.log(values)) / np.diff(np.log(s))
    assert slope[0] == pytest.approx(-0.5, abs=0.01)


def test_integrand_is_finite_and_positive(base_params):
    s = np.geomspace(1e-12, 1e20, 1000)
    values = future_integrand(s, base_params, 0.1)
    assert np.all(np.isfinite(values)) and np.all(values > 0.0)


def test_grid_refinement_is_stable(base_params):
    for tau in (7 / 365, 21 / 365, 35 / 365):
        coarse = vstoxx_future(base_params, tau)
        fine = vstoxx_future(base_params, tau, n_points=2 * FUTURE_GRID_POINTS)
        assert fine == pytest.approx(coarse, rel=1e-6)


def test_term_structure_decreases_when_variance_is_above_its_mean():
    params = HestonParams(kappa=3.0, theta=0.03, xi=0.5, rho=-0.7, v0=0.12)
    curve = future_term_structure(params, [0.0, 0.05, 0.1, 0.2, 0.4])
    assert np.all(np.diff(curve) < 0.0)


def test_expected_variance_limits(base_params):
    assert expected_variance(base_params, 0.0) == pytest.approx(base_params.v0)
    assert expected_variance(base_params, 50.0) == pytest.approx(base_params.theta, rel=1e-12)


def test_negative_tau_is_rejected(base_params):
    with pytest.raises(DomainError):
        vstoxx_future(base_params, -0.01)
    with pytest.raises(DomainError):
        future_integrand(np.array([0.0, 1.0]), base_params, 0.1)


def test_future_does_not_depend_on_correlation():
    prices = [
        vstoxx_future(HestonParams(kappa=2.0, theta=0.04, xi=0.5, rho=rho, v0=0.09), 21 / 365)
        for rho in (-0.9, -0.3, 0.0, 0.6)
    ]
    assert prices == pytest.approx([prices[0]] * len(prices), rel=1e-14)
