import numpy as np
import pytest
from scipy.stats import norm

from vstoxx_lab.core.errors import DomainError, NoSolutionError
from vstoxx_lab.models.blackscholes import (
    atm_vol,
    black_price,
    black_put,
    implied_vol,
    intrinsic_value,
    moneyness,
    solve_implied_vol,
    vega,
)


def test_atm_call_matches_closed_form():
    expected = 100.0 * (2.0 * norm.cdf(0.1) - 1.0)
    assert black_price(100.0, 100.0, 1.0, 0.2) == pytest.approx(expected, abs=1e-10)
    assert expected == pytest.approx(7.9656, abs=1e-4)


def test_zero_vol_is_intrinsic():
    assert black_price(100.0, 90.0, 1.0, 0.0) == 10.0
    assert black_put(100.0, 90.0, 1.0, 0.0) == 0.0


def test_strikeless_call_is_forward():
    assert black_price(100.0, 1e-12, 1.0, 0.2) == pytest.approx(100.0, abs=1e-9)


def test_put_call_parity():
    call = black_price(100.0, 110.0, 0.5, 0.3)
    put = black_put(100.0, 110.0, 0.5, 0.3)
    assert call - put == pytest.approx(100.0 - 110.0, abs=1e-12)


def test_price_is_monotone_in_vol_and_bounded():
    sigmas = np.linspace(0.01, 3.0, 50)
    prices = black_price(100.0, 105.0, 1.0, sigmas)
    assert np.all(np.diff(prices) > 0.0)
    assert np.all(prices >= 0.0) and np.all(prices <= 100.0)


@pytest.mark.parametrize(
    "args",
    [(0.0, 100.0, 1.0, 0.2), (100.0, -1.0, 1.0, 0.2), (100.0, 100.0, -1.0, 0.2), (100.0, 100.0, 1.0, -0.1)],
)
def test_black_price_domain_errors(args):
    with pytest.raises(DomainError):
        black_price(*args)


def test_intrinsic_value():
    assert intrinsic_value(100.0, 90.0, True) == 10.0
    assert intrinsic_value(100.0, 90.0, False) == 0.0


def test_vega_examples():
    assert vega(100.0, 100.0, 1.0, 0.2) == pytest.approx(100.0 * norm.pdf(0.1), rel=1e-12)
    assert vega(100.0, 100.0, 1e-12, 0.2) < 1e-4
    assert vega(100.0, 100.0, 1.0, 1e3) < 1e-12


def test_vega_drift_enters_d1():
    with_drift = vega(100.0, 100.0, 1.0, 0.2, mu=0.05)
    assert with_drift == pytest.approx(100.0 * norm.pdf(0.35), rel=1e-12)


@pytest.mark.parametrize("tau, sigma", [(0.0, 0.2), (1.0, 0.0)])
def test_vega_domain_errors(tau, sigma):
    with pytest.raises(DomainError):
        vega(100.0, 100.0, tau, sigma)


def test_implied_vol_round_trip():
    price = black_price(100.0, 95.0, 0.75, 0.25)
    assert implied_vol(price, 100.0, 95.0, 0.75) == pytest.approx(0.25, abs=1e-8)
    put = black_put(100.0, 95.0, 0.75, 0.25)
    assert implied_vol(put, 100.0, 95.0, 0.75, is_call=False) == pytest.approx(0.25, abs=1e-8)


def test_implied_vol_rejects_intrinsic_price():
    with pytest.raises(NoSolutionError):
        implied_vol(10.0, 100.0, 90.0, 1.0)


def test_implied_vol_rejects_price_above_forward():
    with pytest.raises(NoSolutionError):
        implied_vol(100.5, 100.0, 90.0, 1.0)


def test_implied_vol_sweep_over_moneyness_box():
    forward = 100.0
    for sigma in (0.05, 0.2, 0.5, 1.0, 1.5):
        for tau in (0.05, 0.25, 1.0):
            m = np.linspace(-14.0, 5.0, 20)
            strikes = forward * np.exp(-m * sigma * np.sqrt(tau))
            otm_call = strikes >= forward
            prices = black_price(forward, strikes, tau, sigma, otm_call)
            vols, solved = solve_implied_vol(prices, forward, strikes, tau, otm_call)
            assert solved.all()
            np.testing.assert_allclose(vols, sigma, atol=1e-8)


def test_moneyness_examples():
    assert moneyness(100.0, 100.0, 0.2, 1.0) == 0.0
    assert moneyness(100.0 * np.exp(0.2), 100.0, 0.2, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert moneyness(100.0, 120.0, 0.2, 1.0) < 0.0


def test_atm_vol_tie_goes_to_lower_strike():
    assert atm_vol(100.0, np.array([105.0, 95.0]), np.array([0.2, 0.3])) == 0.3
    assert atm_vol(100.0, np.array([90.0, 101.0, 120.0]), np.array([0.4, 0.25, 0.2])) == 0.25
