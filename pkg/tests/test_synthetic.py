from datetime import date

import numpy as np
import pytest
from pydantic import ValidationError

from vstoxx_lab.services.features import load_daily_data
from vstoxx_lab.services.synthetic import (
    SyntheticConfig,
    futures_expiry,
    generate_synthetic,
    inventory_signal,
    listed_futures,
    option_expiries,
    third_friday,
    write_bundle,
)


def test_calendar_helpers():
    assert third_friday(2016, 5) == date(2016, 5, 20)
    assert third_friday(2016, 7) == date(2016, 7, 15)
    assert futures_expiry(2016, 5) == date(2016, 5, 18)
    assert futures_expiry(2016, 12) == date(2016, 12, 21)


def test_listed_futures_are_in_the_future():
    as_of = date(2016, 5, 18)
    listed = listed_futures(as_of)
    assert len(listed) == 3
    assert all(e > as_of for e in listed)
    assert listed == sorted(listed)


def test_option_expiries_within_horizon():
    as_of = date(2016, 5, 2)
    expiries = option_expiries(as_of)
    assert expiries[:2] == [date(2016, 5, 20), date(2016, 6, 17)]
    assert all(1 <= (e - as_of).days <= 400 for e in expiries)
    assert all(e.month in (3, 6, 9, 12) for e in expiries[2:])


def test_accounts_sum_to_zero(small_bundle):
    flows = small_bundle.flows
    np.testing.assert_array_equal(flows["pos_a"] + flows["pos_p"] + flows["pos_m"], 0.0)
    np.testing.assert_array_equal(flows["pos_change_a"] + flows["pos_change_p"] + flows["pos_change_m"], 0.0)
    np.testing.assert_allclose(
        flows["trad_vol_a"] + flows["trad_vol_p"] + flows["trad_vol_m"], flows["trad_vol_tot"]
    )


def test_planted_effect_matches_signal(small_bundle):
    truth = small_bundle.truth.merge(small_bundle.flows, on="date")
    c = 0.5
    expected = c * inventory_signal(truth["pos_p"], truth["pos_a"]) * truth["market_future"] / 20.0
    np.testing.assert_allclose(truth["effect"], expected, rtol=1e-9, atol=1e-12)


def test_zero_strength_and_noise_settle_at_model_price():
    bundle = generate_synthetic(SyntheticConfig(n_days=50, seed=3, effect_strength=0.0, noise_scale=0.0))
    np.testing.assert_allclose(bundle.truth["market_future"], bundle.truth["model_future"], rtol=1e-14)
    assert (bundle.truth["effect"].abs() < 1e-12).all()


def test_generation_is_seeded():
    config = SyntheticConfig(n_days=50, seed=5)
    first, second = generate_synthetic(config), generate_synthetic(config)
    assert first.futures.equals(second.futures)
    assert first.options.equals(second.options)


def test_config_bounds():
    with pytest.raises(ValidationError):
        SyntheticConfig(n_days=10)
    with pytest.raises(ValidationError):
        SyntheticConfig(effect_strength=11.0)


def test_written_bundle_is_byte_identical(tmp_path, small_bundle):
    first = write_bundle(small_bundle, tmp_path / "a", "abc123", 11)
    second = write_bundle(small_bundle, tmp_path / "b", "abc123", 11)
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().startswith("# vstoxx_lab ")


def test_written_bundle_loads_every_day(tmp_path, small_bundle):
    write_bundle(small_bundle, tmp_path, "abc123", 11)
    data = load_daily_data(tmp_path)
    assert len(data.days) == 60
    assert not data.dropped
    truth = small_bundle.truth.set_index("date")
    for day in data.days[:5]:
        assert day.future_expiry_date == truth.loc[day.date, "future_expiry_date"]
        assert day.future_market_price == pytest.approx(truth.loc[day.date, "market_future"], rel=1e-12)


def test_truth_feature_frame(small_bundle):
    frame = small_bundle.truth_feature_frame()
    assert len(frame) == 60
    np.testing.assert_allclose(
        frame["diff_price"], small_bundle.truth["market_future"] - small_bundle.truth["model_future"]
    )


@pytest.mark.slow
def test_effect_sign_follows_the_signal():
    bundle = generate_synthetic(SyntheticConfig(n_days=500, seed=7, effect_strength=1.0, noise_scale=0.05))
    frame = bundle.truth_feature_frame()
    signal = inventory_signal(frame["pos_p"], frame["pos_a"])
    assert np.corrcoef(signal, frame["diff_price"])[0, 1] > 0.5
