from datetime import timedelta

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from vstoxx_lab.core.errors import DataError, EmptySliceError, NoExpiryError, PricingError
from vstoxx_lab.models.vstoxx_pricer import vstoxx_future
from vstoxx_lab.schemas.heston import CalibrationResult, HestonParams
from vstoxx_lab.services import calibrator
from vstoxx_lab.services.calibrator import (
    W_IDX,
    W_SIGMA,
    CombinedObjective,
    calibrate_global,
    calibrate_warm,
    calibration_frame,
    combined_objective,
    front_month,
    index_se,
    projected_gradient,
    records_from_frame,
    run_timeseries,
    select_slice,
    smile_mse,
)
from vstoxx_lab.services.features import load_daily_data
from vstoxx_lab.services.synthetic import SyntheticConfig, generate_synthetic, write_bundle

from tests.conftest import AS_OF, market_day, option_chain, random_box_params


def _flat_chain(strikes, tau_days=90, vol=0.2, forward=100.0):
    expiry = AS_OF + timedelta(days=tau_days)
    return pd.DataFrame(
        {"date": AS_OF, "expiry_date": expiry, "strike": strikes, "implied_vol": vol, "forward": forward}
    )


def test_select_slice_takes_latest_expiry_within_horizon(base_params):
    chain = option_chain(base_params, AS_OF, [30, 280, 320])
    smile = select_slice(chain, AS_OF)
    assert smile.expiry_date == AS_OF + timedelta(days=280)
    assert smile.tau == pytest.approx(280 / 365)


def test_select_slice_moneyness_filter():
    tau = 90 / 365
    scale = 0.2 * np.sqrt(tau)
    strikes = [100.0, 100.0 * np.exp(15.0 * scale), 100.0 * np.exp(-4.9 * scale), 100.0 * np.exp(10.0 * scale)]
    smile = select_slice(_flat_chain(strikes), AS_OF)
    kept = sorted(q.moneyness for q in smile.quotes)
    assert len(kept) == 3
    assert kept[0] == pytest.approx(-10.0)
    assert 0.0 in kept
    assert kept[-1] == pytest.approx(4.9)


def test_select_slice_prices_the_out_of_the_money_side():
    smile = select_slice(_flat_chain([90.0, 100.0, 110.0]), AS_OF)
    assert [q.is_call for q in smile.quotes] == [False, True, True]
    assert all(q.vega > 0.0 for q in smile.quotes)


def test_select_slice_without_eligible_expiry():
    with pytest.raises(NoExpiryError):
        select_slice(_flat_chain([100.0], tau_days=365), AS_OF)
    with pytest.raises(NoExpiryError):
        select_slice(_flat_chain([100.0], tau_days=0), AS_OF)


def test_select_slice_empty_chain():
    with pytest.raises(EmptySliceError):
        select_slice(_flat_chain([]), AS_OF)


def test_front_month_rolls_the_day_before_expiry():
    expiries = [AS_OF + timedelta(days=d) for d in (1, 2, 30)]
    assert front_month(expiries, AS_OF) == AS_OF + timedelta(days=2)
    assert front_month(expiries[::-1], AS_OF - timedelta(days=5)) == AS_OF + timedelta(days=1)
    with pytest.raises(NoExpiryError):
        front_month([AS_OF, AS_OF + timedelta(days=1)], AS_OF)


def test_smile_mse_is_vega_weighted(base_params, monkeypatch):
    smile = select_slice(_flat_chain([90.0, 100.0, 110.0]), AS_OF)
    monkeypatch.setattr(calibrator, "model_smile", lambda params, f, k, tau, n: smile.implied_vols + 0.05)
    assert smile_mse(base_params, smile) == pytest.approx(0.0025, rel=1e-9)


def test_smile_mse_ignores_vega_scale(base_params):
    smile = market_day(base_params).slice
    other = HestonParams(kappa=1.0, theta=0.06, xi=0.8, rho=-0.3, v0=0.05)
    scaled = smile.model_copy(update={"quotes": [q.model_copy(update={"vega": 3.0 * q.vega}) for q in smile.quotes]})
    assert smile_mse(other, scaled) == pytest.approx(smile_mse(other, smile), rel=1e-12)


def test_index_se_examples():
    params = HestonParams(kappa=2.0, theta=0.04, xi=0.5, rho=-0.5, v0=0.04)
    assert index_se(params, 22.0) == pytest.approx(4.0, rel=1e-12)
    assert index_se(params, 20.0) == pytest.approx(0.0, abs=1e-20)


def test_combined_objective_weights(base_params):
    day = market_day(base_params)
    other = HestonParams(kappa=1.0, theta=0.06, xi=0.8, rho=-0.3, v0=0.05)
    expected = W_SIGMA * smile_mse(other, day.slice) + W_IDX * index_se(other, day.vstoxx_observed)
    assert combined_objective(other, day.slice, day.vstoxx_observed) == pytest.approx(expected, rel=1e-12)
    assert combined_objective(other, day.slice, day.vstoxx_observed, w_sigma=0.0, w_idx=1.0) == pytest.approx(
        index_se(other, day.vstoxx_observed), rel=1e-12
    )


def test_objective_penalizes_failed_pricing(base_params, monkeypatch):
    day = market_day(base_params)

    def broken(*args, **kwargs):
        raise PricingError("integral did not settle", strike=100.0)

    monkeypatch.setattr(calibrator, "model_smile", broken)
    objective = CombinedObjective(day.slice, day.vstoxx_observed)
    assert objective(base_params.to_array()) == calibrator.FAILED_EVALUATION_PENALTY
    assert objective.n_failures == 1


def test_result_must_decompose():
    with pytest.raises(ValidationError):
        CalibrationResult(
            params=HestonParams(kappa=2.0, theta=0.04, xi=0.5, rho=-0.5, v0=0.04),
            objective=1.0, smile_mse=0.0, index_se=0.0, converged=True, n_evaluations=1,
        )


def test_projected_gradient_stays_in_the_box():
    fun = lambda x: float(np.sum(x ** 2))
    bounds = [(0.0, 1.0), (-1.0, 1.0)]
    grad = projected_gradient(fun, np.array([0.0, 0.5]), bounds)
    assert grad[0] == pytest.approx(1e-6, abs=1e-9)
    assert grad[1] == pytest.approx(1.0, rel=1e-6)


def test_warm_start_from_truth_stays_put(base_params):
    day = market_day(base_params)
    result = calibrate_warm(day.slice, day.vstoxx_observed, base_params)
    assert result.objective < 1e-10
    assert result.params.in_calibration_box()


def test_warm_start_trace_is_non_increasing(base_params):
    day = market_day(base_params)
    start = HestonParams(kappa=1.5, theta=0.05, xi=0.6, rho=-0.6, v0=0.08)
    result = calibrate_warm(day.slice, day.vstoxx_observed, start)
    trace = np.array(result.trace)
    assert np.all(np.diff(trace) <= 1e-12 * np.maximum(trace[:-1], 1.0))
    assert result.objective <= trace[0]


def test_global_calibration_is_reproducible(base_params):
    day = market_day(base_params)
    first = calibrate_global(day.slice, day.vstoxx_observed, seed=3, popsize=5, maxiter=3)
    second = calibrate_global(day.slice, day.vstoxx_observed, seed=3, popsize=5, maxiter=3)
    pooled = calibrate_global(day.slice, day.vstoxx_observed, seed=3, popsize=5, maxiter=3, threads=2)
    np.testing.assert_array_equal(first.params.to_array(), second.params.to_array())
    np.testing.assert_array_equal(first.params.to_array(), pooled.params.to_array())
    assert first.params.in_calibration_box()
    assert first.objective == pytest.approx(W_SIGMA * first.smile_mse + W_IDX * first.index_se, rel=1e-12)


def _fake_result(params: HestonParams) -> CalibrationResult:
    return CalibrationResult(params=params, objective=0.0, smile_mse=0.0, index_se=0.0, converged=True, n_evaluations=1)


def test_timeseries_records_failures_and_continues(base_params, monkeypatch):
    days = [market_day(base_params, AS_OF + timedelta(days=i)) for i in range(3)]
    warm_starts = []

    def fake_global(smile, vstoxx, *args, **kwargs):
        return _fake_result(base_params)

    def fake_warm(smile, vstoxx, prev, *args, **kwargs):
        warm_starts.append(prev)
        if smile.as_of_date == days[1].date:
            raise PricingError("integral did not settle")
        return _fake_result(prev)

    monkeypatch.setattr(calibrator, "calibrate_global", fake_global)
    monkeypatch.setattr(calibrator, "calibrate_warm", fake_warm)

    records = run_timeseries(days)
    assert [r.success for r in records] == [True, False, True]
    assert records[1].error.startswith("PricingError")
    assert records[1].market_future == days[1].future_market_price
    assert warm_starts == [base_params, base_params]
    assert records[0].diff_price == pytest.approx(0.0, abs=1e-9)
    assert records[2].model_future == pytest.approx(vstoxx_future(base_params, days[2].future_tau))


def test_timeseries_restarts_globally_until_a_day_succeeds(base_params, monkeypatch):
    days = [market_day(base_params, AS_OF + timedelta(days=i)) for i in range(2)]
    calls = []

    def fake_global(smile, vstoxx, *args, **kwargs):
        calls.append(smile.as_of_date)
        if len(calls) == 1:
            raise EmptySliceError("no vega")
        return _fake_result(base_params)

    monkeypatch.setattr(calibrator, "calibrate_global", fake_global)
    records = run_timeseries(days)
    assert calls == [days[0].date, days[1].date]
    assert [r.success for r in records] == [False, True]


def test_timeseries_rejects_unsorted_days(base_params):
    days = [market_day(base_params, AS_OF + timedelta(days=i)) for i in (1, 0)]
    with pytest.raises(DataError):
        run_timeseries(days)


def test_calibration_frame_round_trip(base_params):
    day = market_day(base_params, premium=0.3)
    records = [
        calibrator._record_for(day, _fake_result(base_params), calibrator.FUTURE_GRID_POINTS),
        calibrator.CalibrationRecord(date=day.date + timedelta(days=1), error="NoExpiryError: none"),
    ]
    frame = calibration_frame(records)
    assert list(frame.columns) == calibrator.CALIBRATION_COLUMNS
    back = records_from_frame(frame)
    assert back[0].params == base_params
    assert back[0].diff_price == pytest.approx(0.3, abs=1e-9)
    assert back[1].params is None and not back[1].success


@pytest.mark.slow
def test_global_calibration_recovers_a_synthetic_day(base_params):
    day = market_day(base_params, option_days=120)
    result = calibrate_global(day.slice, day.vstoxx_observed, seed=0)
    assert result.objective < 1e-4
    assert vstoxx_future(result.params, day.future_tau) == pytest.approx(day.future_market_price, abs=0.1)


@pytest.mark.slow
def test_cold_calibration_reprices_the_future():
    rng = np.random.default_rng(404)
    hits = 0
    for trial in range(10):
        params = random_box_params(rng)
        day = market_day(params, option_days=120)
        result = calibrate_global(day.slice, day.vstoxx_observed, seed=trial, popsize=10, maxiter=100)
        model = vstoxx_future(result.params, day.future_tau)
        hits += abs(model / day.future_market_price - 1.0) <= 1e-3
    assert hits >= 9


@pytest.mark.slow
def test_warm_start_tracks_a_drifting_series():
    days = []
    for t in range(50):
        params = HestonParams(
            kappa=2.0 + 0.5 * np.sin(t / 10.0),
            theta=0.04 + 0.01 * t / 50.0,
            xi=0.5,
            rho=-0.7,
            v0=0.06 + 0.03 * np.sin(t / 8.0),
        )
        days.append(market_day(params, as_of=AS_OF + timedelta(days=t)))
    records = run_timeseries(days, seed=1, popsize=10, maxiter=100)
    assert all(record.success for record in records)
    assert max(abs(record.diff_price) for record in records) <= 0.25


@pytest.mark.slow
def test_series_without_inventory_effect_has_small_differences(tmp_path):
    bundle = generate_synthetic(SyntheticConfig(n_days=50, seed=5, effect_strength=0.0, noise_scale=0.0))
    write_bundle(bundle, tmp_path, "zero-effect", 5)
    records = run_timeseries(load_daily_data(tmp_path).days, seed=5, popsize=10, maxiter=100)
    diffs = np.array([abs(record.diff_price) if record.success else np.inf for record in records])
    assert np.mean(diffs < 0.05) >= 0.95
