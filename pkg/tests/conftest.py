from datetime import date, timedelta

import numpy as np
import pandas as pd
import pytest

from vstoxx_lab.models.heston_engine import model_smile
from vstoxx_lab.models.vstoxx_pricer import vstoxx_future, vstoxx_index
from vstoxx_lab.schemas.heston import HestonParams
from vstoxx_lab.schemas.market import MarketDay
from vstoxx_lab.services.calibrator import select_slice
from vstoxx_lab.services.synthetic import SyntheticConfig, generate_synthetic

AS_OF = date(2016, 5, 2)


@pytest.fixture
def base_params() -> HestonParams:
    return HestonParams(kappa=2.0, theta=0.04, xi=0.5, rho=-0.7, v0=0.09)


def random_box_params(rng: np.random.Generator) -> HestonParams:
    """Draw inside a well-behaved part of the calibration box."""
    return HestonParams(
        kappa=rng.uniform(0.5, 8.0),
        theta=rng.uniform(0.01, 0.3),
        xi=rng.uniform(0.1, 1.5),
        rho=rng.uniform(-0.95, 0.5),
        v0=rng.uniform(0.01, 0.5),
    )


def option_chain(params: HestonParams, as_of: date, expiry_days, forward: float = 100.0) -> pd.DataFrame:
    rows = []
    for days in expiry_days:
        expiry = as_of + timedelta(days=days)
        tau = days / 365.0
        strikes = forward * np.exp(np.linspace(-0.3, 0.2, 11) * np.sqrt(tau) * 2.0)
        vols = model_smile(params, forward, strikes, tau)
        rows.extend(
            {"date": as_of, "expiry_date": expiry, "strike": k, "implied_vol": v, "forward": forward}
            for k, v in zip(strikes, vols)
        )
    return pd.DataFrame(rows)


def market_day(
    params: HestonParams,
    as_of: date = AS_OF,
    option_days: int = 90,
    future_days: int = 21,
    premium: float = 0.0,
) -> MarketDay:
    smile = select_slice(option_chain(params, as_of, [option_days]), as_of)
    expiry = as_of + timedelta(days=future_days)
    return MarketDay(
        date=as_of,
        slice=smile,
        vstoxx_observed=vstoxx_index(params),
        future_expiry_date=expiry,
        future_market_price=vstoxx_future(params, future_days / 365.0) + premium,
    )


@pytest.fixture(scope="session")
def small_bundle():
    return generate_synthetic(SyntheticConfig(n_days=60, seed=11, effect_strength=1.0, noise_scale=0.05))
