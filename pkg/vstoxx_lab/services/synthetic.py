"""Synthetic market: option chains, VSTOXX index, futures and account flows.

Options are priced exactly by the Heston engine along a slowly mean-reverting
daily parameter path. Futures settle at the Heston model price plus a planted
inventory effect

    g = c * (tanh(pos_p / P0) - tanh(pos_a / P0)) * market_price / 20,
    c = 0.5 * effect_strength,

plus Gaussian noise. Because g depends on the market price itself, the
settlement is solved as M = (F_model + noise) / (1 - c h / 20) with
h = tanh(pos_p / P0) - tanh(pos_a / P0).
"""

from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from ..core.errors import PricingError
from ..core.io import write_csv
from ..core.logging import StructuredLogger, log_performance
from ..models.heston_engine import expected_total_variance, model_smile
from ..models.vstoxx_pricer import vstoxx_future, vstoxx_index
from ..schemas.features import TABLE_COLUMNS
from ..schemas.heston import HestonParams
from ..schemas.market import year_fraction
from .calibrator import front_month
from .features import FLOW_COLUMNS, FLOWS_FILE, FUTURES_FILE, INDEX_FILE, OPTIONS_FILE

START_DATE = date(2016, 5, 2)
SPOT0 = 3400.0
SPOT_TRADING_DAYS = 252

# sub-box of the calibration box the parameter path moves in
PARAMETER_RANGES: Dict[str, Tuple[float, float]] = {
    "kappa": (0.5, 6.0),
    "theta": (0.02, 0.15),
    "xi": (0.2, 1.5),
    "rho": (-0.9, -0.3),
    "v0": (0.01, 0.3),
}
PARAM_PERSISTENCE = 0.98
PARAM_LOGIT_STD = 0.8

OPTION_HORIZON_DAYS = 400
MONEYNESS_GRID = np.arange(-3.0, 2.75, 0.5)
STRIKE_TICK = 25.0
FUTURES_LISTED = 3

POSITION_SCALE = 3000.0  # P0
POSITION_STD = 12_000.0
POSITION_MEAN_P = 8_000.0
POSITION_MEAN_A = -8_000.0
POSITION_REVERSION = 0.05

logger = StructuredLogger("synthetic")


class SyntheticConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_days: int = Field(500, ge=50)
    seed: int = 7
    effect_strength: float = Field(1.0, ge=0.0, le=10.0)
    noise_scale: float = Field(0.05, ge=0.0)
    start_date: date = START_DATE


@dataclass
class SyntheticBundle:
    options: pd.DataFrame
    index: pd.DataFrame
    futures: pd.DataFrame
    flows: pd.DataFrame
    # per-day true parameters, front-month model future and planted effect; never written
    truth: pd.DataFrame

    def truth_feature_frame(self) -> pd.DataFrame:
        """Feature table built from the true model futures instead of a calibration run."""
        frame = self.truth[["date", "days_to_expiry", "vstoxx"]].copy()
        frame["diff_price"] = self.truth["market_future"] - self.truth["model_future"]
        frame["market_price"] = self.truth["market_future"]
        frame["fit_residual"] = 0.0
        frame = frame.merge(self.flows, on="date", how="inner")
        return frame[["date"] + TABLE_COLUMNS].reset_index(drop=True)


def third_friday(year: int, month: int) -> date:
    first = date(year, month, 1)
    return first + timedelta(days=(4 - first.weekday()) % 7 + 14)


def _add_months(year: int, month: int, k: int) -> Tuple[int, int]:
    total = year * 12 + month - 1 + k
    return total // 12, total % 12 + 1


def option_expiries(as_of: date, horizon_days: int = OPTION_HORIZON_DAYS) -> List[date]:
    """Next two monthly third Fridays plus quarterly ones within the horizon."""
    expiries = []
    for k in range(0, horizon_days // 28 + 2):
        y, m = _add_months(as_of.year, as_of.month, k)
        expiry = third_friday(y, m)
        days = (expiry - as_of).days
        if days < 1 or days > horizon_days:
            continue
        if len(expiries) < 2 or m in (3, 6, 9, 12):
            expiries.append(expiry)
    return expiries


def futures_expiry(year: int, month: int) -> date:
    """VSTOXX futures expire 30 days before the third Friday of the following month."""
    y, m = _add_months(year, month, 1)
    return third_friday(y, m) - timedelta(days=30)


def listed_futures(as_of: date, count: int = FUTURES_LISTED) -> List[date]:
    expiries = []
    k = 0
    while len(expiries) < count:
        y, m = _add_months(as_of.year, as_of.month, k)
        expiry = futures_expiry(y, m)
        if expiry > as_of:
            expiries.append(expiry)
        k += 1
    return expiries


def _parameter_path(n_days: int, rng: np.random.Generator) -> List[HestonParams]:
    names = list(PARAMETER_RANGES)
    innovation = PARAM_LOGIT_STD * np.sqrt(1.0 - PARAM_PERSISTENCE ** 2)
    z = rng.normal(0.0, PARAM_LOGIT_STD, size=len(names))
    path = []
    for _ in range(n_days):
        unit = 1.0 / (1.0 + np.exp(-z))
        values = {
            name: lo + (hi - lo) * float(u)
            for name, (lo, hi), u in zip(names, PARAMETER_RANGES.values(), unit)
        }
        path.append(HestonParams(**values))
        z = PARAM_PERSISTENCE * z + innovation * rng.standard_normal(len(names))
    return path


def _smile_rows(params: HestonParams, as_of: date, expiry: date, forward: float) -> List[dict]:
    tau = year_fraction(as_of, expiry)
    guess = np.sqrt(expected_total_variance(params, tau) / tau)
    strikes = np.unique(np.round(forward * np.exp(-MONEYNESS_GRID * guess * np.sqrt(tau)) / STRIKE_TICK) * STRIKE_TICK)
    strikes = strikes[strikes > 0.0]
    while strikes.size:
        try:
            vols = model_smile(params, forward, strikes, tau)
            break
        except PricingError as e:
            if e.strike is None:
                raise
            logger.debug("Strike dropped from synthetic smile", date=str(as_of), strike=e.strike, error=str(e))
            strikes = strikes[strikes != e.strike]
    else:
        return []
    return [
        {"date": as_of, "expiry_date": expiry, "strike": float(k), "implied_vol": float(v), "forward": forward}
        for k, v in zip(strikes, vols)
    ]


def _ou_path(n_days: int, mean: float, rng: np.random.Generator) -> np.ndarray:
    shock = POSITION_STD * np.sqrt(1.0 - (1.0 - POSITION_REVERSION) ** 2)
    x = np.empty(n_days)
    x[0] = mean + POSITION_STD * rng.standard_normal()
    for t in range(1, n_days):
        x[t] = x[t - 1] + POSITION_REVERSION * (mean - x[t - 1]) + shock * rng.standard_normal()
    return x


def _flows(dates: List[date], rng: np.random.Generator) -> pd.DataFrame:
    n = len(dates)
    pos_p = np.round(_ou_path(n, POSITION_MEAN_P, rng))
    pos_a = np.round(_ou_path(n, POSITION_MEAN_A, rng))
    pos_m = -(pos_a + pos_p)
    changes = {name: np.concatenate([[0.0], np.diff(pos)]) for name, pos in (("a", pos_a), ("p", pos_p), ("m", pos_m))}
    volumes = {
        name: np.abs(changes[name]) + np.round(rng.lognormal(np.log(base), 0.4, size=n))
        for name, base in (("a", 4000.0), ("p", 6000.0), ("m", 9000.0))
    }
    option_a = np.round(_ou_path(n, -20_000.0, rng))
    option_p = np.round(_ou_path(n, 15_000.0, rng))
    frame = pd.DataFrame({
        "date": dates,
        "pos_a": pos_a,
        "pos_p": pos_p,
        "pos_m": pos_m,
        "pos_change_a": changes["a"],
        "pos_change_p": changes["p"],
        "pos_change_m": changes["m"],
        "trad_vol_a": volumes["a"],
        "trad_vol_p": volumes["p"],
        "trad_vol_m": volumes["m"],
        "trad_vol_tot": volumes["a"] + volumes["p"] + volumes["m"],
        "avg_fut_spd": np.round(0.05 + 0.02 * np.abs(rng.standard_normal(n)), 4),
        "avg_fut_bid_sz": np.round(rng.lognormal(np.log(150.0), 0.3, size=n)),
        "avg_fut_ask_sz": np.round(rng.lognormal(np.log(150.0), 0.3, size=n)),
        "option_pos_a": option_a,
        "option_pos_p": option_p,
        "option_pos_m": -(option_a + option_p),
    })
    return frame[["date"] + FLOW_COLUMNS]


def inventory_signal(pos_p, pos_a):
    """h = tanh(pos_p / P0) - tanh(pos_a / P0)"""
    return np.tanh(np.asarray(pos_p) / POSITION_SCALE) - np.tanh(np.asarray(pos_a) / POSITION_SCALE)


@log_performance
def generate_synthetic(config: SyntheticConfig) -> SyntheticBundle:
    children = np.random.SeedSequence(config.seed).spawn(4)
    param_rng, spot_rng, flow_rng, noise_rng = (np.random.default_rng(c) for c in children)

    dates = [d.date() for d in pd.bdate_range(config.start_date, periods=config.n_days)]
    path = _parameter_path(config.n_days, param_rng)
    flows = _flows(dates, flow_rng)
    signal = inventory_signal(flows["pos_p"].to_numpy(), flows["pos_a"].to_numpy())
    c = 0.5 * config.effect_strength

    option_rows: List[dict] = []
    index_rows: List[dict] = []
    futures_rows: List[dict] = []
    truth_rows: List[dict] = []
    spot = SPOT0
    for t, (as_of, params) in enumerate(zip(dates, path)):
        if t > 0:
            var = params.v0 / SPOT_TRADING_DAYS
            spot *= float(np.exp(np.sqrt(var) * spot_rng.standard_normal() - 0.5 * var))
        forward = round(spot, 2)
        for expiry in option_expiries(as_of):
            option_rows.extend(_smile_rows(params, as_of, expiry, forward))

        index_level = vstoxx_index(params)
        index_rows.append({"date": as_of, "vstoxx": index_level})

        scale = 1.0 - c * signal[t] / 20.0
        listed = listed_futures(as_of)
        front = front_month(listed, as_of)
        for expiry in listed:
            model = vstoxx_future(params, year_fraction(as_of, expiry))
            noise = config.noise_scale * noise_rng.standard_normal()
            market = (model + noise) / scale
            futures_rows.append({"date": as_of, "expiry_date": expiry, "settlement_price": market})
            if expiry == front:
                truth_rows.append({
                    "date": as_of,
                    **params.model_dump(),
                    "vstoxx": index_level,
                    "future_expiry_date": expiry,
                    "days_to_expiry": (expiry - as_of).days,
                    "model_future": model,
                    "effect": market - model - noise,
                    "noise": noise,
                    "market_future": market,
                })

    bundle = SyntheticBundle(
        options=pd.DataFrame(option_rows, columns=["date", "expiry_date", "strike", "implied_vol", "forward"]),
        index=pd.DataFrame(index_rows, columns=["date", "vstoxx"]),
        futures=pd.DataFrame(futures_rows, columns=["date", "expiry_date", "settlement_price"]),
        flows=flows,
        truth=pd.DataFrame(truth_rows),
    )
    logger.info(
        "Synthetic market generated",
        days=config.n_days,
        option_rows=len(option_rows),
        effect_strength=config.effect_strength,
        noise_scale=config.noise_scale,
    )
    return bundle


def _iso(frame: pd.DataFrame) -> pd.DataFrame:
    out = frame.copy()
    for column in ("date", "expiry_date"):
        if column in out.columns:
            out[column] = [d.isoformat() for d in out[column]]
    return out


def write_bundle(bundle: SyntheticBundle, out_dir: Union[str, Path], config_hash: str, seed: int) -> List[Path]:
    out_dir = Path(out_dir)
    return [
        write_csv(_iso(frame), out_dir / name, config_hash, seed)
        for name, frame in (
            (OPTIONS_FILE, bundle.options),
            (INDEX_FILE, bundle.index),
            (FUTURES_FILE, bundle.futures),
            (FLOWS_FILE, bundle.flows),
        )
    ]
