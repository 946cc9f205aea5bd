from dataclasses import dataclass
from datetime import date
from typing import List

import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

# the target comes first, then market data, then account flows
TABLE_COLUMNS = [
    "diff_price",
    "market_price",
    "vstoxx",
    "fit_residual",
    "days_to_expiry",
    "pos_a",
    "pos_p",
    "pos_m",
    "pos_change_a",
    "pos_change_p",
    "pos_change_m",
    "trad_vol_a",
    "trad_vol_p",
    "trad_vol_m",
    "trad_vol_tot",
    "avg_fut_spd",
    "avg_fut_bid_sz",
    "avg_fut_ask_sz",
    "option_pos_a",
    "option_pos_p",
    "option_pos_m",
]

TARGET_COLUMN = "diff_price"

# Model inputs after consolidation (vstoxx, fit residual and option positions dropped)
FEATURE_COLUMNS = [
    "market_price",
    "days_to_expiry",
    "pos_a",
    "pos_p",
    "pos_m",
    "pos_change_a",
    "pos_change_p",
    "pos_change_m",
    "trad_vol_a",
    "trad_vol_p",
    "trad_vol_m",
    "trad_vol_tot",
    "avg_fut_spd",
    "avg_fut_bid_sz",
    "avg_fut_ask_sz",
]

_ZERO_SUM_TOL = 1e-6


class FeatureRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    date: date
    diff_price: float
    market_price: float
    vstoxx: float
    fit_residual: float
    days_to_expiry: int
    pos_a: float
    pos_p: float
    pos_m: float
    pos_change_a: float
    pos_change_p: float
    pos_change_m: float
    trad_vol_a: float
    trad_vol_p: float
    trad_vol_m: float
    trad_vol_tot: float
    avg_fut_spd: float
    avg_fut_bid_sz: float
    avg_fut_ask_sz: float
    option_pos_a: float
    option_pos_p: float
    option_pos_m: float

    @model_validator(mode="after")
    def check_account_identities(self):
        if abs(self.pos_a + self.pos_p + self.pos_m) > _ZERO_SUM_TOL:
            raise ValueError(f"{self.date}: positions do not sum to zero")
        if abs(self.pos_change_a + self.pos_change_p + self.pos_change_m) > _ZERO_SUM_TOL:
            raise ValueError(f"{self.date}: position changes do not sum to zero")
        if abs(self.trad_vol_a + self.trad_vol_p + self.trad_vol_m - self.trad_vol_tot) > _ZERO_SUM_TOL:
            raise ValueError(f"{self.date}: account volumes do not add up to the total")
        return self


@dataclass(frozen=True)
class ConsolidatedTable:
    """Model-ready snapshot: features in FEATURE_COLUMNS order plus the target."""

    features: pd.DataFrame
    target: pd.Series
    dates: List[date]

    @property
    def columns(self) -> List[str]:
        return list(self.features.columns)

    def __len__(self) -> int:
        return len(self.target)

    def take(self, positions) -> "ConsolidatedTable":
        return ConsolidatedTable(
            features=self.features.iloc[positions].reset_index(drop=True),
            target=self.target.iloc[positions].reset_index(drop=True),
            dates=[self.dates[i] for i in positions],
        )
