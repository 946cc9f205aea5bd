from datetime import date
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

DAYS_PER_YEAR = 365.0


def year_fraction(start: date, end: date) -> float:
    """ACT/365 fixed."""
    return (end - start).days / DAYS_PER_YEAR


class OptionQuote(BaseModel):
    model_config = ConfigDict(frozen=True)

    strike: float = Field(..., gt=0.0)
    implied_vol: float = Field(..., gt=0.0)
    price: float = Field(..., ge=0.0, description="Forward price of the out-of-the-money side")
    vega: float = Field(..., ge=0.0)
    moneyness: float
    is_call: bool


class SmileSlice(BaseModel):
    model_config = ConfigDict(frozen=True)

    as_of_date: date
    expiry_date: date
    tau: float = Field(..., gt=0.0)
    forward: float = Field(..., gt=0.0)
    quotes: List[OptionQuote] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_tau(self):
        expected = year_fraction(self.as_of_date, self.expiry_date)
        if abs(self.tau - expected) > 1e-12:
            raise ValueError(f"tau {self.tau} inconsistent with dates ({expected})")
        return self

    @property
    def strikes(self) -> np.ndarray:
        return np.array([q.strike for q in self.quotes])

    @property
    def implied_vols(self) -> np.ndarray:
        return np.array([q.implied_vol for q in self.quotes])

    @property
    def vegas(self) -> np.ndarray:
        return np.array([q.vega for q in self.quotes])


class MarketDay(BaseModel):
    model_config = ConfigDict(frozen=True)

    date: date
    slice: SmileSlice
    vstoxx_observed: float = Field(..., gt=0.0)
    future_expiry_date: date
    future_market_price: float = Field(..., gt=0.0)

    @property
    def days_to_expiry(self) -> int:
        return (self.future_expiry_date - self.date).days

    @property
    def future_tau(self) -> float:
        return year_fraction(self.date, self.future_expiry_date)
