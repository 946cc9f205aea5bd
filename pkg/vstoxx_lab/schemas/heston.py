from datetime import date
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


# Calibration box: kappa, theta, xi, rho, v0
CALIBRATION_BOUNDS: Dict[str, Tuple[float, float]] = {
    "kappa": (0.01, 20.0),
    "theta": (0.01, 1.0),
    "xi": (0.01, 5.0),
    "rho": (-1.0, 1.0),
    "v0": (0.01, 1.0),
}

PARAM_NAMES = tuple(CALIBRATION_BOUNDS)


class HestonParams(BaseModel):
    """Heston model parameters.

    Validation enforces physical admissibility only; the calibration box is
    checked by :meth:`in_calibration_box`.
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kappa: float = Field(..., gt=0.0, description="Mean-reversion speed, 1/years")
    theta: float = Field(..., gt=0.0, description="Long-term variance")
    xi: float = Field(..., ge=0.0, description="Volatility of variance")
    rho: float = Field(..., ge=-1.0, le=1.0, description="Spot/variance correlation")
    v0: float = Field(..., gt=0.0, description="Initial variance")

    def to_array(self) -> np.ndarray:
        return np.array([self.kappa, self.theta, self.xi, self.rho, self.v0])

    @classmethod
    def from_array(cls, x) -> "HestonParams":
        return cls(kappa=float(x[0]), theta=float(x[1]), xi=float(x[2]), rho=float(x[3]), v0=float(x[4]))

    def in_calibration_box(self) -> bool:
        return all(lo <= getattr(self, name) <= hi for name, (lo, hi) in CALIBRATION_BOUNDS.items())

    def feller_satisfied(self) -> bool:
        return 2.0 * self.kappa * self.theta >= self.xi ** 2


def calibration_bounds() -> List[Tuple[float, float]]:
    return [CALIBRATION_BOUNDS[name] for name in PARAM_NAMES]


class IndexWindow(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau_bar: float = Field(..., gt=0.0)
    a: float = Field(..., gt=0.0, le=1.0)
    b: float = Field(..., ge=0.0)


class CalibrationResult(BaseModel):
    params: HestonParams
    objective: float = Field(..., ge=0.0)
    smile_mse: float = Field(..., ge=0.0)
    index_se: float = Field(..., ge=0.0)
    w_sigma: float = 10000.0
    w_idx: float = 2.0
    converged: bool
    n_evaluations: int = Field(..., ge=0)
    message: str = ""
    trace: List[float] = Field(default_factory=list, description="Objective at accepted local iterates")

    @model_validator(mode="after")
    def check_decomposition(self):
        expected = self.w_sigma * self.smile_mse + self.w_idx * self.index_se
        if abs(self.objective - expected) > 1e-12 * max(abs(expected), 1e-300):
            raise ValueError(f"objective {self.objective} != weighted components {expected}")
        return self


class CalibrationRecord(BaseModel):
    """One day of the calibration time series."""

    date: date
    params: Optional[HestonParams] = None
    objective: Optional[float] = None
    smile_mse: Optional[float] = None
    index_se: Optional[float] = None
    vstoxx_observed: Optional[float] = None
    future_expiry_date: Optional[date] = None
    days_to_expiry: Optional[int] = None
    model_future: Optional[float] = None
    market_future: Optional[float] = None
    diff_price: Optional[float] = None
    converged: bool = False
    error: Optional[str] = None

    @property
    def success(self) -> bool:
        return self.error is None and self.diff_price is not None


class McEstimate(BaseModel):
    value: float
    std_error: float = Field(..., ge=0.0)
    n_paths: int = Field(..., ge=1)
    n_steps: int = Field(..., ge=1)
    seed: int
    # mean of F_tau / F_0, only for simulations that carry the spot
    martingale_ratio: Optional[float] = None
    martingale_std_error: Optional[float] = Field(None, ge=0.0)

    @property
    def martingale_ok(self) -> bool:
        if self.martingale_ratio is None:
            return True
        band = 3.0 * (self.martingale_std_error or 0.0)
        return abs(self.martingale_ratio - 1.0) <= band
