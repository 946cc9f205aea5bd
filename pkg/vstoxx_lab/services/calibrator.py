"""Daily Heston calibration to one option smile plus the VSTOXX level.

The objective combines the vega-weighted smile error and the squared index
error. The first day is calibrated globally (differential evolution, then a
bounded quasi-Newton polish); every later day starts from the previous day's
parameters and runs the local step only.
"""

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import differential_evolution, minimize

from ..core.errors import DataError, EmptySliceError, NoExpiryError, NumericalError, VstoxxLabError
from ..core.logging import StructuredLogger, log_performance
from ..models.blackscholes import atm_vol, black_price, moneyness, vega
from ..models.heston_engine import DEFAULT_QUAD_NODES, model_smile
from ..models.vstoxx_pricer import FUTURE_GRID_POINTS, vstoxx_future, vstoxx_index
from ..schemas.heston import CalibrationRecord, CalibrationResult, HestonParams, calibration_bounds
from ..schemas.market import MarketDay, OptionQuote, SmileSlice, year_fraction

MAX_EXPIRY_DAYS = 300
MIN_EXPIRY_DAYS = 1
MONEYNESS_MIN = -14.0
MONEYNESS_MAX = 5.0

W_SIGMA = 10_000.0
W_IDX = 2.0

DE_POPSIZE = 15
DE_MAXITER = 200
DE_TOL = 1e-8

LOCAL_MAXITER = 500
FD_REL_STEP = 1e-6
# objective value reported to the optimizers when pricing fails
FAILED_EVALUATION_PENALTY = 1e6

CALIBRATION_COLUMNS = [
    "date", "kappa", "theta", "xi", "rho", "v0", "objective", "smile_mse", "index_se",
    "vstoxx", "future_expiry_date", "days_to_expiry", "model_future", "market_future",
    "diff_price", "converged", "error",
]

logger = StructuredLogger("calibrator")


def select_slice(option_chain: pd.DataFrame, as_of: date, mu: float = 0.0) -> SmileSlice:
    """Pick the latest expiry within 300 days and keep quotes with moneyness in [-14, 5].

    ``option_chain`` holds one date's rows with columns expiry_date, strike,
    implied_vol and forward.
    """
    if option_chain.empty:
        raise EmptySliceError(f"{as_of}: option chain is empty")
    expiries = pd.to_datetime(option_chain["expiry_date"]).dt.date
    days = np.array([(expiry - as_of).days for expiry in expiries])
    eligible = (days >= MIN_EXPIRY_DAYS) & (days <= MAX_EXPIRY_DAYS)
    if not eligible.any():
        raise NoExpiryError(f"{as_of}: no expiry within {MAX_EXPIRY_DAYS} days")
    chosen = max(expiry for expiry, ok in zip(expiries, eligible) if ok)

    rows = option_chain[(expiries == chosen).to_numpy()].sort_values("strike", kind="stable")
    forward = float(rows["forward"].iloc[0])
    tau = year_fraction(as_of, chosen)
    strikes = rows["strike"].to_numpy(dtype=float)
    vols = rows["implied_vol"].to_numpy(dtype=float)

    sigma_atm = atm_vol(forward, strikes, vols)
    m = moneyness(forward, strikes, sigma_atm, tau)
    keep = (m >= MONEYNESS_MIN) & (m <= MONEYNESS_MAX)
    if not keep.any():
        raise EmptySliceError(f"{as_of}: moneyness filter removed every quote of {chosen}")

    strikes, vols, m = strikes[keep], vols[keep], m[keep]
    is_call = strikes >= forward
    prices = black_price(forward, strikes, tau, vols, is_call)
    vegas = vega(forward, strikes, tau, vols, mu)
    quotes = [
        OptionQuote(strike=k, implied_vol=s, price=p, vega=v, moneyness=mm, is_call=bool(c))
        for k, s, p, v, mm, c in zip(strikes, vols, prices, vegas, m, is_call)
    ]
    return SmileSlice(as_of_date=as_of, expiry_date=chosen, tau=tau, forward=forward, quotes=quotes)


def front_month(expiries: Iterable[date], as_of: date) -> date:
    """Earliest contract that still has more than one day to run.

    On the day before a contract expires exposure rolls to the next one.
    """
    candidates = sorted(e for e in set(expiries) if (e - as_of).days > 1)
    if not candidates:
        raise NoExpiryError(f"{as_of}: no futures contract beyond the roll date")
    return candidates[0]


def smile_mse(params: HestonParams, smile: SmileSlice, n_nodes: int = DEFAULT_QUAD_NODES) -> float:
    """sum_K vega_K (vol_K - model_vol_K)^2 / sum_K vega_K"""
    weights = smile.vegas
    total = weights.sum()
    if total <= 0.0:
        raise EmptySliceError(f"{smile.as_of_date}: quotes carry no vega")
    model_vols = model_smile(params, smile.forward, smile.strikes, smile.tau, n_nodes)
    errors = (smile.implied_vols - model_vols) ** 2
    return float(weights @ errors / total)


def index_se(params: HestonParams, vstoxx_observed: float) -> float:
    return (vstoxx_observed - vstoxx_index(params)) ** 2


def combined_objective(
    params: HestonParams,
    smile: SmileSlice,
    vstoxx_observed: float,
    w_sigma: float = W_SIGMA,
    w_idx: float = W_IDX,
    n_nodes: int = DEFAULT_QUAD_NODES,
) -> float:
    return w_sigma * smile_mse(params, smile, n_nodes) + w_idx * index_se(params, vstoxx_observed)


class CombinedObjective:
    """Objective over raw parameter vectors, safe to call from worker threads."""

    def __init__(
        self,
        smile: SmileSlice,
        vstoxx_observed: float,
        w_sigma: float = W_SIGMA,
        w_idx: float = W_IDX,
        n_nodes: int = DEFAULT_QUAD_NODES,
    ):
        self.smile = smile
        self.vstoxx_observed = vstoxx_observed
        self.w_sigma = w_sigma
        self.w_idx = w_idx
        self.n_nodes = n_nodes
        self.n_evaluations = 0
        self.n_failures = 0
        self._lock = threading.Lock()

    def __call__(self, x: np.ndarray) -> float:
        with self._lock:
            self.n_evaluations += 1
        try:
            params = HestonParams.from_array(x)
            return combined_objective(params, self.smile, self.vstoxx_observed, self.w_sigma, self.w_idx, self.n_nodes)
        except NumericalError:
            with self._lock:
                self.n_failures += 1
            return FAILED_EVALUATION_PENALTY

    def result(self, x: np.ndarray, converged: bool, message: str, trace: Sequence[float]) -> CalibrationResult:
        params = HestonParams.from_array(x)
        mse = smile_mse(params, self.smile, self.n_nodes)
        se = index_se(params, self.vstoxx_observed)
        return CalibrationResult(
            params=params,
            objective=self.w_sigma * mse + self.w_idx * se,
            smile_mse=mse,
            index_se=se,
            w_sigma=self.w_sigma,
            w_idx=self.w_idx,
            converged=converged,
            n_evaluations=self.n_evaluations,
            message=message,
            trace=list(trace),
        )


def projected_gradient(
    fun: Callable[[np.ndarray], float],
    x: np.ndarray,
    bounds: Sequence[Tuple[float, float]],
    rel_step: float = FD_REL_STEP,
) -> np.ndarray:
    """Central differences, one-sided where a step would leave the box."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j, (lo, hi) in enumerate(bounds):
        h = rel_step * max(abs(x[j]), 1.0)
        up, down = x.copy(), x.copy()
        up[j] = min(x[j] + h, hi)
        down[j] = max(x[j] - h, lo)
        width = up[j] - down[j]
        grad[j] = 0.0 if width == 0.0 else (fun(up) - fun(down)) / width
    return grad


def _local_minimize(
    objective: CombinedObjective,
    x0: np.ndarray,
    maxiter: int = LOCAL_MAXITER,
) -> Tuple[np.ndarray, float, bool, str, List[float]]:
    """Bounded L-BFGS-B; returns (x, f, success, message, accepted-iterate objectives)."""
    bounds = calibration_bounds()
    lower = np.array([lo for lo, _ in bounds])
    upper = np.array([hi for _, hi in bounds])
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)

    cache: Dict[bytes, float] = {}

    def fun(x: np.ndarray) -> float:
        key = np.asarray(x, dtype=float).tobytes()
        if key not in cache:
            cache[key] = objective(x)
        return cache[key]

    start = fun(x0)
    trace = [start]

    def record(xk: np.ndarray) -> None:
        trace.append(fun(xk))

    res = minimize(
        fun,
        x0,
        jac=lambda x: projected_gradient(fun, x, bounds),
        method="L-BFGS-B",
        bounds=bounds,
        callback=record,
        options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-12},
    )
    x_best, f_best = np.clip(res.x, lower, upper), fun(np.clip(res.x, lower, upper))
    if f_best > start:
        x_best, f_best = x0, start
    return x_best, f_best, bool(res.success), str(res.message), trace


@log_performance
def calibrate_global(
    smile: SmileSlice,
    vstoxx_observed: float,
    seed: int = 0,
    w_sigma: float = W_SIGMA,
    w_idx: float = W_IDX,
    popsize: int = DE_POPSIZE,
    maxiter: int = DE_MAXITER,
    tol: float = DE_TOL,
    threads: int = 1,
    n_nodes: int = DEFAULT_QUAD_NODES,
) -> CalibrationResult:
    """Differential evolution over the calibration box, then a local polish."""
    objective = CombinedObjective(smile, vstoxx_observed, w_sigma, w_idx, n_nodes)
    de_kwargs = dict(
        strategy="best1bin",
        popsize=popsize,
        maxiter=maxiter,
        tol=0.0,
        atol=tol,
        seed=seed,
        polish=False,
        init="latinhypercube",
        updating="deferred",
    )
    # deferred updating evaluates the whole population per generation, so the
    # result is the same for any worker count
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            de = differential_evolution(objective, calibration_bounds(), workers=pool.map, **de_kwargs)
    else:
        de = differential_evolution(objective, calibration_bounds(), workers=1, **de_kwargs)

    x, fun, success, message, trace = _local_minimize(objective, de.x)
    if fun > de.fun:
        x = de.x
    result = objective.result(x, converged=success, message=f"DE: {de.message}; local: {message}", trace=trace)
    logger.info(
        "Global calibration finished",
        date=str(smile.as_of_date),
        objective=result.objective,
        de_objective=float(de.fun),
        generations=int(de.nit),
        n_evaluations=result.n_evaluations,
        failed_evaluations=objective.n_failures,
        converged=result.converged,
    )
    return result


def calibrate_warm(
    smile: SmileSlice,
    vstoxx_observed: float,
    prev: HestonParams,
    w_sigma: float = W_SIGMA,
    w_idx: float = W_IDX,
    n_nodes: int = DEFAULT_QUAD_NODES,
) -> CalibrationResult:
    """Local quasi-Newton from the previous day's parameters."""
    objective = CombinedObjective(smile, vstoxx_observed, w_sigma, w_idx, n_nodes)
    x, _, success, message, trace = _local_minimize(objective, prev.to_array())
    result = objective.result(x, converged=success, message=message, trace=trace)
    logger.debug("Warm calibration finished", date=str(smile.as_of_date), objective=result.objective, iterations=len(trace) - 1)
    return result


def _record_for(day: MarketDay, result: CalibrationResult, grid_points: int) -> CalibrationRecord:
    model_future = vstoxx_future(result.params, day.future_tau, grid_points)
    return CalibrationRecord(
        date=day.date,
        params=result.params,
        objective=result.objective,
        smile_mse=result.smile_mse,
        index_se=result.index_se,
        vstoxx_observed=day.vstoxx_observed,
        future_expiry_date=day.future_expiry_date,
        days_to_expiry=day.days_to_expiry,
        model_future=model_future,
        market_future=day.future_market_price,
        diff_price=day.future_market_price - model_future,
        converged=result.converged,
    )


@log_performance
def run_timeseries(
    days: Sequence[MarketDay],
    seed: int = 0,
    w_sigma: float = W_SIGMA,
    w_idx: float = W_IDX,
    popsize: int = DE_POPSIZE,
    maxiter: int = DE_MAXITER,
    tol: float = DE_TOL,
    threads: int = 1,
    n_nodes: int = DEFAULT_QUAD_NODES,
    grid_points: int = FUTURE_GRID_POINTS,
) -> List[CalibrationRecord]:
    """Calibrate every day in order and price its front-month future.

    A failed day produces a record with ``error`` set; the next day then
    starts from the last successful parameters (or globally if none).
    """
    ordered = list(days)
    if any(b.date <= a.date for a, b in zip(ordered, ordered[1:])):
        raise DataError("market days must be sorted by date without duplicates")

    records: List[CalibrationRecord] = []
    prev: Optional[HestonParams] = None
    for day in ordered:
        start = time.perf_counter()
        try:
            if prev is None:
                result = calibrate_global(
                    day.slice, day.vstoxx_observed, seed, w_sigma, w_idx, popsize, maxiter, tol, threads, n_nodes
                )
            else:
                result = calibrate_warm(day.slice, day.vstoxx_observed, prev, w_sigma, w_idx, n_nodes)
            record = _record_for(day, result, grid_points)
            prev = result.params
        except VstoxxLabError as e:
            logger.error("Calibration failed", date=str(day.date), error=str(e))
            record = CalibrationRecord(
                date=day.date,
                vstoxx_observed=day.vstoxx_observed,
                future_expiry_date=day.future_expiry_date,
                days_to_expiry=day.days_to_expiry,
                market_future=day.future_market_price,
                error=f"{type(e).__name__}: {e}",
            )
        records.append(record)
        logger.debug(
            "Day processed",
            date=str(day.date),
            success=record.success,
            diff_price=record.diff_price,
            latency_ms=round((time.perf_counter() - start) * 1000, 2),
        )

    failed = sum(not r.success for r in records)
    logger.info("Calibration series finished", days=len(records), failed=failed)
    return records


def calibration_frame(records: Sequence[CalibrationRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        p = r.params
        rows.append({
            "date": r.date.isoformat(),
            "kappa": p.kappa if p else None,
            "theta": p.theta if p else None,
            "xi": p.xi if p else None,
            "rho": p.rho if p else None,
            "v0": p.v0 if p else None,
            "objective": r.objective,
            "smile_mse": r.smile_mse,
            "index_se": r.index_se,
            "vstoxx": r.vstoxx_observed,
            "future_expiry_date": r.future_expiry_date.isoformat() if r.future_expiry_date else None,
            "days_to_expiry": r.days_to_expiry,
            "model_future": r.model_future,
            "market_future": r.market_future,
            "diff_price": r.diff_price,
            "converged": r.converged,
            "error": r.error or "",
        })
    return pd.DataFrame(rows, columns=CALIBRATION_COLUMNS)


def records_from_frame(frame: pd.DataFrame) -> List[CalibrationRecord]:
    """Inverse of :func:`calibration_frame` for rows read back from CSV."""
    records = []
    for row in frame.to_dict(orient="records"):
        def value(key):
            v = row.get(key)
            return None if v is None or (isinstance(v, float) and np.isnan(v)) or v == "" else v

        params = None
        if value("kappa") is not None:
            params = HestonParams(**{k: float(row[k]) for k in ("kappa", "theta", "xi", "rho", "v0")})
        expiry = value("future_expiry_date")
        records.append(CalibrationRecord(
            date=pd.Timestamp(row["date"]).date(),
            params=params,
            objective=value("objective"),
            smile_mse=value("smile_mse"),
            index_se=value("index_se"),
            vstoxx_observed=value("vstoxx"),
            future_expiry_date=pd.Timestamp(expiry).date() if expiry is not None else None,
            days_to_expiry=int(row["days_to_expiry"]) if value("days_to_expiry") is not None else None,
            model_future=value("model_future"),
            market_future=value("market_future"),
            diff_price=value("diff_price"),
            converged=str(row.get("converged")).lower() == "true",
            error=value("error"),
        ))
    return records
