"""Undiscounted Black (forward) pricing, vega, implied volatility and moneyness.

Zero rates and dividends throughout: every price is a forward price.
"""

from typing import Tuple, Union

import numpy as np
from scipy.special import ndtr

from ..core.errors import DomainError, NoSolutionError

ArrayLike = Union[float, np.ndarray]

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

IV_MAX_ITER = 100
IV_PRICE_TOL = 1e-10  # relative to the forward
IV_VOL_TOL = 1e-14
IV_SIGMA_MAX = 50.0


def _norm_pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _require_positive(name: str, value) -> None:
    if np.any(~np.isfinite(value)) or np.any(np.asarray(value) <= 0.0):
        raise DomainError(f"{name} must be positive and finite, got {value}")


def _require_non_negative(name: str, value) -> None:
    if np.any(~np.isfinite(value)) or np.any(np.asarray(value) < 0.0):
        raise DomainError(f"{name} must be non-negative and finite, got {value}")


def _scalar_or_array(result: np.ndarray, *inputs) -> ArrayLike:
    if all(np.ndim(x) == 0 for x in inputs):
        return float(result)
    return result


def intrinsic_value(forward: ArrayLike, strike: ArrayLike, is_call: Union[bool, np.ndarray] = True) -> ArrayLike:
    forward, strike = np.asarray(forward, float), np.asarray(strike, float)
    value = np.where(is_call, np.maximum(forward - strike, 0.0), np.maximum(strike - forward, 0.0))
    return _scalar_or_array(value, forward, strike, is_call)


def _black(forward, strike, tau, sigma, is_call):
    """Unchecked vectorized kernel."""
    total_vol = sigma * np.sqrt(tau)
    degenerate = total_vol <= 0.0
    safe_vol = np.where(degenerate, 1.0, total_vol)
    d1 = np.log(forward / strike) / safe_vol + 0.5 * safe_vol
    d2 = d1 - safe_vol
    call = forward * ndtr(d1) - strike * ndtr(d2)
    put = strike * ndtr(-d2) - forward * ndtr(-d1)
    price = np.where(is_call, call, put)
    intrinsic = np.where(is_call, np.maximum(forward - strike, 0.0), np.maximum(strike - forward, 0.0))
    # keep rounding noise inside the no-arbitrage bounds
    price = np.maximum(price, intrinsic)
    return np.where(degenerate, intrinsic, price)


def black_price(
    forward: ArrayLike,
    strike: ArrayLike,
    tau: ArrayLike,
    sigma: ArrayLike,
    is_call: Union[bool, np.ndarray] = True,
) -> ArrayLike:
    _require_positive("forward", forward)
    _require_positive("strike", strike)
    _require_non_negative("tau", tau)
    _require_non_negative("sigma", sigma)
    f, k, t, s = (np.asarray(x, dtype=float) for x in (forward, strike, tau, sigma))
    result = _black(f, k, t, s, np.asarray(is_call, dtype=bool))
    return _scalar_or_array(result, forward, strike, tau, sigma, is_call)


def black_put(forward: ArrayLike, strike: ArrayLike, tau: ArrayLike, sigma: ArrayLike) -> ArrayLike:
    return black_price(forward, strike, tau, sigma, is_call=False)


def vega(
    spot_or_forward: ArrayLike,
    strike: ArrayLike,
    tau: ArrayLike,
    sigma: ArrayLike,
    mu: float = 0.0,
) -> ArrayLike:
    """S0 * sqrt(tau) * phi(d1), with the drift ``mu`` entering d1 only."""
    _require_positive("tau", tau)
    _require_positive("sigma", sigma)
    _require_positive("spot_or_forward", spot_or_forward)
    _require_positive("strike", strike)
    s0, k, t, s = (np.asarray(x, dtype=float) for x in (spot_or_forward, strike, tau, sigma))
    sqrt_t = np.sqrt(t)
    d1 = (np.log(s0 / k) + (mu + 0.5 * s * s) * t) / (s * sqrt_t)
    return _scalar_or_array(s0 * sqrt_t * _norm_pdf(d1), spot_or_forward, strike, tau, sigma)


def moneyness(forward: ArrayLike, strike: ArrayLike, sigma_atm: float, tau: float) -> ArrayLike:
    """ln(F/K) / (sigma_atm * sqrt(tau))."""
    _require_positive("forward", forward)
    _require_positive("strike", strike)
    _require_positive("sigma_atm", sigma_atm)
    _require_positive("tau", tau)
    f, k = np.asarray(forward, dtype=float), np.asarray(strike, dtype=float)
    return _scalar_or_array(np.log(f / k) / (sigma_atm * np.sqrt(tau)), forward, strike)


def atm_vol(forward: float, strikes: np.ndarray, vols: np.ndarray) -> float:
    """Vol of the strike nearest the forward; ties go to the lower strike."""
    strikes = np.asarray(strikes, dtype=float)
    vols = np.asarray(vols, dtype=float)
    if strikes.size == 0:
        raise DomainError("atm_vol needs at least one strike")
    distance = np.abs(strikes - forward)
    order = np.lexsort((strikes, distance))
    return float(vols[order[0]])


def solve_implied_vol(
    price: np.ndarray,
    forward: np.ndarray,
    strike: np.ndarray,
    tau: np.ndarray,
    is_call: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized bracketed Newton; returns (vols, solved mask) without raising.

    Each price is mapped to its out-of-the-money counterpart through put-call
    parity before inversion.
    """
    price, forward, strike, tau, is_call = np.broadcast_arrays(
        np.asarray(price, float), np.asarray(forward, float), np.asarray(strike, float),
        np.asarray(tau, float), np.asarray(is_call, bool),
    )
    intrinsic = np.where(is_call, np.maximum(forward - strike, 0.0), np.maximum(strike - forward, 0.0))
    upper = np.where(is_call, forward, strike)
    time_value = price - intrinsic
    otm_call = strike >= forward
    valid = (time_value > 0.0) & (price < upper) & (tau > 0.0)

    target = np.where(valid, time_value, 1.0)
    lo = np.zeros_like(target)
    hi = np.full_like(target, 1.0)
    # grow the upper bracket until it prices above the target
    for _ in range(8):
        too_low = _black(forward, strike, tau, hi, otm_call) < target
        if not np.any(too_low & valid):
            break
        hi = np.where(too_low, np.minimum(hi * 2.0, IV_SIGMA_MAX), hi)
    valid &= _black(forward, strike, tau, hi, otm_call) >= target

    log_fk = np.abs(np.log(forward / strike))
    sqrt_t = np.sqrt(np.where(tau > 0.0, tau, 1.0))
    # inflection point of the price in sigma; ATM approximation when it vanishes
    sigma = np.where(
        log_fk > 0.0,
        np.sqrt(2.0 * log_fk) / sqrt_t,
        target * np.sqrt(2.0 * np.pi) / (forward * sqrt_t),
    )
    sigma = np.clip(sigma, 0.5 * (lo + hi) * 1e-3, hi)

    done = ~valid
    for _ in range(IV_MAX_ITER):
        if np.all(done):
            break
        model = _black(forward, strike, tau, sigma, otm_call)
        diff = model - target
        lo = np.where(~done & (diff < 0.0), sigma, lo)
        hi = np.where(~done & (diff > 0.0), sigma, hi)
        d1 = np.log(forward / strike) / (sigma * sqrt_t) + 0.5 * sigma * sqrt_t
        slope = forward * sqrt_t * _norm_pdf(d1)
        # Newton on log-price; plain price steps crawl far out of the money
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            newton = sigma - (np.log(model) - np.log(target)) * model / slope
        use_newton = np.isfinite(newton) & (newton > lo) & (newton < hi)
        candidate = np.where(use_newton, newton, 0.5 * (lo + hi))
        step = np.abs(candidate - sigma)
        converged = (diff == 0.0) | (step <= IV_VOL_TOL * np.maximum(sigma, 1.0)) | (hi - lo <= IV_VOL_TOL)
        sigma = np.where(done, sigma, np.where(diff == 0.0, sigma, candidate))
        done |= converged

    final = _black(forward, strike, tau, sigma, otm_call)
    solved = valid & (np.abs(final - target) <= IV_PRICE_TOL * forward) & (sigma > 0.0)
    return sigma, solved


def implied_vol(
    price: ArrayLike,
    forward: ArrayLike,
    strike: ArrayLike,
    tau: ArrayLike,
    is_call: Union[bool, np.ndarray] = True,
) -> ArrayLike:
    _require_positive("forward", forward)
    _require_positive("strike", strike)
    _require_positive("tau", tau)
    _require_non_negative("price", price)
    vols, solved = solve_implied_vol(price, forward, strike, tau, is_call)
    if not np.all(solved):
        bad = np.flatnonzero(~np.atleast_1d(solved))
        raise NoSolutionError(
            f"No implied volatility for {bad.size} price(s); "
            f"first offending index {int(bad[0])}: price outside the no-arbitrage bounds"
        )
    return _scalar_or_array(vols, price, forward, strike, tau, is_call)
