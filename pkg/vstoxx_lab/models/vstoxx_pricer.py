"""VSTOXX index level and futures price under Heston.

The future settles on 100 * sqrt(a v_T + b). Its price is

    F(tau) = 1 / (2 sqrt(pi)) * int_0^inf s^{-3/2} (1 - f(-s a, tau) e^{-s b}) ds

where f is the Laplace transform of the CIR variance at tau. The factor
e^{-s b} (not e^{-2 b}) is what makes F(0) collapse onto the index, via
sqrt(x) = 1 / (2 sqrt(pi)) * int s^{-3/2} (1 - e^{-s x}) ds.
"""

from typing import Iterable, List, Optional

import numpy as np
from scipy.integrate import trapezoid

from ..core.errors import DomainError, NonFiniteIntegrandError
from ..schemas.heston import HestonParams, IndexWindow

INDEX_WINDOW = 30.0 / 365.0
INDEX_SCALE = 100.0

FUTURE_GRID_POINTS = 10_000
FUTURE_S_MIN = 1e-12
FUTURE_S_MAX = 1e20


def index_window(params: HestonParams, tau_bar: float = INDEX_WINDOW) -> IndexWindow:
    kt = params.kappa * tau_bar
    a = -np.expm1(-kt) / kt
    return IndexWindow(tau_bar=tau_bar, a=a, b=params.theta * (1.0 - a))


def vstoxx_index(params: HestonParams) -> float:
    window = index_window(params)
    return INDEX_SCALE * float(np.sqrt(window.a * params.v0 + window.b))


def expected_variance(params: HestonParams, tau: float) -> float:
    """E[v_tau] for the CIR variance."""
    return params.theta + (params.v0 - params.theta) * float(np.exp(-params.kappa * tau))


def deterministic_future(params: HestonParams, tau: float) -> float:
    """Futures price with the variance frozen at its mean; upper bound by Jensen."""
    window = index_window(params)
    return INDEX_SCALE * float(np.sqrt(window.a * expected_variance(params, tau) + window.b))


def future_integrand(
    s: np.ndarray,
    params: HestonParams,
    tau: float,
    window: Optional[IndexWindow] = None,
) -> np.ndarray:
    """s^{-3/2} (1 - f(-s a, tau) e^{-s b}), evaluated without cancellation."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0.0):
        raise DomainError("integration variable must be positive")
    if window is None:
        window = index_window(params)
    kappa, theta, xi, v0 = params.kappa, params.theta, params.xi, params.v0
    lam = s * window.a
    decay = float(np.exp(-kappa * tau))

    if xi == 0.0:
        exponent = -lam * expected_variance(params, tau) - s * window.b
    else:
        # C and D of the Laplace transform written with phi = -lam
        growth = lam * xi * xi * (-np.expm1(-kappa * tau)) / (2.0 * kappa)
        C = -(2.0 * kappa * theta / (xi * xi)) * np.log1p(growth)
        D = -lam * decay / (1.0 + growth)
        exponent = C + D * v0 - s * window.b

    # for very large s the exponential underflows and this tends to s^{-3/2}
    return s ** -1.5 * -np.expm1(exponent)


def vstoxx_future(
    params: HestonParams,
    tau: float,
    n_points: int = FUTURE_GRID_POINTS,
    s_min: float = FUTURE_S_MIN,
    s_max: float = FUTURE_S_MAX,
) -> float:
    """Futures price in index points, trapezoid rule on a log-spaced grid."""
    if tau < 0.0:
        raise DomainError(f"tau must be non-negative, got {tau}")
    log_s = np.linspace(np.log(s_min), np.log(s_max), n_points)
    s = np.exp(log_s)
    values = future_integrand(s, params, tau)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NonFiniteIntegrandError(f"Non-finite futures integrand at s={s[bad]:.3e} for {params}")
    # ds = s d(ln s)
    integral = trapezoid(values * s, log_s)
    return INDEX_SCALE * float(integral) / (2.0 * np.sqrt(np.pi))


def future_term_structure(params: HestonParams, taus: Iterable[float], n_points: int = FUTURE_GRID_POINTS) -> List[float]:
    return [vstoxx_future(params, tau, n_points) for tau in taus]
