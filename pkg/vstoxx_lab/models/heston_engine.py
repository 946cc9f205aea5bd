"""Semi-analytic Heston pricing.

Prices come from the Lewis single-integral representation of the
characteristic function of the log-forward, integrated with Gauss-Legendre
quadrature on a mapped semi-infinite domain. The characteristic function uses
the branch-continuous formulation (g = (beta - d) / (beta + d), e^{-d tau}).
"""

from functools import lru_cache
from typing import Tuple, Union

import numpy as np

from ..core.errors import DomainError, IntegrationError, NoSolutionError, PricingError
from ..schemas.heston import HestonParams
from .blackscholes import solve_implied_vol

ArrayLike = Union[float, np.ndarray]

DEFAULT_QUAD_NODES = 256
MAX_QUAD_NODES = 4096
QUAD_ABS_TOL = 1e-10  # relative to the forward


@lru_cache(maxsize=8)
def _unit_gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def expected_total_variance(params: HestonParams, tau: float) -> float:
    """Integral of E[v_t] over [0, tau]."""
    kt = params.kappa * tau
    decay = -np.expm1(-kt) / params.kappa if kt > 0.0 else tau
    return params.theta * tau + (params.v0 - params.theta) * decay


def complex_log1p(z: ArrayLike) -> np.ndarray:
    """log(1 + z) for complex z, accurate when |z| is tiny.

    numpy's complex log1p forms 1 + z first, which loses the low digits of z.
    """
    z = np.asarray(z, dtype=complex)
    a, b = z.real, z.imag
    modulus = 0.5 * np.log1p(a * (2.0 + a) + b * b)
    return modulus + 1j * np.arctan2(b, 1.0 + a)


def characteristic_fn(u: ArrayLike, tau: float, params: HestonParams) -> np.ndarray:
    """E[exp(i u x_tau)] for x_tau = ln(F_tau / F_0) under zero drift."""
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    u = np.asarray(u, dtype=complex)
    kappa, theta, xi, rho, v0 = params.kappa, params.theta, params.xi, params.rho, params.v0
    iu = 1j * u
    quad_term = iu + u * u

    if xi == 0.0:
        return np.exp(-0.5 * quad_term * expected_total_variance(params, tau))

    beta = kappa - rho * xi * iu
    d = np.sqrt(beta * beta + xi * xi * quad_term)
    beta_plus_d = beta + d
    direct = beta - d
    # (beta - d)(beta + d) = -xi^2 (iu + u^2); use whichever form does not cancel
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = -(xi * xi) * quad_term / beta_plus_d
    use_stable = np.abs(beta_plus_d) >= np.abs(direct)
    beta_minus_d = np.where(use_stable, stable, direct)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(use_stable, -quad_term / beta_plus_d, direct / (xi * xi))
        g = beta_minus_d / beta_plus_d

    exp_dt = np.exp(-d * tau)
    log_ratio = complex_log1p(-g * exp_dt) - complex_log1p(-g)
    C = kappa * theta * (scaled * tau - 2.0 * log_ratio / (xi * xi))
    D = scaled * -np.expm1(-d * tau) / (1.0 - g * exp_dt)
    return np.exp(C + D * v0)


def _lewis_integral(params: HestonParams, log_fk: np.ndarray, tau: float, n_nodes: int) -> np.ndarray:
    nodes, weights = _unit_gauss_legendre(n_nodes)
    total_var = max(expected_total_variance(params, tau), 1e-8)
    scale = 2.0 / np.sqrt(total_var)
    w = scale * nodes / (1.0 - nodes)
    jacobian = scale / (1.0 - nodes) ** 2
    phi = characteristic_fn(w - 0.5j, tau, params)
    denom = w * w + 0.25
    phase = np.outer(log_fk, w)
    integrand = (np.cos(phase) * phi.real - np.sin(phase) * phi.imag) / denom
    return integrand @ (weights * jacobian)


def heston_prices(
    params: HestonParams,
    forward: float,
    strikes: ArrayLike,
    tau: float,
    n_nodes: int = DEFAULT_QUAD_NODES,
    tol: float = QUAD_ABS_TOL,
) -> Tuple[np.ndarray, np.ndarray]:
    """Call and put forward prices for an array of strikes.

    The out-of-the-money side is computed from the integral; the other side
    follows from put-call parity.
    """
    if forward <= 0.0 or not np.isfinite(forward):
        raise DomainError(f"forward must be positive, got {forward}")
    if tau <= 0.0:
        raise DomainError(f"tau must be positive, got {tau}")
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    if np.any(strikes <= 0.0) or not np.all(np.isfinite(strikes)):
        raise DomainError("strikes must be positive and finite")

    log_fk = np.log(forward / strikes)
    factor = np.sqrt(forward * strikes) / np.pi
    # The half-size rule is a cheap check; on a miss the node count doubles
    # and the previous answer becomes the check.
    fine = _lewis_integral(params, log_fk, tau, n_nodes)
    coarse = _lewis_integral(params, log_fk, tau, n_nodes // 2)
    while True:
        error = factor * np.abs(fine - coarse)
        converged = np.all(np.isfinite(fine)) and not np.any(error > tol * forward)
        if converged or 2 * n_nodes > MAX_QUAD_NODES:
            break
        n_nodes *= 2
        coarse, fine = fine, _lewis_integral(params, log_fk, tau, n_nodes)
    if not converged:
        worst = int(np.nanargmax(np.where(np.isfinite(error), error, np.inf)))
        raise IntegrationError(
            f"Heston quadrature did not reach tolerance {tol * forward:.3e} "
            f"with {n_nodes} nodes (estimated error {error[worst]:.3e} at strike {strikes[worst]})"
        )

    call_lewis = forward - factor * fine
    put_lewis = strikes - factor * fine
    otm_call = strikes >= forward
    call = np.where(otm_call, call_lewis, put_lewis + (forward - strikes))
    put = np.where(otm_call, call_lewis - (forward - strikes), put_lewis)
    call = np.clip(call, np.maximum(forward - strikes, 0.0), forward)
    put = np.clip(put, np.maximum(strikes - forward, 0.0), strikes)
    return call, put


def heston_call(
    params: HestonParams,
    forward: float,
    strike: ArrayLike,
    tau: float,
    n_nodes: int = DEFAULT_QUAD_NODES,
) -> ArrayLike:
    call, _ = heston_prices(params, forward, strike, tau, n_nodes)
    return float(call[0]) if np.ndim(strike) == 0 else call


def heston_put(
    params: HestonParams,
    forward: float,
    strike: ArrayLike,
    tau: float,
    n_nodes: int = DEFAULT_QUAD_NODES,
) -> ArrayLike:
    _, put = heston_prices(params, forward, strike, tau, n_nodes)
    return float(put[0]) if np.ndim(strike) == 0 else put


def model_smile(
    params: HestonParams,
    forward: float,
    strikes: ArrayLike,
    tau: float,
    n_nodes: int = DEFAULT_QUAD_NODES,
) -> np.ndarray:
    """Black implied vols of Heston prices, inverted on the out-of-the-money side."""
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    try:
        call, put = heston_prices(params, forward, strikes, tau, n_nodes)
    except IntegrationError as e:
        raise PricingError(f"Heston pricing failed: {e}") from e
    otm_call = strikes >= forward
    otm_price = np.where(otm_call, call, put)
    vols, solved = solve_implied_vol(otm_price, forward, strikes, tau, otm_call)
    if not np.all(solved):
        bad = int(np.flatnonzero(~solved)[0])
        raise PricingError("Implied volatility inversion failed", strike=float(strikes[bad])) from NoSolutionError(
            f"price {otm_price[bad]!r} outside no-arbitrage bounds"
        )
    return vols
