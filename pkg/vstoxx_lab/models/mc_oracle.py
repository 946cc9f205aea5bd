"""Full-truncation Euler simulation of the Heston dynamics.

Used as an independent oracle for the index, futures and option formulas.
Paths are simulated in fixed-size blocks whose generators are spawned from
the master seed, so the worker count never changes a result.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..core.errors import DomainError
from ..core.logging import StructuredLogger, log_performance
from ..schemas.heston import HestonParams, McEstimate
from .vstoxx_pricer import INDEX_SCALE, index_window

BLOCK_SIZE = 1 << 16
DEFAULT_PATHS = 1_000_000
DEFAULT_STEPS = 500

logger = StructuredLogger("mc_oracle")


def _block_sizes(n_paths: int) -> List[int]:
    full, rest = divmod(n_paths, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def _block_generators(seed: int, n_blocks: int) -> List[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def _normals(rng: np.random.Generator, size: int, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.standard_normal(size)
    half = rng.standard_normal((size + 1) // 2)
    return np.concatenate([half, -half])[:size]


def _simulate_block(
    params: HestonParams,
    tau: float,
    n_steps: int,
    n_paths: int,
    rng: np.random.Generator,
    antithetic: bool,
    with_spot: bool,
    with_integral: bool = False,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    dt = tau / n_steps
    sqrt_dt = np.sqrt(dt)
    kappa, theta, xi, rho = params.kappa, params.theta, params.xi, params.rho
    rho_perp = np.sqrt(max(1.0 - rho * rho, 0.0))
    v = np.full(n_paths, params.v0)
    x = np.zeros(n_paths)
    integral = np.zeros(n_paths)
    for _ in range(n_steps):
        v_pos = np.maximum(v, 0.0)
        sqrt_v = np.sqrt(v_pos) * sqrt_dt
        z_v = _normals(rng, n_paths, antithetic)
        if with_spot:
            z_x = z_v
            z_v = rho * z_x + rho_perp * _normals(rng, n_paths, antithetic)
            x += -0.5 * v_pos * dt + sqrt_v * z_x
        if with_integral:
            integral += v_pos * dt
        v = v + kappa * (theta - v_pos) * dt + xi * sqrt_v * z_v
    return x, np.maximum(v, 0.0), integral


def _check(n_paths: int, n_steps: int, tau: float) -> None:
    if n_paths < 1 or n_steps < 1:
        raise DomainError("n_paths and n_steps must be at least 1")
    if tau < 0.0:
        raise DomainError(f"tau must be non-negative, got {tau}")


def _run_blocks(
    simulate: Callable[[int, np.random.Generator], np.ndarray],
    n_paths: int,
    seed: int,
    threads: int,
) -> List[np.ndarray]:
    sizes = _block_sizes(n_paths)
    rngs = _block_generators(seed, len(sizes))
    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(simulate, sizes, rngs))
    return [simulate(size, rng) for size, rng in zip(sizes, rngs)]


def _estimate(samples: List[np.ndarray], antithetic: bool, n_steps: int, seed: int) -> McEstimate:
    values = np.concatenate(samples)
    n = values.size
    if antithetic:
        # pair each draw with its mirror; blocks keep pairs contiguous
        pairs = []
        for block in samples:
            half = (block.size + 1) // 2
            first, second = block[:half], block[half:]
            if second.size < half:
                second = np.append(second, first[-1])
            pairs.append(0.5 * (first + second))
        units = np.concatenate(pairs)
    else:
        units = values
    mean = float(units.mean())
    std_error = float(units.std(ddof=1) / np.sqrt(units.size)) if units.size > 1 else 0.0
    return McEstimate(value=mean, std_error=std_error, n_paths=n, n_steps=n_steps, seed=seed)


def simulate_terminal_variance(
    params: HestonParams,
    tau: float,
    n_paths: int,
    n_steps: int,
    seed: int,
    antithetic: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """Samples of v_tau (floored at zero)."""
    _check(n_paths, n_steps, tau)
    blocks = _run_blocks(
        lambda size, rng: _simulate_block(params, tau, n_steps, size, rng, antithetic, with_spot=False)[1],
        n_paths, seed, threads,
    )
    return np.concatenate(blocks)


def simulate_terminal_state(
    params: HestonParams,
    tau: float,
    n_paths: int,
    n_steps: int,
    seed: int,
    antithetic: bool = False,
    threads: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Joint samples (x_tau, v_tau) of the log-forward return and the variance."""
    _check(n_paths, n_steps, tau)
    blocks = _run_blocks(
        lambda size, rng: np.vstack(_simulate_block(params, tau, n_steps, size, rng, antithetic, with_spot=True)[:2]),
        n_paths, seed, threads,
    )
    stacked = np.hstack(blocks)
    return stacked[0], stacked[1]


@log_performance
def mc_vstoxx_future(
    params: HestonParams,
    tau: float,
    n_paths: int = DEFAULT_PATHS,
    n_steps: int = DEFAULT_STEPS,
    seed: int = 0,
    antithetic: bool = False,
    threads: int = 1,
) -> McEstimate:
    """Mean of 100 sqrt(a v_tau + b)."""
    _check(n_paths, n_steps, tau)
    window = index_window(params)

    def payoff(size: int, rng: np.random.Generator) -> np.ndarray:
        v_tau = _simulate_block(params, tau, n_steps, size, rng, antithetic, with_spot=False)[1]
        return INDEX_SCALE * np.sqrt(window.a * v_tau + window.b)

    estimate = _estimate(_run_blocks(payoff, n_paths, seed, threads), antithetic, n_steps, seed)
    logger.info("MC futures estimate", tau=tau, value=estimate.value, std_error=estimate.std_error, n_paths=n_paths)
    return estimate


@log_performance
def mc_call(
    params: HestonParams,
    forward: float,
    strike: float,
    tau: float,
    n_paths: int = DEFAULT_PATHS,
    n_steps: int = DEFAULT_STEPS,
    seed: int = 0,
    antithetic: bool = False,
    threads: int = 1,
) -> McEstimate:
    """Undiscounted call payoff mean from the correlated log-forward simulation.

    The estimate also carries the sample mean of F_tau / F_0 and its standard
    error. A sound simulation keeps the ratio within 3 standard errors of one.
    """
    _check(n_paths, n_steps, tau)
    if forward <= 0.0 or strike <= 0.0:
        raise DomainError("forward and strike must be positive")

    def payoff(size: int, rng: np.random.Generator) -> np.ndarray:
        x = _simulate_block(params, tau, n_steps, size, rng, antithetic, with_spot=True)[0]
        growth = np.exp(x)
        return np.vstack([np.maximum(forward * growth - strike, 0.0), growth])

    blocks = _run_blocks(payoff, n_paths, seed, threads)
    estimate = _estimate([block[0] for block in blocks], antithetic, n_steps, seed)
    # blocks come back in seed order, so the check is thread-independent too
    growth = _estimate([block[1] for block in blocks], antithetic, n_steps, seed)
    estimate = estimate.model_copy(
        update={"martingale_ratio": growth.value, "martingale_std_error": growth.std_error}
    )
    log = logger.info if estimate.martingale_ok else logger.warning
    log(
        "MC call estimate",
        strike=strike,
        value=estimate.value,
        std_error=estimate.std_error,
        martingale_ratio=growth.value,
        martingale_std_error=growth.std_error,
        forward=forward,
    )
    return estimate


def mc_expected_variance(
    params: HestonParams,
    tau: float,
    n_paths: int = DEFAULT_PATHS,
    n_steps: int = DEFAULT_STEPS,
    seed: int = 0,
    antithetic: bool = False,
    threads: int = 1,
) -> McEstimate:
    _check(n_paths, n_steps, tau)
    blocks = _run_blocks(
        lambda size, rng: _simulate_block(params, tau, n_steps, size, rng, antithetic, with_spot=False)[1],
        n_paths, seed, threads,
    )
    return _estimate(blocks, antithetic, n_steps, seed)


def mc_index(
    params: HestonParams,
    n_paths: int = DEFAULT_PATHS,
    n_steps: int = DEFAULT_STEPS,
    seed: int = 0,
    threads: int = 1,
    horizon: Optional[float] = None,
) -> McEstimate:
    """100 * sqrt of the expected average variance over the index window.

    The square root is applied to the estimated mean; the reported standard
    error is propagated with the delta method.
    """
    window = index_window(params)
    horizon = window.tau_bar if horizon is None else horizon
    _check(n_paths, n_steps, horizon)
    blocks = _run_blocks(
        lambda size, rng: _simulate_block(
            params, horizon, n_steps, size, rng, False, with_spot=False, with_integral=True
        )[2] / horizon,
        n_paths, seed, threads,
    )
    average = _estimate(blocks, False, n_steps, seed)
    level = INDEX_SCALE * np.sqrt(average.value)
    std_error = INDEX_SCALE * average.std_error / (2.0 * np.sqrt(average.value))
    return McEstimate(value=float(level), std_error=float(std_error), n_paths=n_paths, n_steps=n_steps, seed=seed)
