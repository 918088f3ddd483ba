"""Monte Carlo pricing of SPX vanillas.

X is simulated exactly; only the W-measurable part of log S is simulated (Euler,
left-point sigma). Conditional on W, S_T is lognormal so the W-perp expectation is
taken in closed form. Antithetic pairs and a time-option control variate
reduce the remaining variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DegenerateNormalizationError, OutOfBoundsPriceError, ValidationError
from src.logging_config import logger
from src.numerics import black_total, implied_vol, price_bounds
from src.ou_process import PathGrid, block_draws, block_layout, paths_from_draws, transition_coefficients, uniform_grid
from src.quintic_model import ForwardVarianceCurve, ModelParams, poly_eval, vol_scale
from src.schema import normalize_flag, validate_positive
from src.settings import default_threads, section
from src.utils import map_ordered


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 524288
    steps_per_year: int = 312
    seed: int = 0
    antithetic: bool = True
    control_variate: bool = True
    spot: float = 100.0
    block_size: int = 16384
    threads: int = 1

    def __post_init__(self):
        if self.n_paths < 2:
            raise ValidationError("n_paths must be >= 2")
        if self.antithetic and self.n_paths % 2:
            raise ValidationError("n_paths must be even with antithetic pairing")
        if self.steps_per_year < 52:
            raise ValidationError("steps_per_year must be >= 52 to resolve the mean-reversion scale")
        if self.block_size < 2 or (self.antithetic and self.block_size % 2):
            raise ValidationError("block_size must be even and >= 2")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        validate_positive("spot", self.spot)

    @classmethod
    def from_settings(cls, **overrides) -> "McConfig":
        mc = section("monte_carlo")
        doc = {
            "n_paths": int(mc["n_paths"]),
            "steps_per_year": int(mc["steps_per_year"]),
            "antithetic": bool(mc["antithetic"]),
            "control_variate": bool(mc["control_variate"]),
            "spot": float(mc["spot"]),
            "block_size": int(mc["block_size"]),
            "threads": default_threads(),
        }
        doc.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**doc)


@dataclass(frozen=True)
class McPrice:
    value: float
    std_error: float
    n_effective: int


@dataclass
class SwRecords:
    """Per-path terminal quantities of the W-measurable simulation."""

    log_s_w: np.ndarray
    integrated_rho2_var: np.ndarray
    integrated_total_var: np.ndarray
    T: float
    antithetic: bool


# ----------------------------------------------------------------------
# Simulation of the W-measurable part
# ----------------------------------------------------------------------
def _left_scales(params: ModelParams, curve: ForwardVarianceCurve, times: np.ndarray) -> Tuple[np.ndarray, Optional[float]]:
    """
    sqrt(xi0/g) at every left endpoint. With alpha0 = 0, g(0) = 0: the first step
    then runs at the deterministic vol sqrt(xi0(0)), which is known at time 0 and
    matches E[sigma_0^2] = xi0(0). Returns (scales, sigma0 or None).
    """
    left = times[:-1]
    try:
        return np.asarray(vol_scale(params, curve, left)), None
    except DegenerateNormalizationError:
        scales = np.zeros_like(left)
        if len(left) > 1:
            scales[1:] = vol_scale(params, curve, left[1:])
        return scales, float(np.sqrt(curve.evaluate(float(times[0]))))


def _sw_block(params, grid: PathGrid, seed: int, idx: int, lo: int, hi: int, coeffs, with_perp: bool):
    decay, std, scales, sigma0 = coeffs
    y = block_draws(seed, idx, hi - lo, grid.n_steps, grid.antithetic)
    x = paths_from_draws(decay, std, y)
    dt = np.diff(np.asarray(grid.times))
    rho = params.rho
    # independent W-perp stream, only for the naive estimator
    perp_rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(idx), 1])) if with_perp else None

    log_s = np.zeros(hi - lo)
    total = np.zeros(hi - lo)
    perp = np.zeros(hi - lo)
    for i in range(grid.n_steps):
        if i == 0 and sigma0 is not None:
            sigma = np.full(hi - lo, sigma0)
        else:
            sigma = scales[i] * poly_eval(params.alpha, x[:, i])
        var_dt = sigma * sigma * dt[i]
        log_s += -0.5 * rho * rho * var_dt + rho * sigma * np.sqrt(dt[i]) * y[:, i]
        total += var_dt
        if perp_rng is not None:
            perp += sigma * np.sqrt(dt[i]) * perp_rng.standard_normal(hi - lo)
    return log_s, total, perp


def _simulate(params, curve, grid: PathGrid, seed: int, block_size: int, threads: int, with_perp: bool = False):
    times = np.asarray(grid.times)
    decay, std = transition_coefficients(params.ou, times)
    scales, sigma0 = _left_scales(params, curve, times)
    coeffs = (decay, std, scales, sigma0)
    blocks = block_layout(grid.n_paths, block_size, grid.antithetic)

    def run(item):
        idx, (lo, hi) = item
        return _sw_block(params, grid, seed, idx, lo, hi, coeffs, with_perp)

    results = map_ordered(run, list(enumerate(blocks)), threads)
    log_s = np.concatenate([r[0] for r in results])
    total = np.concatenate([r[1] for r in results])
    perp = np.concatenate([r[2] for r in results])
    return log_s, total, perp


def simulate_sw(
    params: ModelParams,
    curve: ForwardVarianceCurve,
    grid: PathGrid,
    seed: int,
    block_size: Optional[int] = None,
    threads: int = 1,
) -> SwRecords:
    block_size = int(block_size or section("monte_carlo")["block_size"])
    log_s, total, _ = _simulate(params, curve, grid, seed, block_size, threads)
    return SwRecords(
        log_s_w=log_s,
        integrated_rho2_var=params.rho**2 * total,
        integrated_total_var=total,
        T=grid.times[-1],
        antithetic=grid.antithetic,
    )


def simulate_for(params: ModelParams, curve: ForwardVarianceCurve, T: float, cfg: McConfig) -> SwRecords:
    grid = uniform_grid(T, cfg.steps_per_year, cfg.n_paths, cfg.antithetic)
    logger.debug("[SPX] simulate T=%.4f paths=%d steps=%d", T, cfg.n_paths, grid.n_steps)
    return simulate_sw(params, curve, grid, cfg.seed, cfg.block_size, cfg.threads)


# ----------------------------------------------------------------------
# Estimators
# ----------------------------------------------------------------------
def _pair_average(samples: np.ndarray, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return samples
    return 0.5 * (samples[0::2] + samples[1::2])


def _mc_price(samples: np.ndarray) -> McPrice:
    n = len(samples)
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return McPrice(value=mean, std_error=se, n_effective=n)


def _mixed_samples(records: SwRecords, rho: float, spot: float, strike: float, flag: str, control: bool) -> np.ndarray:
    """
    Conditional Black price per path (pair-averaged), optionally corrected by the
    time option Y = Black(S^W_T, K, rho^2 (Q - V)) whose mean is Black(S0, K, rho^2 Q).
    """
    forward = spot * np.exp(records.log_s_w)
    total_var = records.integrated_total_var
    x = _pair_average(black_total(forward, strike, np.sqrt((1.0 - rho * rho) * total_var), flag), records.antithetic)
    if not control or rho == 0.0:
        return x

    # Q is the sample max of V, so mean_y is exact conditional on Q only
    budget = float(np.max(total_var)) + 1e-9
    y = black_total(forward, strike, np.sqrt(rho * rho * (budget - total_var)), flag)
    y = _pair_average(y, records.antithetic)
    mean_y = black_total(spot, strike, np.sqrt(rho * rho * budget), flag)
    var_y = float(np.var(y, ddof=1))
    if var_y <= 1e-300:
        return x
    c = -float(np.cov(x, y, ddof=1)[0, 1]) / var_y
    return x + c * (y - mean_y)


def price_from_records(records: SwRecords, rho: float, spot: float, strike: float, flag: str = "call", control: bool = True) -> McPrice:
    validate_positive("strike", strike)
    return _mc_price(_mixed_samples(records, rho, spot, strike, normalize_flag(flag), control))


def mixed_call_price(
    params: ModelParams,
    curve: ForwardVarianceCurve,
    T: float,
    K: float,
    cfg: McConfig,
    flag: str = "call",
) -> McPrice:
    validate_positive("T", T)
    validate_positive("K", K)
    records = simulate_for(params, curve, T, cfg)
    price = price_from_records(records, params.rho, cfg.spot, K, flag, cfg.control_variate)
    logger.info("[SPX] T=%.4f K=%.4f %s price=%.6f se=%.2e", T, K, flag, price.value, price.std_error)
    return price


def naive_price(
    params: ModelParams,
    curve: ForwardVarianceCurve,
    T: float,
    K: float,
    cfg: McConfig,
    flag: str = "call",
) -> McPrice:
    """Plain two-factor Euler estimator (no mixing, no antithetics, no control)."""
    grid = uniform_grid(T, cfg.steps_per_year, cfg.n_paths, antithetic=False)
    log_s_w, total, perp = _simulate(params, curve, grid, cfg.seed, cfg.block_size, cfg.threads, with_perp=True)
    rho = params.rho
    log_s = log_s_w - 0.5 * (1.0 - rho * rho) * total + np.sqrt(1.0 - rho * rho) * perp
    s_t = cfg.spot * np.exp(log_s)
    payoff = np.maximum(s_t - K, 0.0) if normalize_flag(flag) == "call" else np.maximum(K - s_t, 0.0)
    return _mc_price(payoff)


# ----------------------------------------------------------------------
# Smiles and diagnostics
# ----------------------------------------------------------------------
@dataclass
class SpxSmilePoint:
    strike: float
    flag: str
    price: float
    std_error: float
    implied_vol: Optional[float]
    iv_low: Optional[float]
    iv_high: Optional[float]
    note: str = ""


def _invert_clipped(price: float, forward: float, strike: float, T: float, flag: str) -> Optional[float]:
    lo, hi = price_bounds(forward, strike, flag)
    if price <= lo or price >= hi:
        return None
    try:
        return implied_vol(price, forward, strike, T, flag)
    except OutOfBoundsPriceError:
        return None


def smile_from_records(records: SwRecords, rho: float, spot: float, strikes: Sequence[float], control: bool = True) -> List[SpxSmilePoint]:
    """All strikes share one path set; each is priced with its out-of-the-money flag."""
    T = records.T
    out: List[SpxSmilePoint] = []
    for k in strikes:
        validate_positive("strike", k)
        flag = "call" if k >= spot else "put"
        p = price_from_records(records, rho, spot, k, flag, control)
        iv = _invert_clipped(p.value, spot, k, T, flag)
        note = "" if iv is not None else "price outside Black bounds"
        if iv is None:
            logger.warning("[SPX] T=%.4f K=%.4f inversion failed (price=%.6g)", T, k, p.value)
        out.append(
            SpxSmilePoint(
                strike=float(k),
                flag=flag,
                price=p.value,
                std_error=p.std_error,
                implied_vol=iv,
                iv_low=_invert_clipped(p.value - p.std_error, spot, k, T, flag),
                iv_high=_invert_clipped(p.value + p.std_error, spot, k, T, flag),
                note=note,
            )
        )
    return out


def spx_smile(
    params: ModelParams,
    curve: ForwardVarianceCurve,
    T: float,
    strikes: Sequence[float],
    cfg: McConfig,
) -> List[SpxSmilePoint]:
    records = simulate_for(params, curve, T, cfg)
    points = smile_from_records(records, params.rho, cfg.spot, strikes, cfg.control_variate)
    logger.info("[SPX] T=%.4f smile strikes=%d paths=%d", T, len(points), cfg.n_paths)
    return points


def martingale_check(params: ModelParams, curve: ForwardVarianceCurve, T: float, cfg: McConfig) -> McPrice:
    """
    E[S_T]/S0 via the mixing representation: E[S_T | F^W] = S0 exp(log S^W_T)
    because log S^W carries only the rho^2 part of the drift.
    """
    if params.rho > 0.0:
        raise ValidationError("martingale check requires rho <= 0")
    records = simulate_for(params, curve, T, cfg)
    samples = _pair_average(np.exp(records.log_s_w), records.antithetic)
    est = _mc_price(samples)
    logger.info("[SPX] martingale T=%.4f E[S_T]/S0=%.6f se=%.2e", T, est.value, est.std_error)
    return est
