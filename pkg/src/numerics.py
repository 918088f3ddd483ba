"""Gaussian moments, quadrature rules and the undiscounted Black formula."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import factorial2, roots_hermitenorm
from scipy.stats import norm

from src.errors import OutOfBoundsPriceError, ValidationError
from src.schema import normalize_flag, validate_nonnegative, validate_positive

GAUSS_HERMITE = "gauss_hermite_probabilist"
GAUSS_LEGENDRE = "gauss_legendre"

IV_LOWER = 1e-6
IV_UPPER = 5.0
IV_PRICE_TOL = 1e-10


# ----------------------------------------------------------------------
# Gaussian moments
# ----------------------------------------------------------------------
def gaussian_moment(p: int, sigma):
    """E[Y^p] for Y ~ N(0, sigma^2). Accepts scalar or array sigma."""
    if p < 0:
        raise ValidationError(f"moment order must be >= 0, got {p}")
    sigma = np.asarray(sigma, dtype=float)
    if p == 0:
        out = np.ones_like(sigma)
    elif p % 2 == 1:
        out = np.zeros_like(sigma)
    else:
        out = sigma**p * float(factorial2(p - 1, exact=True))
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------
# Quadrature
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    a: Optional[float] = None
    b: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (GAUSS_HERMITE, GAUSS_LEGENDRE):
            raise ValidationError(f"Unsupported quadrature kind: {self.kind}")
        if len(self.nodes) != len(self.weights) or len(self.nodes) < 1:
            raise ValidationError("nodes and weights must have equal length >= 1")
        if np.any(self.weights <= 0.0):
            raise ValidationError("quadrature weights must be positive")

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def make_quadrature(kind: str, n: int, a: Optional[float] = None, b: Optional[float] = None) -> QuadratureRule:
    if n < 1:
        raise ValidationError(f"quadrature size must be >= 1, got {n}")

    if kind == GAUSS_HERMITE:
        knots, weights = roots_hermitenorm(n)
        weights = weights / np.sqrt(2.0 * np.pi)
        # tail weights underflow to 0 beyond ~370 nodes
        keep = np.isfinite(weights) & (weights > 0.0)
        knots, weights = knots[keep], weights[keep]
        weights = weights / weights.sum()
        return QuadratureRule(nodes=knots, weights=weights, kind=kind)

    if kind == GAUSS_LEGENDRE:
        if a is None or b is None:
            raise ValidationError("gauss_legendre needs an interval [a, b]")
        if not a < b:
            raise ValidationError(f"invalid domain: a={a} must be < b={b}")
        knots, weights = np.polynomial.legendre.leggauss(n)
        knots_a_b = 0.5 * (b - a) * knots + 0.5 * (b + a)
        weights_a_b = 0.5 * (b - a) * weights
        return QuadratureRule(nodes=knots_a_b, weights=weights_a_b, kind=kind, a=float(a), b=float(b))

    raise ValidationError(f"Unsupported quadrature kind: {kind}")


def legendre_panels(a: float, b: float, n: int, max_width: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [a, b], panels no wider than max_width."""
    if b <= a:
        return np.empty(0), np.empty(0)
    n_panels = 1 if not max_width else max(1, int(np.ceil((b - a) / max_width)))
    edges = np.linspace(a, b, n_panels + 1)
    base_x, base_w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * base_x[None, :]).ravel()
    weights = (half[:, None] * base_w[None, :]).ravel()
    return nodes, weights


# ----------------------------------------------------------------------
# Black formula (no rates, no dividends)
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class BlackInputs:
    forward: float
    strike: float
    maturity: float
    vol: float
    flag: str = "call"

    def __post_init__(self):
        validate_positive("forward", self.forward)
        validate_positive("strike", self.strike)
        validate_positive("maturity", self.maturity)
        validate_nonnegative("vol", self.vol)
        object.__setattr__(self, "flag", normalize_flag(self.flag))


def black_total(forward, strike, total_std, flag: str = "call"):
    """
    Vectorized Black price parametrized by total standard deviation sigma*sqrt(T).
    Zero total std returns intrinsic value.
    """
    forward = np.asarray(forward, dtype=float)
    strike = np.asarray(strike, dtype=float)
    total_std = np.asarray(total_std, dtype=float)
    is_call = normalize_flag(flag) == "call"

    positive = total_std > 0.0
    safe_std = np.where(positive, total_std, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(forward / strike) + 0.5 * safe_std**2) / safe_std
    d2 = d1 - safe_std
    if is_call:
        price = forward * norm.cdf(d1) - strike * norm.cdf(d2)
        intrinsic = np.maximum(forward - strike, 0.0)
    else:
        price = strike * norm.cdf(-d2) - forward * norm.cdf(-d1)
        intrinsic = np.maximum(strike - forward, 0.0)
    out = np.where(positive, np.maximum(price, intrinsic), intrinsic)
    return float(out) if out.ndim == 0 else out


def black_price(inputs: BlackInputs) -> float:
    return float(black_total(inputs.forward, inputs.strike, inputs.vol * np.sqrt(inputs.maturity), inputs.flag))


def black_vega(forward: float, strike: float, maturity: float, vol: float) -> float:
    sd = vol * np.sqrt(maturity)
    if sd <= 0.0:
        return 0.0
    d1 = (np.log(forward / strike) + 0.5 * sd * sd) / sd
    return float(forward * norm.pdf(d1) * np.sqrt(maturity))


def price_bounds(forward: float, strike: float, flag: str) -> tuple[float, float]:
    if normalize_flag(flag) == "call":
        return max(forward - strike, 0.0), forward
    return max(strike - forward, 0.0), strike


def implied_vol(price: float, forward: float, strike: float, maturity: float, flag: str = "call") -> float:
    """
    Bisection with a safeguarded Newton step on the bracket [1e-6, 5].
    The bracket is widened (down to 0, up to 100) when the root lies outside it.
    """
    flag = normalize_flag(flag)
    validate_positive("forward", forward)
    validate_positive("strike", strike)
    validate_positive("maturity", maturity)
    lo_bound, hi_bound = price_bounds(forward, strike, flag)
    if not (lo_bound < price < hi_bound):
        raise OutOfBoundsPriceError(
            f"price {price!r} outside ({lo_bound}, {hi_bound}) for F={forward} K={strike} T={maturity} {flag}"
        )

    sqrt_t = np.sqrt(maturity)

    def f(v: float) -> float:
        return float(black_total(forward, strike, v * sqrt_t, flag)) - price

    lo, hi = IV_LOWER, IV_UPPER
    if f(lo) > 0.0:
        lo = 0.0
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > 100.0:
            raise OutOfBoundsPriceError(f"no implied vol below 100 for price {price}")

    tol = 1e-13 * max(1.0, forward, strike)
    v = 0.5 * (lo + hi)
    for _ in range(200):
        fv = f(v)
        if abs(fv) <= tol:
            return v
        if fv > 0.0:
            hi = v
        else:
            lo = v
        vega = black_vega(forward, strike, maturity, v)
        step_ok = False
        if vega > 0.0:
            step = fv / vega
            if abs(step) < 1e-15 * max(1.0, v):
                return v
            cand = v - step
            if lo < cand < hi:
                v, step_ok = cand, True
        if not step_ok:
            v = 0.5 * (lo + hi)
        if hi - lo < 1e-15:
            break
    if abs(f(v)) > IV_PRICE_TOL:
        raise OutOfBoundsPriceError(f"implied vol did not converge for price {price}")
    return v
