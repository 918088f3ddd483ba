"""VIX^2 as a polynomial in X_T, and quadrature pricing of VIX futures and options."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.special import comb
from scipy.stats import norm

from src.errors import NegativePolynomialError, OutOfBoundsPriceError, ValidationError
from src.logging_config import logger
from src.numerics import GAUSS_HERMITE, GAUSS_LEGENDRE, QuadratureRule, gaussian_moment, implied_vol, make_quadrature
from src.ou_process import conditional_variance, decay_factor, ou_variance
from src.quintic_model import ForwardVarianceCurve, ModelParams, normalization_g, self_convolve
from src.schema import normalize_flag, validate_nonnegative, validate_positive
from src.settings import section, vix_window

VIX_POINTS = 100.0
# standard-normal range kept for the option integrals
OPTION_HALF_WIDTH = 12.0


@dataclass(frozen=True)
class VixPolynomial:
    T: float
    beta: np.ndarray
    sigma_XT: float
    scale: float

    def h(self, x):
        """VIX_T^2 in index points squared, as a function of X_T."""
        return self.scale * np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.beta)


def _window_panels(curve: ForwardVarianceCurve, T: float, delta: float, n: int):
    """Gauss-Legendre nodes on [T, T+delta], split at curve breakpoints."""
    inner = [b for b in curve.breakpoints() if T < b < T + delta]
    edges = [T] + inner + [T + delta]
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        rule = make_quadrature("gauss_legendre", n, lo, hi)
        nodes.append(rule.nodes)
        weights.append(rule.weights)
    return np.concatenate(nodes), np.concatenate(weights)


def build_vix_polynomial(
    params: ModelParams,
    curve: ForwardVarianceCurve,
    T: float,
    n_nodes: Optional[int] = None,
    delta: Optional[float] = None,
) -> VixPolynomial:
    validate_positive("T", T)
    delta = float(delta or vix_window())
    n_nodes = int(n_nodes or section("quadrature")["beta_nodes"])

    u, w = _window_panels(curve, T, delta, n_nodes)
    ratio = np.asarray(curve.evaluate(u)) / np.asarray(normalization_g(params, u))
    cond_sd = np.sqrt(conditional_variance(params.ou, T, u))
    decay = np.asarray(decay_factor(params.ou, T, u))
    conv = self_convolve(params.alpha)

    # E[(G_T^u)^j] for j = 0..10, one row per power
    moments = np.array([np.broadcast_to(gaussian_moment(j, cond_sd), u.shape) for j in range(11)])
    beta = np.zeros(11)
    for i in range(11):
        weighted = w * ratio * decay**i
        for k in range(i, 11):
            if conv[k] == 0.0 or (k - i) % 2:
                continue
            beta[i] += conv[k] * comb(k, i, exact=True) * float(np.dot(weighted, moments[k - i]))

    poly = VixPolynomial(
        T=float(T),
        beta=beta,
        sigma_XT=float(np.sqrt(ou_variance(params.ou, T))),
        scale=VIX_POINTS**2 / delta,
    )
    logger.debug("[VIX] T=%.6f beta=%s sigma_XT=%.6f", T, np.array2string(beta, precision=6), poly.sigma_XT)
    return poly


def default_rule(n: Optional[int] = None) -> QuadratureRule:
    return make_quadrature(GAUSS_HERMITE, int(n or section("quadrature")["vix_nodes"]))


def _check_rule(quad: QuadratureRule) -> None:
    if quad.kind != GAUSS_HERMITE:
        raise ValidationError("VIX pricing integrates against the Gaussian density (gauss_hermite_probabilist)")


def _vix_values(poly: VixPolynomial, z: np.ndarray) -> np.ndarray:
    h = poly.h(poly.sigma_XT * z)
    floor = -1e-12 * max(1.0, float(np.max(np.abs(h))))
    if np.any(h < floor):
        raise NegativePolynomialError(f"VIX^2 polynomial negative at T={poly.T}: min={float(np.min(h))}")
    return np.sqrt(np.maximum(h, 0.0))


def vix_expectation(poly: VixPolynomial, quad: QuadratureRule, payoff: Callable[[np.ndarray], np.ndarray]) -> float:
    _check_rule(quad)
    return float(np.dot(quad.weights, payoff(_vix_values(poly, quad.nodes))))


def vix_future(poly: VixPolynomial, quad: QuadratureRule) -> float:
    return vix_expectation(poly, quad, lambda v: v)


def payoff_kinks(poly: VixPolynomial, strike: float, half_width: float = OPTION_HALF_WIDTH) -> np.ndarray:
    """Real z with h(sigma_XT z) = strike^2, inside (-half_width, half_width)."""
    coeffs = poly.scale * poly.beta * poly.sigma_XT ** np.arange(len(poly.beta))
    coeffs[0] -= strike * strike
    roots = np.roots(coeffs[::-1])
    real = roots[np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots.real))].real
    return np.unique(real[np.abs(real) < half_width])


def vix_option(poly: VixPolynomial, quad: QuadratureRule, strike: float, flag: str = "call") -> float:
    """
    E[(VIX_T - K)+] (or the put). The Gaussian integral is split at the payoff
    kinks and each smooth piece gets a Gauss-Legendre panel with as many nodes
    as the Hermite rule.
    """
    validate_nonnegative("strike", strike)
    _check_rule(quad)
    sign = 1.0 if normalize_flag(flag) == "call" else -1.0
    edges = np.concatenate(([-OPTION_HALF_WIDTH], payoff_kinks(poly, strike), [OPTION_HALF_WIDTH]))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo <= 1e-14:
            continue
        panel = make_quadrature(GAUSS_LEGENDRE, len(quad.nodes), lo, hi)
        payoff = np.maximum(sign * (_vix_values(poly, panel.nodes) - strike), 0.0)
        total += float(np.dot(panel.weights * norm.pdf(panel.nodes), payoff))
    return total


@dataclass
class VixSmilePoint:
    strike: float
    future: float
    price: float
    flag: str
    implied_vol: Optional[float]
    note: str = ""


def vix_smile(
    params: ModelParams,
    curve: ForwardVarianceCurve,
    T: float,
    strikes: Sequence[float],
    quad: Optional[QuadratureRule] = None,
) -> List[VixSmilePoint]:
    """
    Implied vols against the model's own VIX future. Each strike is priced with
    its out-of-the-money flag; strikes that cannot be inverted get a note instead.
    """
    quad = quad or default_rule()
    poly = build_vix_polynomial(params, curve, T)
    future = vix_future(poly, quad)
    out: List[VixSmilePoint] = []
    for k in strikes:
        validate_positive("strike", k)
        flag = "call" if k >= future else "put"
        price = vix_option(poly, quad, k, flag)
        intrinsic = max(future - k, 0.0) if flag == "call" else max(k - future, 0.0)
        if price - intrinsic <= 1e-12 * max(1.0, future):
            # point-mass VIX distribution: no time value
            out.append(VixSmilePoint(k, future, price, flag, 0.0, "intrinsic"))
            continue
        try:
            iv = implied_vol(price, future, k, T, flag)
            out.append(VixSmilePoint(k, future, price, flag, iv))
        except OutOfBoundsPriceError as e:
            logger.warning("[VIX] T=%.4f K=%.4f skipped: %s", T, k, e)
            out.append(VixSmilePoint(k, future, price, flag, None, str(e)))
    logger.info("[VIX] T=%.4f future=%.4f strikes=%d", T, future, len(out))
    return out
