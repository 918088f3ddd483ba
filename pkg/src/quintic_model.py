"""Model parameters, the quintic polynomial, the normalization g and the xi0 curves.

sigma_t = sqrt(xi0(t)) * p(X_t) / sqrt(g(t)),  g(t) = E[p(X_t)^2],
p(x) = a0 + a1 x + a3 x^3 + a5 x^5.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from src.errors import DegenerateNormalizationError, OutOfHorizonError, ValidationError
from src.logging_config import logger
from src.numerics import gaussian_moment
from src.ou_process import OuSpec, ou_spec_from_dict, ou_variance
from src.schema import validate_nonnegative, validate_positive, validate_range
from src.settings import default_epsilon

ALPHA_NAMES = ("alpha0", "alpha1", "alpha3", "alpha5")


# ----------------------------------------------------------------------
# Parameters
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ModelParams:
    alpha: Tuple[float, float, float, float]
    rho: float
    ou: OuSpec

    def __post_init__(self):
        if len(self.alpha) != 4:
            raise ValidationError("alpha must be (alpha0, alpha1, alpha3, alpha5)")
        alpha = tuple(validate_nonnegative(n, a) for n, a in zip(ALPHA_NAMES, self.alpha))
        if not any(a > 0.0 for a in alpha):
            raise ValidationError("at least one alpha must be > 0")
        object.__setattr__(self, "alpha", alpha)
        validate_range("rho", self.rho, -1.0, 0.0)
        if alpha[3] == 0.0:
            logger.warning("alpha5 = 0: outside the regime where S is known to be a true martingale")


def params_to_dict(params: ModelParams) -> Dict[str, Any]:
    doc: Dict[str, Any] = dict(zip(ALPHA_NAMES, params.alpha))
    doc["rho"] = params.rho
    doc.update(params.ou.to_dict())
    return doc


def params_from_dict(doc: Dict[str, Any]) -> ModelParams:
    missing = [k for k in ALPHA_NAMES + ("rho",) if k not in doc]
    if missing:
        raise ValidationError(f"parameter document is missing {missing}")
    return ModelParams(
        alpha=tuple(float(doc[k]) for k in ALPHA_NAMES),
        rho=float(doc["rho"]),
        ou=ou_spec_from_dict(doc, default_epsilon=default_epsilon()),
    )


# ----------------------------------------------------------------------
# Polynomial
# ----------------------------------------------------------------------
def alpha_coefficients(alpha: Sequence[float]) -> np.ndarray:
    """(a0, a1, a3, a5) -> full degree-5 coefficient vector with a2 = a4 = 0."""
    a0, a1, a3, a5 = alpha
    return np.array([a0, a1, 0.0, a3, 0.0, a5], dtype=float)


def poly_eval(alpha: Sequence[float], x):
    out = np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), alpha_coefficients(alpha))
    return float(out) if np.ndim(out) == 0 else out


def self_convolve(alpha: Sequence[float]) -> np.ndarray:
    full = alpha_coefficients(alpha)
    return np.convolve(full, full)


def normalization_g(params: ModelParams, u):
    """g(u) = sum_k (alpha*alpha)_k E[X_u^k]. Vectorized over u."""
    conv = self_convolve(params.alpha)
    sigma = np.sqrt(ou_variance(params.ou, u))
    g = sum(c * gaussian_moment(k, sigma) for k, c in enumerate(conv) if c != 0.0)
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0.0):
        raise DegenerateNormalizationError("g(u) = 0 (alpha0 = 0 at u = 0)")
    return float(g) if g.ndim == 0 else g


# ----------------------------------------------------------------------
# Forward variance curves
# ----------------------------------------------------------------------
class ForwardVarianceCurve:
    kind = "base"
    horizon: Optional[float] = None

    def _values(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _antiderivative(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self) -> List[float]:
        return []

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError

    def _check(self, t: np.ndarray) -> None:
        if np.any(t < 0.0):
            raise ValidationError("curve evaluated at negative time")
        if self.horizon is not None and np.any(t > self.horizon + 1e-12):
            raise OutOfHorizonError(f"t={float(np.max(t))} beyond curve horizon {self.horizon}")

    def evaluate(self, t):
        t_arr = np.asarray(t, dtype=float)
        self._check(t_arr)
        out = self._values(t_arr)
        return float(out) if out.ndim == 0 else out

    def integral(self, a: float, b: float) -> float:
        if b < a:
            raise ValidationError("integral needs a <= b")
        ends = np.array([a, b], dtype=float)
        self._check(ends)
        lo, hi = self._antiderivative(ends)
        return float(hi - lo)


@dataclass(frozen=True)
class ParametricCurve(ForwardVarianceCurve):
    a: float
    b: float
    c: float
    kind = "parametric"

    def __post_init__(self):
        for name in ("a", "b", "c"):
            validate_positive(name, getattr(self, name))

    def _values(self, t):
        w = np.exp(-self.b * t)
        return self.a * w + self.c * (1.0 - w)

    def _antiderivative(self, t):
        return self.c * t + (self.a - self.c) * (-np.expm1(-self.b * t)) / self.b

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.kind, "params": {"a": self.a, "b": self.b, "c": self.c}}


@dataclass(frozen=True)
class SplineSquaredCurve(ForwardVarianceCurve):
    """(natural cubic spline through (t_i, x_i))^2, flat beyond the outer nodes."""

    times: Tuple[float, ...]
    values: Tuple[float, ...]
    horizon: Optional[float] = None
    _spline: Any = field(default=None, init=False, repr=False, compare=False)
    kind = "spline"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or len(t) < 1 or len(t) != len(x):
            raise ValidationError("spline needs matching, non-empty node lists")
        if np.any(np.diff(t) <= 0.0) or t[0] < 0.0:
            raise ValidationError("spline node times must be non-negative and increasing")
        if np.any(x < 0.0):
            raise ValidationError("spline node values must be >= 0")
        object.__setattr__(self, "times", tuple(float(v) for v in t))
        object.__setattr__(self, "values", tuple(float(v) for v in x))
        if len(t) >= 2:
            object.__setattr__(self, "_spline", CubicSpline(t, x, bc_type="natural"))

    def _root(self, t):
        if self._spline is None:
            return np.full_like(t, self.values[0])
        return self._spline(np.clip(t, self.times[0], self.times[-1]))

    def _values(self, t):
        return self._root(t) ** 2

    def _antiderivative(self, t):
        # squared cubic is degree 6 per segment: 4-point Gauss-Legendre is exact
        base_x, base_w = np.polynomial.legendre.leggauss(4)
        out = []
        for end in np.atleast_1d(t):
            edges = np.unique(np.concatenate([[0.0], [v for v in self.times if v < end], [end]]))
            total = 0.0
            for lo, hi in zip(edges[:-1], edges[1:]):
                s = 0.5 * (hi - lo) * base_x + 0.5 * (hi + lo)
                total += 0.5 * (hi - lo) * float(np.dot(base_w, self._values(s)))
            out.append(total)
        return np.asarray(out)

    def breakpoints(self) -> List[float]:
        return list(self.times)

    def with_factors(self, factors: Sequence[float]) -> "SplineSquaredCurve":
        f = np.asarray(factors, dtype=float)
        if f.shape != (len(self.values),):
            raise ValidationError("one factor per spline node is required")
        return SplineSquaredCurve(self.times, tuple(np.asarray(self.values) * f), horizon=self.horizon)

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"type": self.kind, "nodes": [[t, x] for t, x in zip(self.times, self.values)]}
        if self.horizon is not None:
            doc["horizon"] = self.horizon
        return doc


@dataclass(frozen=True)
class PiecewiseConstantCurve(ForwardVarianceCurve):
    """values[i] on [breakpoints[i], breakpoints[i+1]); flat outside."""

    times: Tuple[float, ...]
    values: Tuple[float, ...]
    horizon: Optional[float] = None
    kind = "piecewise"

    def __post_init__(self):
        b = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if len(b) < 2 or len(v) != len(b) - 1:
            raise ValidationError("piecewise curve needs n+1 breakpoints for n values")
        if b[0] < 0.0 or np.any(np.diff(b) <= 0.0):
            raise ValidationError("breakpoints must be non-negative and increasing")
        if np.any(v <= 0.0):
            raise ValidationError("piecewise values must be > 0")
        object.__setattr__(self, "times", tuple(float(x) for x in b))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    def _index(self, t):
        b = np.asarray(self.times)
        return np.clip(np.searchsorted(b, t, side="right") - 1, 0, len(self.values) - 1)

    def _values(self, t):
        return np.asarray(self.values)[self._index(t)]

    def _antiderivative(self, t):
        b = np.asarray(self.times)
        v = np.asarray(self.values)
        cum = np.concatenate([[v[0] * b[0]], v[0] * b[0] + np.cumsum(v * np.diff(b))])
        out = np.interp(t, b, cum)
        out = np.where(t < b[0], v[0] * t, out)
        return np.where(t > b[-1], cum[-1] + v[-1] * (t - b[-1]), out)

    def breakpoints(self) -> List[float]:
        return list(self.times)

    def to_dict(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"type": self.kind, "breakpoints": list(self.times), "values": list(self.values)}
        if self.horizon is not None:
            doc["horizon"] = self.horizon
        return doc


def flat_curve(level: float) -> ParametricCurve:
    """xi0(t) = level for every t."""
    return ParametricCurve(a=level, b=1.0, c=level)


def curve_from_dict(doc: Dict[str, Any]) -> ForwardVarianceCurve:
    kind = str(doc.get("type") or "").strip().lower()
    horizon = doc.get("horizon")
    horizon = None if horizon is None else validate_positive("horizon", horizon)
    if kind == "parametric":
        p = doc.get("params") or {}
        return ParametricCurve(a=float(p["a"]), b=float(p["b"]), c=float(p["c"]))
    if kind == "spline":
        nodes = doc.get("nodes") or []
        return SplineSquaredCurve(
            times=tuple(float(n[0]) for n in nodes),
            values=tuple(float(n[1]) for n in nodes),
            horizon=horizon,
        )
    if kind == "piecewise":
        return PiecewiseConstantCurve(
            times=tuple(float(x) for x in doc.get("breakpoints") or []),
            values=tuple(float(x) for x in doc.get("values") or []),
            horizon=horizon,
        )
    raise ValidationError(f"Unsupported curve type: {doc.get('type')!r}")


def xi0_eval(curve: ForwardVarianceCurve, t):
    return curve.evaluate(t)


def integrate_xi0(curve: ForwardVarianceCurve, a: float, b: float) -> float:
    return curve.integral(a, b)


# ----------------------------------------------------------------------
# Spot volatility
# ----------------------------------------------------------------------
def vol_scale(params: ModelParams, curve: ForwardVarianceCurve, t):
    """sqrt(xi0(t) / g(t)), the state-independent factor of sigma_t."""
    out = np.sqrt(np.asarray(curve.evaluate(t)) / np.asarray(normalization_g(params, t)))
    return float(out) if out.ndim == 0 else out


def vol_from_state(params: ModelParams, curve: ForwardVarianceCurve, t: float, x):
    return vol_scale(params, curve, t) * poly_eval(params.alpha, x)
