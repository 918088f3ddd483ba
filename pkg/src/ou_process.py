"""The Gaussian driving factor X: law, conditional decomposition, exact simulation.

dX_t = -lambda(t) X_t dt + eta(t) dW_t, X_0 = 0, with
lambda(t) = (1/2 - H(t)) / eps and eta(t) = eps^(H(t) - 1/2).
H is either constant or H(t) = h0 e^{-kappa t} + h_inf (1 - e^{-kappa t}).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple, Union

import numpy as np

from src.errors import ValidationError
from src.logging_config import logger
from src.numerics import legendre_panels
from src.schema import validate_finite, validate_positive
from src.settings import section
from src.utils import map_ordered

# panel width is chosen so that 2 * lambda_max * width stays below this
_PANEL_DECAY = 20.0


@dataclass(frozen=True)
class ConstantH:
    h: float

    def __post_init__(self):
        validate_finite("h", self.h)
        if self.h >= 0.5:
            raise ValidationError(f"H must be < 1/2 for a finite stationary variance, got {self.h}")


@dataclass(frozen=True)
class TimeDependentH:
    h0: float
    h_inf: float
    kappa: float

    def __post_init__(self):
        validate_finite("h0", self.h0)
        validate_finite("h_inf", self.h_inf)
        validate_positive("kappa", self.kappa)
        # H(t) is monotone between h0 and h_inf
        if max(self.h0, self.h_inf) >= 0.5:
            raise ValidationError(f"H(t) must stay < 1/2: h0={self.h0} h_inf={self.h_inf}")


HMode = Union[ConstantH, TimeDependentH]


@dataclass(frozen=True)
class OuSpec:
    epsilon: float
    h_mode: HMode

    def __post_init__(self):
        validate_positive("epsilon", self.epsilon)
        if not isinstance(self.h_mode, (ConstantH, TimeDependentH)):
            raise ValidationError(f"unsupported h_mode: {self.h_mode!r}")

    @property
    def time_dependent(self) -> bool:
        return isinstance(self.h_mode, TimeDependentH)

    def hurst(self, t):
        t = np.asarray(t, dtype=float)
        m = self.h_mode
        if isinstance(m, ConstantH):
            return np.full_like(t, m.h)
        w = np.exp(-m.kappa * t)
        return m.h0 * w + m.h_inf * (1.0 - w)

    def cumulative_rate(self, t):
        """Integral of lambda over [0, t], closed form for both modes."""
        t = np.asarray(t, dtype=float)
        m = self.h_mode
        if isinstance(m, ConstantH):
            return (0.5 - m.h) * t / self.epsilon
        return ((0.5 - m.h_inf) * t - (m.h0 - m.h_inf) * (1.0 - np.exp(-m.kappa * t)) / m.kappa) / self.epsilon

    def max_rate(self) -> float:
        m = self.h_mode
        h_min = m.h if isinstance(m, ConstantH) else min(m.h0, m.h_inf)
        return (0.5 - h_min) / self.epsilon

    def to_dict(self) -> dict:
        m = self.h_mode
        if isinstance(m, ConstantH):
            return {"epsilon": self.epsilon, "h": m.h}
        return {"epsilon": self.epsilon, "h0": m.h0, "h_inf": m.h_inf, "kappa": m.kappa}


def ou_spec_from_dict(doc: dict, default_epsilon: Optional[float] = None) -> OuSpec:
    eps = doc.get("epsilon", default_epsilon)
    if eps is None:
        raise ValidationError("epsilon is required")
    if "h" in doc:
        return OuSpec(epsilon=float(eps), h_mode=ConstantH(float(doc["h"])))
    if all(k in doc for k in ("h0", "h_inf", "kappa")):
        return OuSpec(
            epsilon=float(eps),
            h_mode=TimeDependentH(float(doc["h0"]), float(doc["h_inf"]), float(doc["kappa"])),
        )
    raise ValidationError("parameters need either h or (h0, h_inf, kappa)")


# ----------------------------------------------------------------------
# Law of X
# ----------------------------------------------------------------------
def _constant_variance(spec: OuSpec, dt):
    h = spec.h_mode.h
    dt = np.asarray(dt, dtype=float)
    return spec.epsilon ** (2.0 * h) / (1.0 - 2.0 * h) * (-np.expm1(-(1.0 - 2.0 * h) * dt / spec.epsilon))


@lru_cache(maxsize=65536)
def _time_dependent_variance(spec: OuSpec, T: float, u: float) -> float:
    if u <= T:
        return 0.0
    n = int(section("quadrature")["ou_panel_nodes"])
    s, w = legendre_panels(T, u, n, max_width=_PANEL_DECAY / (2.0 * spec.max_rate()))
    lam_u = spec.cumulative_rate(u)
    eta2 = spec.epsilon ** (2.0 * spec.hurst(s) - 1.0)
    integrand = np.exp(-2.0 * (lam_u - spec.cumulative_rate(s))) * eta2
    return float(np.dot(w, integrand))


def conditional_variance(spec: OuSpec, T: float, u):
    """Variance of G_T^u = X_u - X_T * decay_factor(T, u). Vectorized over u."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < T):
        raise ValidationError(f"need u >= T (T={T})")
    if isinstance(spec.h_mode, ConstantH):
        out = _constant_variance(spec, u_arr - T)
    else:
        out = np.array([_time_dependent_variance(spec, float(T), float(x)) for x in u_arr.ravel()]).reshape(u_arr.shape)
    return float(out) if out.ndim == 0 else out


def ou_variance(spec: OuSpec, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise ValidationError("t must be >= 0")
    return conditional_variance(spec, 0.0, t)


def decay_factor(spec: OuSpec, T: float, u):
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < T):
        raise ValidationError(f"need u >= T (T={T})")
    out = np.exp(-(spec.cumulative_rate(u_arr) - spec.cumulative_rate(T)))
    return float(out) if out.ndim == 0 else out


def stationary_variance(spec: OuSpec) -> float:
    if spec.time_dependent:
        raise ValidationError("stationary variance is defined for constant H only")
    h = spec.h_mode.h
    return spec.epsilon ** (2.0 * h) / (1.0 - 2.0 * h)


# ----------------------------------------------------------------------
# Exact simulation
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class PathGrid:
    times: Tuple[float, ...]
    n_paths: int
    antithetic: bool = True

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValidationError("grid needs at least two times")
        if t[0] != 0.0:
            raise ValidationError("grid must start at 0")
        if np.any(np.diff(t) <= 0.0):
            raise ValidationError("grid times must be strictly increasing")
        if self.n_paths < 1:
            raise ValidationError("n_paths must be >= 1")
        if self.antithetic and self.n_paths % 2:
            raise ValidationError("n_paths must be even with antithetic pairing")
        object.__setattr__(self, "times", tuple(float(x) for x in t))

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


def uniform_grid(T: float, steps_per_year: int, n_paths: int, antithetic: bool = True) -> PathGrid:
    validate_positive("T", T)
    n_steps = max(1, int(np.ceil(T * steps_per_year - 1e-9)))
    return PathGrid(times=tuple(np.linspace(0.0, T, n_steps + 1)), n_paths=n_paths, antithetic=antithetic)


@dataclass
class OuPaths:
    x: np.ndarray       # n_paths x len(times)
    draws: np.ndarray   # n_paths x n_steps


def transition_coefficients(spec: OuSpec, times) -> Tuple[np.ndarray, np.ndarray]:
    """Per-step decay e^{-int lambda} and exact increment standard deviation."""
    t = np.asarray(times, dtype=float)
    decay = np.array([decay_factor(spec, t[i], t[i + 1]) for i in range(len(t) - 1)])
    std = np.sqrt([conditional_variance(spec, t[i], t[i + 1]) for i in range(len(t) - 1)])
    return decay, np.asarray(std)


def block_layout(n_paths: int, block_size: int, antithetic: bool) -> List[Tuple[int, int]]:
    if antithetic and block_size % 2:
        raise ValidationError("block_size must be even with antithetic pairing")
    return [(start, min(n_paths, start + block_size)) for start in range(0, n_paths, block_size)]


def block_draws(seed: int, block_index: int, n: int, n_steps: int, antithetic: bool) -> np.ndarray:
    """
    Standard normal draws for one block. Each block has its own substream so the
    result does not depend on how blocks are scheduled.
    Rows 2k and 2k+1 are negatives of each other under antithetic pairing.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(block_index)]))
    if not antithetic:
        return rng.standard_normal((n, n_steps))
    half = rng.standard_normal((n // 2, n_steps))
    out = np.empty((n, n_steps))
    out[0::2] = half
    out[1::2] = -half
    return out


def paths_from_draws(decay: np.ndarray, std: np.ndarray, draws: np.ndarray) -> np.ndarray:
    n, m = draws.shape
    x = np.zeros((n, m + 1))
    for i in range(m):
        x[:, i + 1] = x[:, i] * decay[i] + std[i] * draws[:, i]
    return x


def simulate_exact(
    spec: OuSpec,
    grid: PathGrid,
    seed: int,
    block_size: Optional[int] = None,
    threads: int = 1,
) -> OuPaths:
    block_size = int(block_size or section("monte_carlo")["block_size"])
    decay, std = transition_coefficients(spec, grid.times)
    blocks = block_layout(grid.n_paths, block_size, grid.antithetic)
    logger.debug("[OU] simulate paths=%d steps=%d blocks=%d", grid.n_paths, grid.n_steps, len(blocks))

    def run(item: Tuple[int, Tuple[int, int]]):
        idx, (lo, hi) = item
        y = block_draws(seed, idx, hi - lo, grid.n_steps, grid.antithetic)
        return paths_from_draws(decay, std, y), y

    results = map_ordered(run, list(enumerate(blocks)), threads)
    return OuPaths(x=np.vstack([r[0] for r in results]), draws=np.vstack([r[1] for r in results]))
