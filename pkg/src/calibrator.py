"""Joint SPX/VIX calibration: objective, bounded simplex search and the staged regimes."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from src.errors import (
    NumericalError,
    OutOfBoundsPriceError,
    RegimeMismatchError,
    UnpriceableInstrumentError,
    ValidationError,
)
from src.logging_config import logger
from src.market_data import (
    Quote,
    QuoteSet,
    QuoteSlice,
    build_curve,
    load_quotes,
    mid_implied_vols,
    strip_forward_variance,
)
from src.numerics import black_total, implied_vol
from src.ou_process import ConstantH, OuSpec, TimeDependentH
from src.quintic_model import (
    ALPHA_NAMES,
    ForwardVarianceCurve,
    ModelParams,
    ParametricCurve,
    SplineSquaredCurve,
    curve_from_dict,
    params_from_dict,
    params_to_dict,
)
from src.settings import default_epsilon, section
from src.spx_pricer import McConfig, price_from_records, simulate_for, smile_from_records
from src.utils import read_json_maybe_file, resolve_path
from src.vix_pricer import build_vix_polynomial, default_rule, vix_future, vix_option

REGIMES = ("parametric", "stripped", "time_dependent")

# max quoted maturity per regime, in years
_REGIME_HORIZON = {"parametric": None, "stripped": 4.0 / 12.0, "time_dependent": 1.5}
_HORIZON_SLACK = 1.0 / 365.0

_GROUPS = {
    "alpha": ALPHA_NAMES,
    "h_td": ("h0", "h_inf", "kappa"),
    "curve": ("curve_a", "curve_b", "curve_c"),
}

_REGIME_FREE = {
    "parametric": ("alpha", "rho", "h", "curve"),
    "stripped": ("alpha", "rho", "h", "curve_nodes"),
    "time_dependent": ("alpha", "rho", "h_td", "epsilon", "curve_nodes"),
}


# ----------------------------------------------------------------------
# Types
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class CalibrationWeights:
    c1: float = 1.0
    c2: float = 0.1
    c3: float = 0.5

    def __post_init__(self):
        for name in ("c1", "c2", "c3"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ValidationError(f"{name} must be a non-negative number, got {v}")
            object.__setattr__(self, name, v)
        if self.c1 == self.c2 == self.c3 == 0.0:
            raise ValidationError("calibration weights cannot all be zero")

    @classmethod
    def from_settings(cls) -> "CalibrationWeights":
        w = section("calibration")["weights"]
        return cls(c1=w["c1"], c2=w["c2"], c3=w["c3"])

    def scaled(self, k: float) -> "CalibrationWeights":
        return CalibrationWeights(self.c1 * k, self.c2 * k, self.c3 * k)


def default_bounds() -> Dict[str, Tuple[float, float]]:
    return {k: (float(v[0]), float(v[1])) for k, v in section("calibration")["bounds"].items()}


@dataclass
class CalibrationProblem:
    spx: QuoteSet
    vix: QuoteSet
    weights: CalibrationWeights = field(default_factory=CalibrationWeights.from_settings)
    mc: McConfig = field(default_factory=lambda: McConfig.from_settings(n_paths=int(section("calibration")["n_paths"])))
    regime: Optional[str] = None
    free: Optional[Tuple[str, ...]] = None
    bounds: Dict[str, Tuple[float, float]] = field(default_factory=default_bounds)
    vix_futures: Dict[float, float] = field(default_factory=dict)
    max_evaluations: int = 600
    restarts: int = 3
    report_mc: Optional[McConfig] = None
    initial_params: Optional[ModelParams] = None
    initial_curve: Optional[ForwardVarianceCurve] = None

    def __post_init__(self):
        if self.spx.underlying != "SPX" or self.vix.underlying != "VIX":
            raise ValidationError("problem needs an SPX and a VIX quote set")
        if self.regime is not None and self.regime not in REGIMES:
            raise ValidationError(f"Unsupported regime: {self.regime} (allowed: {REGIMES})")
        if self.max_evaluations < 1:
            raise ValidationError("max_evaluations must be >= 1")
        if not 0 <= self.restarts <= 3:
            raise ValidationError("restarts must be in [0, 3]")
        if not self.vix_futures:
            self.vix_futures = {T: sl.forward for T, sl in self.vix.slices.items()}
        merged = default_bounds()
        merged.update({k: (float(v[0]), float(v[1])) for k, v in self.bounds.items()})
        self.bounds = merged
        _check_bounds(self.bounds)


def _check_bounds(bounds: Dict[str, Tuple[float, float]]) -> None:
    for name, (lo, hi) in bounds.items():
        if not lo <= hi:
            raise ValidationError(f"bounds[{name}]: lower {lo} > upper {hi}")
    for name in ALPHA_NAMES:
        if name in bounds and bounds[name][0] < 0.0:
            raise ValidationError(f"bounds[{name}] must be >= 0")
    if "rho" in bounds and (bounds["rho"][0] < -1.0 or bounds["rho"][1] > 0.0):
        raise ValidationError("bounds[rho] must lie in [-1, 0]")
    for name in ("h", "h0", "h_inf"):
        if name in bounds and bounds[name][1] >= 0.5:
            raise ValidationError(f"bounds[{name}] must stay below 1/2")
    for name in ("epsilon", "kappa", "curve_a", "curve_b", "curve_c"):
        if name in bounds and bounds[name][0] <= 0.0:
            raise ValidationError(f"bounds[{name}] must be > 0")
    if "node_factor" in bounds and bounds["node_factor"][0] < 0.0:
        raise ValidationError("bounds[node_factor] must be >= 0")


@dataclass
class Residual:
    kind: str
    maturity: float
    strike: Optional[float]
    flag: str
    model: Optional[float]
    market_mid: float
    market_bid: Optional[float] = None
    market_ask: Optional[float] = None

    @property
    def error(self) -> Optional[float]:
        return None if self.model is None else self.model - self.market_mid

    @property
    def multiplier(self) -> Optional[float]:
        """|model - mid| in units of half the bid-ask spread."""
        if self.model is None or self.market_bid is None or self.market_ask is None:
            return None
        half = 0.5 * (self.market_ask - self.market_bid)
        if half <= 0.0:
            return None
        return abs(self.model - self.market_mid) / half

    def to_row(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "maturity": self.maturity,
            "strike": self.strike,
            "flag": self.flag,
            "model": self.model,
            "market_mid": self.market_mid,
            "market_bid": self.market_bid,
            "market_ask": self.market_ask,
            "error": self.error,
            "multiplier": self.multiplier,
        }


RESIDUAL_COLUMNS = ("kind", "maturity", "strike", "flag", "model", "market_mid", "market_bid", "market_ask", "error", "multiplier")


@dataclass
class ObjectiveValue:
    total: float
    rmse_spx: float
    rmse_vix: float
    rmse_fut: float
    residuals: List[Residual] = field(default_factory=list)


@dataclass
class CalibrationResult:
    params: ModelParams
    curve: ForwardVarianceCurve
    objective: float
    rmse_spx: float
    rmse_vix: float
    rmse_fut: float
    residuals: List[Residual]
    iterations: int
    evaluations: int
    initial_objective: float
    budget_exhausted: bool = False
    regime: Optional[str] = None
    free: Tuple[str, ...] = ()
    report: Optional[ObjectiveValue] = None

    def to_dict(self) -> Dict[str, Any]:
        doc = {
            "params": params_to_dict(self.params),
            "curve": self.curve.to_dict(),
            "objective": self.objective,
            "initial_objective": self.initial_objective,
            "rmse": {"spx": self.rmse_spx, "vix": self.rmse_vix, "futures": self.rmse_fut},
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "budget_exhausted": self.budget_exhausted,
            "regime": self.regime,
            "free": list(self.free),
        }
        if self.report is not None:
            doc["report"] = {
                "objective": self.report.total,
                "rmse": {"spx": self.report.rmse_spx, "vix": self.report.rmse_vix, "futures": self.report.rmse_fut},
            }
        return doc


# ----------------------------------------------------------------------
# Market targets
# ----------------------------------------------------------------------
def _quote_ivs(q: Quote, forward: float, T: float) -> Tuple[Optional[float], Optional[float]]:
    out = []
    for px in (q.bid, q.ask):
        try:
            out.append(implied_vol(px, forward, q.strike, T, q.flag))
        except OutOfBoundsPriceError:
            out.append(None)
    return out[0], out[1]


def _targets(quotes: QuoteSet, T: float) -> List[Tuple[Quote, float, Optional[float], Optional[float]]]:
    sl = quotes.slices[T]
    rows = []
    for q, mid_iv in mid_implied_vols(sl):
        bid_iv, ask_iv = _quote_ivs(q, sl.forward, T)
        rows.append((q, mid_iv, bid_iv, ask_iv))
    return rows


# ----------------------------------------------------------------------
# Objective
# ----------------------------------------------------------------------
def _root_sum(errors: Sequence[float]) -> float:
    return float(np.sqrt(np.sum(np.square(errors)))) if len(errors) else 0.0


def _spx_term(problem: CalibrationProblem, params: ModelParams, curve: ForwardVarianceCurve, mc: McConfig, out: List[Residual], bad: List[str]) -> float:
    errors = []
    for T in problem.spx.maturities():
        sl = problem.spx.slices[T]
        records = simulate_for(params, curve, T, mc)
        for q, mid_iv, bid_iv, ask_iv in _targets(problem.spx, T):
            price = price_from_records(records, params.rho, sl.forward, q.strike, q.flag, mc.control_variate)
            try:
                iv = implied_vol(price.value, sl.forward, q.strike, T, q.flag)
            except OutOfBoundsPriceError:
                bad.append(f"SPX T={T:g} K={q.strike:g} {q.flag}")
                out.append(Residual("spx", T, q.strike, q.flag, None, mid_iv, bid_iv, ask_iv))
                continue
            errors.append(iv - mid_iv)
            out.append(Residual("spx", T, q.strike, q.flag, iv, mid_iv, bid_iv, ask_iv))
    return _root_sum(errors)


def _vix_terms(problem: CalibrationProblem, params: ModelParams, curve: ForwardVarianceCurve, out: List[Residual], bad: List[str], with_options: bool, with_futures: bool) -> Tuple[float, float]:
    quad = default_rule()
    opt_err, fut_err = [], []
    for T in sorted(set(problem.vix.maturities()) | set(problem.vix_futures)):
        poly = build_vix_polynomial(params, curve, T)
        future = vix_future(poly, quad)
        if with_futures and T in problem.vix_futures:
            mkt = problem.vix_futures[T]
            fut_err.append(future - mkt)
            out.append(Residual("future", T, None, "", future, mkt))
        if not with_options or T not in problem.vix.slices:
            continue
        for q, mid_iv, bid_iv, ask_iv in _targets(problem.vix, T):
            price = vix_option(poly, quad, q.strike, q.flag)
            try:
                iv = implied_vol(price, future, q.strike, T, q.flag)
            except OutOfBoundsPriceError:
                bad.append(f"VIX T={T:g} K={q.strike:g} {q.flag}")
                out.append(Residual("vix", T, q.strike, q.flag, None, mid_iv, bid_iv, ask_iv))
                continue
            opt_err.append(iv - mid_iv)
            out.append(Residual("vix", T, q.strike, q.flag, iv, mid_iv, bid_iv, ask_iv))
    return _root_sum(opt_err), _root_sum(fut_err)


def objective(
    problem: CalibrationProblem,
    params: ModelParams,
    curve: ForwardVarianceCurve,
    mc: Optional[McConfig] = None,
) -> ObjectiveValue:
    """
    c1 sqrt(sum SPX iv errors^2) + c2 sqrt(sum VIX iv errors^2) + c3 sqrt(sum future errors^2).
    Terms with a zero weight are not priced and report 0.
    """
    w = problem.weights
    mc = mc or problem.mc
    residuals: List[Residual] = []
    bad: List[str] = []
    rmse_spx = _spx_term(problem, params, curve, mc, residuals, bad) if w.c1 > 0.0 else 0.0
    rmse_vix, rmse_fut = 0.0, 0.0
    if w.c2 > 0.0 or w.c3 > 0.0:
        rmse_vix, rmse_fut = _vix_terms(problem, params, curve, residuals, bad, w.c2 > 0.0, w.c3 > 0.0)
    if bad:
        raise UnpriceableInstrumentError(f"{len(bad)} instruments cannot be inverted", bad)
    total = w.c1 * rmse_spx + w.c2 * rmse_vix + w.c3 * rmse_fut
    return ObjectiveValue(total=total, rmse_spx=rmse_spx, rmse_vix=rmse_vix, rmse_fut=rmse_fut, residuals=residuals)


# ----------------------------------------------------------------------
# Parameter layout
# ----------------------------------------------------------------------
def expand_free(free: Sequence[str], curve: ForwardVarianceCurve) -> List[str]:
    names: List[str] = []
    for item in free:
        if item == "curve_nodes":
            if not isinstance(curve, SplineSquaredCurve):
                raise ValidationError("curve_nodes are free only on a spline curve")
            names.extend(f"node_{i}" for i in range(len(curve.values)))
        else:
            names.extend(_GROUPS.get(item, (item,)))
    seen = set()
    return [n for n in names if not (n in seen or seen.add(n))]


def _bound_of(name: str, bounds: Dict[str, Tuple[float, float]]) -> Tuple[float, float]:
    if name.startswith("node_"):
        lo, hi = section("calibration")["node_factor_bounds"]
        return bounds.get("node_factor", (float(lo), float(hi)))
    if name not in bounds:
        raise ValidationError(f"no bounds for free parameter {name}")
    return bounds[name]


def _read_value(name: str, params: ModelParams, curve: ForwardVarianceCurve) -> float:
    if name in ALPHA_NAMES:
        return params.alpha[ALPHA_NAMES.index(name)]
    if name == "rho":
        return params.rho
    if name == "epsilon":
        return params.ou.epsilon
    if name.startswith("node_"):
        return 1.0
    if name.startswith("curve_"):
        if not isinstance(curve, ParametricCurve):
            raise ValidationError(f"{name} is free only on a parametric curve")
        return getattr(curve, name[len("curve_"):])
    mode = params.ou.h_mode
    if name == "h" and isinstance(mode, ConstantH):
        return mode.h
    if name in ("h0", "h_inf", "kappa") and isinstance(mode, TimeDependentH):
        return getattr(mode, name)
    raise ValidationError(f"parameter {name} does not apply to the current model")


def _assemble(values: Dict[str, float], params: ModelParams, curve: ForwardVarianceCurve) -> Tuple[ModelParams, ForwardVarianceCurve]:
    alpha = tuple(values.get(n, a) for n, a in zip(ALPHA_NAMES, params.alpha))
    mode = params.ou.h_mode
    if isinstance(mode, ConstantH):
        mode = ConstantH(values.get("h", mode.h))
    else:
        mode = TimeDependentH(values.get("h0", mode.h0), values.get("h_inf", mode.h_inf), values.get("kappa", mode.kappa))
    ou = OuSpec(epsilon=values.get("epsilon", params.ou.epsilon), h_mode=mode)
    new_params = ModelParams(alpha=alpha, rho=values.get("rho", params.rho), ou=ou)

    if isinstance(curve, ParametricCurve) and any(k.startswith("curve_") for k in values):
        curve = ParametricCurve(
            a=values.get("curve_a", curve.a),
            b=values.get("curve_b", curve.b),
            c=values.get("curve_c", curve.c),
        )
    elif isinstance(curve, SplineSquaredCurve) and any(k.startswith("node_") for k in values):
        curve = curve.with_factors([values.get(f"node_{i}", 1.0) for i in range(len(curve.values))])
    return new_params, curve


# ----------------------------------------------------------------------
# Search
# ----------------------------------------------------------------------
def _simplex(z0: np.ndarray, step: float) -> np.ndarray:
    pts = [z0]
    for i in range(len(z0)):
        z = z0.copy()
        z[i] = z[i] + step if z[i] + step <= 1.0 else z[i] - step
        pts.append(z)
    return np.array(pts)


def calibrate(
    problem: CalibrationProblem,
    params: ModelParams,
    curve: ForwardVarianceCurve,
    free: Optional[Sequence[str]] = None,
) -> CalibrationResult:
    """
    Bounded Nelder-Mead in the unit cube of the free parameters, with up to
    problem.restarts restarts from the incumbent on a shrunk simplex. The MC
    seed is fixed, so every evaluation uses the same random numbers.
    """
    names = expand_free(free if free is not None else (problem.free or ()), curve)
    lo = np.array([_bound_of(n, problem.bounds)[0] for n in names])
    hi = np.array([_bound_of(n, problem.bounds)[1] for n in names])
    x0 = np.array([_read_value(n, params, curve) for n in names])
    if np.any(x0 < lo) or np.any(x0 > hi):
        bad = [n for n, v, a, b in zip(names, x0, lo, hi) if not a <= v <= b]
        raise ValidationError(f"initial point violates bounds: {bad}")
    width = np.where(hi > lo, hi - lo, 1.0)
    penalty = float(section("calibration")["penalty"])

    state = {"evals": 0, "best_z": None, "best": np.inf}
    cache: Dict[bytes, float] = {}

    def to_point(z: np.ndarray):
        x = lo + np.clip(z, 0.0, 1.0) * (hi - lo)
        assert np.all(x >= lo) and np.all(x <= hi), "iterate left the parameter box"
        return _assemble(dict(zip(names, (float(v) for v in x))), params, curve)

    def f(z: np.ndarray) -> float:
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        key = z.tobytes()
        if key in cache:
            return cache[key]
        state["evals"] += 1
        try:
            value = objective(problem, *to_point(z)).total
        except (NumericalError, ValidationError) as e:
            logger.debug("[CALIB] penalty at %s: %s", np.array2string(z, precision=4), e)
            value = penalty
        cache[key] = value
        if value < state["best"]:
            state["best"], state["best_z"] = value, z.copy()
        return value

    z0 = (x0 - lo) / width
    initial = f(z0)
    logger.info("[CALIB] free=%s initial objective=%.6g", names, initial)

    iterations = 0
    if names:
        step = 0.05
        for attempt in range(problem.restarts + 1):
            remaining = problem.max_evaluations - state["evals"]
            if remaining <= 0:
                break
            before = state["best"]
            start = state["best_z"]
            res = minimize(
                f,
                start,
                method="Nelder-Mead",
                bounds=[(0.0, 1.0)] * len(names),
                options={"initial_simplex": _simplex(start, step), "maxfev": remaining, "xatol": 1e-6, "fatol": 1e-10},
            )
            iterations += int(res.nit)
            logger.info("[CALIB] pass %d best=%.6g evals=%d", attempt, state["best"], state["evals"])
            if attempt > 0 and before - state["best"] <= 1e-10 * max(1.0, abs(before)):
                break
            step *= 0.5

    exhausted = bool(names) and state["evals"] >= problem.max_evaluations
    if exhausted:
        logger.warning("[CALIB] evaluation budget %d exhausted, returning best so far", problem.max_evaluations)

    best_params, best_curve = to_point(state["best_z"]) if names else (params, curve)
    final = objective(problem, best_params, best_curve)
    report = objective(problem, best_params, best_curve, problem.report_mc) if problem.report_mc else None
    residuals = (report or final).residuals
    logger.info("[CALIB] done objective=%.6g (initial %.6g) evals=%d", final.total, initial, state["evals"])
    return CalibrationResult(
        params=best_params,
        curve=best_curve,
        objective=final.total,
        rmse_spx=final.rmse_spx,
        rmse_vix=final.rmse_vix,
        rmse_fut=final.rmse_fut,
        residuals=residuals,
        iterations=iterations,
        evaluations=state["evals"],
        initial_objective=initial,
        budget_exhausted=exhausted,
        regime=problem.regime,
        free=tuple(names),
        report=report,
    )


# ----------------------------------------------------------------------
# Regimes
# ----------------------------------------------------------------------
def _check_regime(problem: CalibrationProblem) -> None:
    regime = problem.regime
    spx_T = problem.spx.maturities()
    vix_T = sorted(set(problem.vix.maturities()) | set(problem.vix_futures))
    if not spx_T and not vix_T:
        raise RegimeMismatchError("no quotes to calibrate to")
    if regime == "parametric":
        if len(spx_T) > 2 or len(vix_T) > 1:
            raise RegimeMismatchError(f"parametric regime takes <= 2 SPX and 1 VIX maturities, got {len(spx_T)} and {len(vix_T)}")
        return
    if len(spx_T) < 2:
        raise RegimeMismatchError(f"{regime} regime strips the curve from >= 2 SPX maturities")
    horizon = _REGIME_HORIZON[regime]
    longest = max(spx_T + vix_T)
    if longest > horizon + _HORIZON_SLACK:
        raise RegimeMismatchError(f"{regime} regime covers maturities up to {horizon:.4f}y, got {longest:.4f}y")


def _atm_variance(problem: CalibrationProblem) -> float:
    if not problem.spx.slices:
        return 0.04
    T = problem.spx.maturities()[0]
    sl = problem.spx.slices[T]
    pts = mid_implied_vols(sl)
    if not pts:
        return 0.04
    q, iv = min(pts, key=lambda p: abs(np.log(p[0].strike / sl.forward)))
    return float(iv * iv)


def default_initial_params(time_dependent: bool = False) -> ModelParams:
    mode = TimeDependentH(h0=0.0, h_inf=-0.1, kappa=1.0) if time_dependent else ConstantH(-0.1)
    return ModelParams(alpha=(0.8, 0.3, 0.2, 0.01), rho=-0.7, ou=OuSpec(epsilon=default_epsilon(), h_mode=mode))


def _initial_point(problem: CalibrationProblem) -> Tuple[ModelParams, ForwardVarianceCurve]:
    regime = problem.regime
    params = problem.initial_params or default_initial_params(regime == "time_dependent")
    if regime == "time_dependent" and isinstance(params.ou.h_mode, ConstantH):
        h = params.ou.h_mode.h
        params = replace(params, ou=OuSpec(params.ou.epsilon, TimeDependentH(h, h, 1.0)))
    if regime != "time_dependent" and isinstance(params.ou.h_mode, TimeDependentH):
        raise RegimeMismatchError(f"{regime} regime uses a constant H")

    curve = problem.initial_curve
    if regime == "parametric":
        if not isinstance(curve, ParametricCurve):
            v = _atm_variance(problem)
            curve = ParametricCurve(a=v, b=1.0, c=v)
    elif not isinstance(curve, SplineSquaredCurve):
        logger.info("[STEP 1] strip forward variance for the %s regime", regime)
        curve = build_curve(strip_forward_variance(problem.spx), "spline")
    return params, curve


def staged_calibrate(problem: CalibrationProblem) -> CalibrationResult:
    if problem.regime not in REGIMES:
        raise ValidationError(f"staged calibration needs a regime in {REGIMES}")
    _check_regime(problem)
    params, curve = _initial_point(problem)
    free = problem.free if problem.free is not None else _REGIME_FREE[problem.regime]
    logger.info("[STEP 2] calibrate regime=%s free=%s", problem.regime, list(free))
    return calibrate(problem, params, curve, free)


def h_curve(params: ModelParams, horizon: float, n: int = 101) -> List[Dict[str, float]]:
    """H(t) sampled on [0, horizon]."""
    t = np.linspace(0.0, horizon, n)
    return [{"t": float(a), "h": float(b)} for a, b in zip(t, np.asarray(params.ou.hurst(t)))]


# ----------------------------------------------------------------------
# Problem documents
# ----------------------------------------------------------------------
def problem_from_dict(doc: Dict[str, Any], base_dir: Optional[Path] = None, seed: Optional[int] = None, threads: Optional[int] = None) -> CalibrationProblem:
    """
    {
      "quotes": "quotes.csv",          # SPX and VIX rows in one file
      "regime": "parametric" | "stripped" | "time_dependent",
      "free": [...], "bounds": {...}, "weights": {...},
      "max_evaluations": 600, "restarts": 3,
      "mc": {"n_paths": ..., "steps_per_year": ..., "seed": ...},
      "report_paths": 524288,
      "vix_futures": {"0.0822": 20.1},
      "initial": {"params": {...} | "@file", "curve": {...} | "@file"}
    }
    """
    calib = section("calibration")
    if "quotes" not in doc:
        raise ValidationError("problem needs a quotes path")
    path = resolve_path(str(doc["quotes"]), base_dir=base_dir)
    spx = load_quotes(path, "SPX")
    vix = load_quotes(path, "VIX")

    mc_doc = dict(doc.get("mc") or {})
    mc_doc.setdefault("n_paths", int(calib["n_paths"]))
    if seed is not None:
        mc_doc["seed"] = seed
    if threads is not None:
        mc_doc["threads"] = threads
    mc = McConfig.from_settings(**mc_doc)
    report_paths = doc.get("report_paths", calib.get("report_paths"))
    report_mc = replace(mc, n_paths=int(report_paths)) if report_paths else None

    initial = doc.get("initial") or {}
    params = params_from_dict(read_json_maybe_file(initial["params"], base_dir)) if initial.get("params") else None
    curve = curve_from_dict(read_json_maybe_file(initial["curve"], base_dir)) if initial.get("curve") else None

    weights = CalibrationWeights(**doc["weights"]) if doc.get("weights") else CalibrationWeights.from_settings()
    free = doc.get("free")
    return CalibrationProblem(
        spx=spx,
        vix=vix,
        weights=weights,
        mc=mc,
        regime=doc.get("regime"),
        free=tuple(free) if free is not None else None,
        bounds={k: tuple(v) for k, v in (doc.get("bounds") or {}).items()},
        vix_futures={float(k): float(v) for k, v in (doc.get("vix_futures") or {}).items()},
        max_evaluations=int(doc.get("max_evaluations", calib["max_evaluations"])),
        restarts=int(doc.get("restarts", calib["restarts"])),
        report_mc=report_mc,
        initial_params=params,
        initial_curve=curve,
    )


# ----------------------------------------------------------------------
# Synthetic markets
# ----------------------------------------------------------------------
def _quote_from_vol(forward: float, strike: float, T: float, iv: float, flag: str, half_spread: float) -> Quote:
    price = float(black_total(forward, strike, iv * np.sqrt(T), flag))
    if half_spread <= 0.0:
        return Quote(strike=strike, bid=price, ask=price, flag=flag)
    bid = float(black_total(forward, strike, max(iv - half_spread, 0.0) * np.sqrt(T), flag))
    ask = float(black_total(forward, strike, (iv + half_spread) * np.sqrt(T), flag))
    return Quote(strike=strike, bid=bid, ask=ask, flag=flag)


def synthetic_market(
    params: ModelParams,
    curve: ForwardVarianceCurve,
    spx_strikes: Dict[float, Sequence[float]],
    vix_strikes: Dict[float, Sequence[float]],
    mc: McConfig,
    half_spread: float = 0.0,
) -> Tuple[QuoteSet, QuoteSet]:
    """
    Quotes generated by the model itself: OTM flags, bid/ask at model iv -/+
    half_spread (vol units). With half_spread = 0, bid = ask = model price.
    """
    spx = QuoteSet("SPX")
    for T, strikes in sorted(spx_strikes.items()):
        records = simulate_for(params, curve, T, mc)
        sl = spx.slices[T] = QuoteSlice(maturity=T, forward=mc.spot)
        for pt in smile_from_records(records, params.rho, mc.spot, strikes, mc.control_variate):
            if pt.implied_vol is None:
                continue
            sl.quotes.append(_quote_from_vol(mc.spot, pt.strike, T, pt.implied_vol, pt.flag, half_spread))

    vix = QuoteSet("VIX")
    quad = default_rule()
    for T, strikes in sorted(vix_strikes.items()):
        poly = build_vix_polynomial(params, curve, T)
        future = vix_future(poly, quad)
        sl = vix.slices[T] = QuoteSlice(maturity=T, forward=future)
        for k in strikes:
            flag = "call" if k >= future else "put"
            try:
                iv = implied_vol(vix_option(poly, quad, k, flag), future, k, T, flag)
            except OutOfBoundsPriceError:
                continue
            sl.quotes.append(_quote_from_vol(future, float(k), T, iv, flag, half_spread))
    return spx, vix
