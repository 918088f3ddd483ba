"""Quote ingestion, SVI slice smoothing, log-contract stripping and xi0 construction."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.optimize import least_squares

from src.errors import (
    ArbitrageError,
    FitFailureError,
    InsufficientQuotesError,
    OutOfBoundsPriceError,
    QuoteError,
    ValidationError,
)
from src.logging_config import logger
from src.numerics import black_total, implied_vol
from src.quintic_model import ForwardVarianceCurve, PiecewiseConstantCurve, SplineSquaredCurve
from src.schema import normalize_flag, normalize_underlying, validate_positive
from src.settings import section
from src.utils import atomic_write_text, csv_text

QUOTE_COLUMNS = ("underlying", "maturity", "forward", "strike", "flag", "bid", "ask")
MIN_SLICE_QUOTES = 5


# ----------------------------------------------------------------------
# Quotes
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Quote:
    strike: float
    bid: float
    ask: float
    flag: str

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)


@dataclass
class QuoteSlice:
    maturity: float
    forward: float
    quotes: List[Quote] = field(default_factory=list)

    def sorted_quotes(self) -> List[Quote]:
        return sorted(self.quotes, key=lambda q: q.strike)


@dataclass
class RejectedRow:
    line: int
    reason: str
    raw: Dict[str, Any]


@dataclass
class QuoteSet:
    underlying: str
    slices: Dict[float, QuoteSlice] = field(default_factory=dict)
    rejected: List[RejectedRow] = field(default_factory=list)

    def maturities(self) -> List[float]:
        return sorted(self.slices)

    def __len__(self) -> int:
        return sum(len(s.quotes) for s in self.slices.values())


def _parse_row(row: Dict[str, str]) -> Tuple[str, float, float, Quote]:
    underlying = normalize_underlying(row["underlying"])
    maturity = validate_positive("maturity", row["maturity"])
    forward = validate_positive("forward", row["forward"])
    strike = validate_positive("strike", row["strike"])
    flag = normalize_flag(row["flag"])
    bid = float(row["bid"])
    ask = float(row["ask"])
    if not (np.isfinite(bid) and np.isfinite(ask)):
        raise ValidationError("bid/ask must be finite")
    if bid < 0.0:
        raise ValidationError(f"negative bid {bid}")
    if bid > ask:
        raise ValidationError(f"bid {bid} > ask {ask}")
    return underlying, maturity, forward, Quote(strike=strike, bid=bid, ask=ask, flag=flag)


def load_quotes(path: str | Path, underlying: str = "SPX") -> QuoteSet:
    """
    CSV(header: underlying,maturity,forward,strike,flag,bid,ask)를 읽는다.
    - '#'로 시작하는 앞부분 메타데이터 줄은 건너뛴다.
    - 다른 underlying 행은 무시, 잘못된 행은 rejected 목록에 line 번호와 함께 남긴다.
    """
    underlying = normalize_underlying(underlying)
    out = QuoteSet(underlying=underlying)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise QuoteError(f"cannot read {path}: {e}")

    lines = text.splitlines()
    offset = 0
    while offset < len(lines) and (not lines[offset].strip() or lines[offset].lstrip().startswith("#")):
        offset += 1
    if offset == len(lines):
        return out

    try:
        frame = pd.read_csv(io.StringIO("\n".join(lines[offset:])), dtype=str, keep_default_na=False, skip_blank_lines=False)
    except Exception as e:
        raise QuoteError(f"CSV parse failed: {e}", line=offset + 1)
    frame.columns = [c.strip().lower() for c in frame.columns]
    missing = [c for c in QUOTE_COLUMNS if c not in frame.columns]
    if missing:
        raise QuoteError(f"missing columns {missing}", line=offset + 1)

    for idx, rec in enumerate(frame.to_dict(orient="records")):
        line = offset + idx + 2
        if not any(str(v).strip() for v in rec.values()):
            continue
        try:
            und, maturity, forward, q = _parse_row({k: str(rec[k]).strip() for k in QUOTE_COLUMNS})
        except (ValidationError, ValueError) as e:
            out.rejected.append(RejectedRow(line=line, reason=str(e), raw=rec))
            continue
        if und != underlying:
            continue
        sl = out.slices.get(maturity)
        if sl is None:
            sl = out.slices[maturity] = QuoteSlice(maturity=maturity, forward=forward)
        if abs(sl.forward - forward) > 1e-9 * sl.forward:
            out.rejected.append(RejectedRow(line, f"forward {forward} differs from slice forward {sl.forward}", rec))
            continue
        if any(abs(x.strike - q.strike) <= 1e-12 * q.strike for x in sl.quotes):
            out.rejected.append(RejectedRow(line, f"duplicate strike {q.strike} at T={maturity}", rec))
            continue
        sl.quotes.append(q)

    for r in out.rejected:
        logger.warning("[QUOTES] line %d rejected: %s", r.line, r.reason)
    logger.info("[QUOTES] %s slices=%d quotes=%d rejected=%d", underlying, len(out.slices), len(out), len(out.rejected))
    return out


def quote_rows(quotes: QuoteSet) -> List[Dict[str, Any]]:
    rows = []
    for T in quotes.maturities():
        sl = quotes.slices[T]
        for q in sl.sorted_quotes():
            rows.append({
                "underlying": quotes.underlying,
                "maturity": T,
                "forward": sl.forward,
                "strike": q.strike,
                "flag": q.flag,
                "bid": q.bid,
                "ask": q.ask,
            })
    return rows


def save_quotes(quotes: QuoteSet, path: str | Path, header_comment: Optional[str] = None) -> None:
    atomic_write_text(Path(path), csv_text(quote_rows(quotes), QUOTE_COLUMNS, header_comment))


# ----------------------------------------------------------------------
# SVI slice
# ----------------------------------------------------------------------
def svi_total_variance(k, a: float, b: float, rho: float, m: float, s: float):
    k = np.asarray(k, dtype=float)
    return a + b * (rho * (k - m) + np.sqrt((k - m) ** 2 + s * s))


@dataclass(frozen=True)
class SviSlice:
    a: float
    b: float
    rho: float
    m: float
    s: float
    maturity: float
    forward: float
    rmse: float = 0.0

    def total_variance(self, k):
        return np.maximum(svi_total_variance(k, self.a, self.b, self.rho, self.m, self.s), 0.0)

    def implied_vol(self, strike):
        k = np.log(np.asarray(strike, dtype=float) / self.forward)
        return np.sqrt(self.total_variance(k) / self.maturity)

    def price(self, strike, flag: str = "call"):
        k = np.log(np.asarray(strike, dtype=float) / self.forward)
        return black_total(self.forward, strike, np.sqrt(self.total_variance(k)), flag)

    def to_dict(self) -> Dict[str, float]:
        return {
            "a": self.a, "b": self.b, "rho": self.rho, "m": self.m, "s": self.s,
            "maturity": self.maturity, "forward": self.forward, "rmse": self.rmse,
        }


def mid_implied_vols(sl: QuoteSlice) -> List[Tuple[Quote, float]]:
    out = []
    for q in sl.sorted_quotes():
        try:
            out.append((q, implied_vol(q.mid, sl.forward, q.strike, sl.maturity, q.flag)))
        except OutOfBoundsPriceError as e:
            logger.warning("[SVI] T=%.4f K=%.4f mid not invertible: %s", sl.maturity, q.strike, e)
    return out


def fit_slice(sl: QuoteSlice, forward: Optional[float] = None, max_rmse: Optional[float] = None) -> SviSlice:
    """Least-squares SVI fit to mid total implied variances of one maturity."""
    forward = float(forward or sl.forward)
    max_rmse = float(max_rmse if max_rmse is not None else section("market_data")["svi_max_rmse"])
    if len(sl.quotes) < MIN_SLICE_QUOTES:
        raise InsufficientQuotesError(f"T={sl.maturity}: {len(sl.quotes)} quotes, need {MIN_SLICE_QUOTES}")
    pts = mid_implied_vols(QuoteSlice(sl.maturity, forward, sl.quotes))
    if len(pts) < MIN_SLICE_QUOTES:
        raise InsufficientQuotesError(f"T={sl.maturity}: only {len(pts)} invertible quotes")

    k = np.log(np.array([q.strike for q, _ in pts]) / forward)
    w = np.array([iv for _, iv in pts]) ** 2 * sl.maturity

    def residual(p):
        return svi_total_variance(k, *p) - w

    lower = [0.0, 0.0, -0.999, k.min() - 1.0, 1e-6]
    upper = [max(4.0 * w.max(), 1e-8), 10.0, 0.999, k.max() + 1.0, 5.0]
    starts = [
        [w.mean(), 0.0, 0.0, 0.0, 0.1],
        [0.5 * w.min(), 0.1, -0.5, 0.0, 0.1],
        [0.9 * w.min(), 0.5 * (w.max() - w.min()) / max(np.ptp(k), 1e-6), 0.0, float(k[np.argmin(w)]), 0.05],
    ]
    best = None
    for x0 in starts:
        x0 = np.clip(x0, lower, upper)
        res = least_squares(residual, x0, bounds=(lower, upper), method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
        if best is None or res.cost < best.cost:
            best = res

    rmse = float(np.sqrt(np.mean(best.fun**2)))
    a, b, rho, m, s = (float(v) for v in best.x)
    fitted = SviSlice(a=a, b=b, rho=rho, m=m, s=s, maturity=sl.maturity, forward=forward, rmse=rmse)
    logger.info("[SVI] T=%.4f quotes=%d rmse=%.3e", sl.maturity, len(pts), rmse)
    if rmse > max_rmse:
        raise FitFailureError(f"T={sl.maturity}: SVI rmse {rmse:.3e} above {max_rmse:.3e}")
    return fitted


# ----------------------------------------------------------------------
# Log-contract stripping
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class StrippedInterval:
    t_lo: float
    t_hi: float
    integral: float

    @property
    def average(self) -> float:
        return self.integral / (self.t_hi - self.t_lo)


@dataclass
class StrippedVariance:
    intervals: List[StrippedInterval]
    fits: Dict[float, SviSlice] = field(default_factory=dict)

    def __post_init__(self):
        for prev, cur in zip(self.intervals[:-1], self.intervals[1:]):
            if abs(prev.t_hi - cur.t_lo) > 1e-12 or cur.t_hi <= cur.t_lo:
                raise ValidationError("stripped intervals must be contiguous and increasing")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "intervals": [{"t_lo": i.t_lo, "t_hi": i.t_hi, "integral": i.integral} for i in self.intervals],
            "fits": {f"{T:.10g}": f.to_dict() for T, f in sorted(self.fits.items())},
        }


def log_contract_value(fit: SviSlice, n_std: Optional[float] = None, rel_tol: Optional[float] = None) -> float:
    """
    2 (int_0^F P/K^2 dK + int_F^inf C/K^2 dK), i.e. E[-2 log(S_T/F)], on the
    fitted slice with strikes truncated at F exp(+-n_std sqrt(w(0))).
    """
    cfg = section("market_data")
    n_std = float(n_std or cfg["truncation_stdevs"])
    rel_tol = float(rel_tol or cfg["strip_rel_tol"])
    F = fit.forward
    width = n_std * float(np.sqrt(max(fit.total_variance(0.0), 1e-16)))

    # K = F e^k, dK / K^2 = e^{-k} dk / F
    def put_leg(k):
        return float(fit.price(F * np.exp(k), "put")) * np.exp(-k) / F

    def call_leg(k):
        return float(fit.price(F * np.exp(k), "call")) * np.exp(-k) / F

    puts, _ = quad(put_leg, -width, 0.0, epsabs=1e-14, epsrel=rel_tol, limit=400)
    calls, _ = quad(call_leg, 0.0, width, epsabs=1e-14, epsrel=rel_tol, limit=400)
    return 2.0 * (puts + calls)


def strip_forward_variance(spx: QuoteSet, fits: Optional[Dict[float, SviSlice]] = None) -> StrippedVariance:
    maturities = spx.maturities()
    if len(maturities) < 2:
        raise InsufficientQuotesError(f"stripping needs >= 2 SPX maturities, got {len(maturities)}")
    fits = dict(fits or {})
    for T in maturities:
        if T not in fits:
            fits[T] = fit_slice(spx.slices[T])

    values = [log_contract_value(fits[T]) for T in maturities]
    tol = 1e-10 * max(1.0, max(abs(v) for v in values))
    intervals: List[StrippedInterval] = []
    prev_t, prev_v = 0.0, 0.0
    for T, v in zip(maturities, values):
        integral = v - prev_v
        if integral < -tol:
            raise ArbitrageError(f"negative forward variance {integral:.3e} on [{prev_t}, {T}]")
        intervals.append(StrippedInterval(t_lo=prev_t, t_hi=T, integral=max(integral, 0.0)))
        logger.info("[STRIP] [%.4f, %.4f] integral=%.6e avg=%.6f", prev_t, T, integral, intervals[-1].average)
        prev_t, prev_v = T, v
    return StrippedVariance(intervals=intervals, fits=fits)


def build_curve(stripped: StrippedVariance, style: str = "spline") -> ForwardVarianceCurve:
    if not stripped.intervals:
        raise ValidationError("no stripped intervals")
    style = (style or "").strip().lower()
    if style == "piecewise":
        edges = [stripped.intervals[0].t_lo] + [i.t_hi for i in stripped.intervals]
        return PiecewiseConstantCurve(times=tuple(edges), values=tuple(i.average for i in stripped.intervals))
    if style == "spline":
        return SplineSquaredCurve(
            times=tuple(0.5 * (i.t_lo + i.t_hi) for i in stripped.intervals),
            values=tuple(float(np.sqrt(i.average)) for i in stripped.intervals),
        )
    raise ValidationError(f"Unsupported curve style: {style}")
