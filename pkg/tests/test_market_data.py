import random

import numpy as np
import pytest

from src.calibrator import synthetic_market
from src.errors import ArbitrageError, FitFailureError, InsufficientQuotesError, QuoteError
from src.market_data import (
    Quote,
    QuoteSet,
    QuoteSlice,
    build_curve,
    fit_slice,
    load_quotes,
    log_contract_value,
    save_quotes,
    strip_forward_variance,
    svi_total_variance,
)
from src.numerics import black_total
from src.quintic_model import ParametricCurve, PiecewiseConstantCurve, SplineSquaredCurve
from src.spx_pricer import McConfig

F = 100.0


def bs_slice(T, vol, strikes=(80.0, 90.0, 95.0, 100.0, 105.0, 110.0, 120.0)):
    quotes = []
    for k in strikes:
        flag = "call" if k >= F else "put"
        price = black_total(F, k, vol * np.sqrt(T), flag)
        quotes.append(Quote(strike=k, bid=price, ask=price, flag=flag))
    return QuoteSlice(maturity=T, forward=F, quotes=quotes)


def bs_surface(maturities, vol=0.2):
    qs = QuoteSet("SPX")
    for T in maturities:
        qs.slices[T] = bs_slice(T, vol)
    return qs


QUOTE_CSV = """# quintic-ou version=0.1.0 seed=none params_hash=abc
underlying,maturity,forward,strike,flag,bid,ask
SPX,0.25,100,100,call,3.9,4.1
SPX,0.25,100,105,call,2.5,2.4
VIX,0.25,18,20,call,1.0,1.1
SPX,0.25,100,95,straddle,1.0,1.2
SPX,0.25,100,100,call,3.8,4.2
SPX,0.25,100,90,p,1.1,1.3
"""


def test_load_quotes_reports_bad_rows(tmp_path):
    path = tmp_path / "quotes.csv"
    path.write_text(QUOTE_CSV, encoding="utf-8")
    spx = load_quotes(path, "SPX")
    assert spx.maturities() == [0.25]
    assert [q.strike for q in spx.slices[0.25].sorted_quotes()] == [90.0, 100.0]
    assert spx.slices[0.25].sorted_quotes()[0].flag == "put"
    assert [r.line for r in spx.rejected] == [4, 6, 7]
    assert "bid" in spx.rejected[0].reason
    vix = load_quotes(path, "vix")
    assert len(vix) == 1 and vix.slices[0.25].forward == 18.0


def test_load_quotes_structural_errors(tmp_path):
    missing = tmp_path / "missing.csv"
    missing.write_text("underlying,maturity,strike,flag,bid,ask\nSPX,0.25,100,call,1,2\n", encoding="utf-8")
    with pytest.raises(QuoteError):
        load_quotes(missing, "SPX")
    empty = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    assert len(load_quotes(empty, "SPX")) == 0
    with pytest.raises(QuoteError):
        load_quotes(tmp_path / "nope.csv", "SPX")


def test_save_then_load_preserves_quotes(tmp_path):
    qs = bs_surface([1.0 / 12.0, 0.25])
    path = tmp_path / "out" / "quotes.csv"
    save_quotes(qs, path, header_comment="# test")
    back = load_quotes(path, "SPX")
    assert back.maturities() == pytest.approx(qs.maturities(), rel=1e-11)
    for T, T_back in zip(qs.maturities(), back.maturities()):
        for a, b in zip(qs.slices[T].sorted_quotes(), back.slices[T_back].sorted_quotes()):
            assert a.strike == b.strike and a.flag == b.flag
            assert a.mid == pytest.approx(b.mid, rel=1e-11)


def test_fit_flat_slice():
    fit = fit_slice(bs_slice(0.25, 0.2))
    k = np.log(np.array([80.0, 100.0, 120.0]) / F)
    np.testing.assert_allclose(fit.total_variance(k), 0.04 * 0.25, rtol=1e-8)
    assert fit.rmse < 1e-9


def test_fit_recovers_svi_smile_and_ignores_order():
    T, params = 0.25, (0.01, 0.1, -0.5, 0.0, 0.1)
    strikes = np.arange(70.0, 131.0, 5.0)
    quotes = []
    for k in strikes:
        w = float(svi_total_variance(np.log(k / F), *params))
        flag = "call" if k >= F else "put"
        price = black_total(F, k, np.sqrt(w), flag)
        quotes.append(Quote(strike=float(k), bid=price, ask=price, flag=flag))
    fit = fit_slice(QuoteSlice(T, F, quotes))
    assert fit.rmse < 1e-6
    np.testing.assert_allclose(fit.total_variance(np.log(strikes / F)), svi_total_variance(np.log(strikes / F), *params), atol=1e-6)

    shuffled = list(quotes)
    random.Random(3).shuffle(shuffled)
    assert fit_slice(QuoteSlice(T, F, shuffled)) == fit


def test_fit_failures():
    with pytest.raises(InsufficientQuotesError):
        fit_slice(bs_slice(0.25, 0.2, strikes=(90.0, 95.0, 100.0, 105.0)))
    quotes = []
    for i, k in enumerate((80.0, 90.0, 95.0, 100.0, 105.0, 110.0, 120.0)):
        vol = 0.2 if i % 2 else 0.35
        flag = "call" if k >= F else "put"
        price = black_total(F, k, vol * np.sqrt(0.25), flag)
        quotes.append(Quote(strike=k, bid=price, ask=price, flag=flag))
    with pytest.raises(FitFailureError):
        fit_slice(QuoteSlice(0.25, F, quotes), max_rmse=1e-8)


def test_log_contract_equals_total_variance():
    fit = fit_slice(bs_slice(0.5, 0.25))
    assert log_contract_value(fit) == pytest.approx(0.25**2 * 0.5, rel=1e-7)


def test_strip_black_scholes_surface():
    maturities = [1.0 / 12.0, 2.0 / 12.0, 3.0 / 12.0]
    stripped = strip_forward_variance(bs_surface(maturities))
    edges = [0.0] + maturities
    assert len(stripped.intervals) == 3
    for interval, lo, hi in zip(stripped.intervals, edges[:-1], edges[1:]):
        assert interval.t_lo == pytest.approx(lo) and interval.t_hi == pytest.approx(hi)
        assert interval.integral == pytest.approx(0.04 * (hi - lo), rel=1e-6)
        assert interval.average == pytest.approx(0.04, rel=1e-6)

    spline = build_curve(stripped, "spline")
    piecewise = build_curve(stripped, "piecewise")
    assert isinstance(spline, SplineSquaredCurve) and isinstance(piecewise, PiecewiseConstantCurve)
    assert spline.evaluate(0.1) == pytest.approx(0.04, rel=1e-6)
    assert piecewise.integral(0.0, 0.25) == pytest.approx(0.01, rel=1e-6)


def test_strip_rejects_decreasing_total_variance():
    qs = QuoteSet("SPX")
    qs.slices[1.0 / 12.0] = bs_slice(1.0 / 12.0, 0.3)
    qs.slices[2.0 / 12.0] = bs_slice(2.0 / 12.0, 0.2)
    with pytest.raises(ArbitrageError):
        strip_forward_variance(qs)


def test_strip_needs_two_maturities():
    with pytest.raises(InsufficientQuotesError):
        strip_forward_variance(bs_surface([0.25]))


def test_fitted_call_prices_are_convex_in_strike():
    T, params = 0.25, (0.01, 0.1, -0.5, 0.0, 0.1)
    quotes = []
    for k in np.arange(70.0, 131.0, 5.0):
        w = float(svi_total_variance(np.log(k / F), *params))
        flag = "call" if k >= F else "put"
        price = black_total(F, k, np.sqrt(w), flag)
        quotes.append(Quote(strike=float(k), bid=price, ask=price, flag=flag))
    fit = fit_slice(QuoteSlice(T, F, quotes))
    grid = np.linspace(60.0, 140.0, 200)
    calls = np.asarray(fit.price(grid, "call"))
    assert np.all(np.diff(calls, 2) >= -1e-8)
    assert np.all(np.diff(calls) <= 0.0)


def test_spline_curve_reintegrates_smooth_term_structure():
    # xi0(t) = 0.03 + 0.02 t
    maturities = [m / 12.0 for m in range(1, 7)]
    qs = QuoteSet("SPX")
    for T in maturities:
        w = 0.03 * T + 0.01 * T**2
        qs.slices[T] = bs_slice(T, np.sqrt(w / T))
    stripped = strip_forward_variance(qs)
    curve = build_curve(stripped, "spline")
    for interval in stripped.intervals:
        assert interval.average == pytest.approx(0.03 + 0.01 * (interval.t_lo + interval.t_hi), rel=1e-6)
        assert curve.integral(interval.t_lo, interval.t_hi) == pytest.approx(interval.integral, rel=0.02)


@pytest.mark.slow
def test_strip_recovers_model_forward_variance(oct2017_params):
    curve = ParametricCurve(a=0.0084, b=2.0436, c=0.0441)
    mc = McConfig(n_paths=65536, steps_per_year=312, seed=11, block_size=16384)
    strikes = {0.05: list(np.arange(91.0, 109.1, 1.0)), 0.1: list(np.arange(86.0, 114.1, 2.0))}
    spx, _ = synthetic_market(oct2017_params, curve, strikes, {}, mc)
    stripped = strip_forward_variance(spx)
    total = 0.0
    for interval in stripped.intervals:
        total += interval.integral
        assert total == pytest.approx(curve.integral(0.0, interval.t_hi), rel=0.05)
