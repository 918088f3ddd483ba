import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.calibrator import synthetic_market
from src.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from src.market_data import Quote, QuoteSet, QuoteSlice, save_quotes
from src.numerics import black_total
from src.quintic_model import curve_from_dict
from src.spx_pricer import McConfig

ASSETS = Path(__file__).resolve().parent / "assets"


def model_args():
    return ["--params", str(ASSETS / "params_flat.json"), "--curve", str(ASSETS / "curve_flat.json")]


def write_bs_quotes(path, vols):
    """SPX quotes from a flat Black surface, one vol per maturity."""
    spx = QuoteSet("SPX")
    for T, vol in vols.items():
        quotes = []
        for k in (80.0, 90.0, 95.0, 100.0, 105.0, 110.0, 120.0):
            flag = "call" if k >= 100.0 else "put"
            price = float(black_total(100.0, k, vol * np.sqrt(T), flag))
            quotes.append(Quote(k, price, price, flag))
        spx.slices[T] = QuoteSlice(T, 100.0, quotes)
    save_quotes(spx, path)


def test_price_vix_flat_future(tmp_path):
    out = tmp_path / "vix.csv"
    code = main(["price-vix", *model_args(), "--T", "0.0822", "--strikes", "15,25", "--out", str(out)])
    assert code == EXIT_OK
    assert out.read_text(encoding="utf-8").startswith("# quintic-ou")
    frame = pd.read_csv(out, comment="#")
    assert list(frame.columns) == ["T", "future", "strike", "flag", "price", "implied_vol", "note"]
    assert frame["future"].to_numpy() == pytest.approx([20.0, 20.0], abs=1e-8)


def test_strip_writes_curve(tmp_path):
    quotes = tmp_path / "quotes.csv"
    write_bs_quotes(quotes, {0.1: 0.2, 0.25: 0.2})
    assert main(["strip", "--quotes", str(quotes), "--out-dir", str(tmp_path / "out")]) == EXIT_OK
    stripped = json.loads((tmp_path / "out" / "stripped.json").read_text(encoding="utf-8"))
    assert stripped["_meta"]["tool"] == "quintic-ou"
    assert [i["integral"] / (i["t_hi"] - i["t_lo"]) for i in stripped["intervals"]] == pytest.approx([0.04, 0.04], rel=1e-4)
    curve = json.loads((tmp_path / "out" / "curve.json").read_text(encoding="utf-8"))
    assert curve["type"] == "spline" and len(curve["nodes"]) == 2
    assert curve["_meta"] == stripped["_meta"]
    assert curve_from_dict(curve).evaluate(0.2) == pytest.approx(0.04, rel=1e-4)
    assert not [p.name for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_calendar_arbitrage_exits_numerical(tmp_path):
    quotes = tmp_path / "quotes.csv"
    write_bs_quotes(quotes, {0.1: 0.3, 0.2: 0.1})
    assert main(["strip", "--quotes", str(quotes), "--out-dir", str(tmp_path)]) == EXIT_NUMERICAL


def test_validation_failures_exit_two(tmp_path):
    quotes = tmp_path / "quotes.csv"
    write_bs_quotes(quotes, {0.1: 0.2})
    assert main(["strip", "--quotes", str(quotes), "--out-dir", str(tmp_path)]) == EXIT_VALIDATION
    missing = ["--params", str(tmp_path / "nope.json"), "--curve", str(ASSETS / "curve_flat.json")]
    assert main(["price-vix", *missing, "--T", "0.1", "--strikes", "20", "--out", str(tmp_path / "x.csv")]) == EXIT_VALIDATION
    assert main(["price-vix", *model_args(), "--T", "-0.1", "--strikes", "20", "--out", str(tmp_path / "x.csv")]) == EXIT_VALIDATION


def test_unknown_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["price-vix", "--bogus"])
    assert err.value.code == 2


def test_martingale_table(tmp_path):
    out = tmp_path / "mart.csv"
    args = ["martingale-check", *model_args(), "--T", "0.1,0.25", "--paths", "4096", "--steps-per-year", "52", "--seed", "5"]
    assert main([*args, "--out", str(out)]) == EXIT_OK
    frame = pd.read_csv(out, comment="#")
    assert list(frame["T"]) == [0.1, 0.25]
    assert (frame["deviation_se"].abs() < 4.0).all()


def write_problem(tmp_path, oct2017_params, flat_curve):
    mc = McConfig(n_paths=1024, steps_per_year=52, seed=9, block_size=512)
    spx, vix = synthetic_market(oct2017_params, flat_curve, {0.05: [95.0, 100.0, 105.0]}, {0.05: [18.0, 20.0, 24.0]}, mc)
    rows = tmp_path / "quotes.csv"
    save_quotes(spx, rows)
    vix_rows = tmp_path / "vix.csv"
    save_quotes(vix, vix_rows)
    # one file holds both underlyings
    rows.write_text(rows.read_text(encoding="utf-8") + "".join(vix_rows.read_text(encoding="utf-8").splitlines(True)[1:]), encoding="utf-8")

    problem = {
        "quotes": "quotes.csv",
        "regime": "parametric",
        "free": ["rho", "h"],
        "max_evaluations": 5,
        "restarts": 0,
        "mc": {"n_paths": 1024, "steps_per_year": 52, "block_size": 512},
        "report_paths": 0,
        "initial": {"params": str(ASSETS / "params_oct2017.json"), "curve": str(ASSETS / "curve_flat.json")},
    }
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(problem), encoding="utf-8")
    return path


def test_calibrate_is_reproducible(tmp_path, oct2017_params, flat_curve):
    path = write_problem(tmp_path, oct2017_params, flat_curve)
    texts = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["calibrate", "--problem", str(path), "--out-dir", str(out), "--seed", "9"]) == EXIT_OK
        texts.append((out / "result.json").read_bytes())
        assert (out / "residuals.csv").exists()
    assert texts[0] == texts[1]
    result = json.loads(texts[0])
    assert result["regime"] == "parametric" and result["free"] == ["rho", "h"]
    assert result["objective"] <= result["initial_objective"]
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == ["residuals.csv", "result.json"]
    assert not [p.name for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_failed_calibrate_output_leaves_directory_untouched(tmp_path, oct2017_params, flat_curve, monkeypatch):
    path = write_problem(tmp_path, oct2017_params, flat_curve)
    out = tmp_path / "out"
    out.mkdir()
    (out / "notes.txt").write_text("keep", encoding="utf-8")

    def broken_csv(*args, **kwargs):
        raise OSError("disk full")

    monkeypatch.setattr("src.cli.write_csv", broken_csv)
    with pytest.raises(OSError):
        main(["calibrate", "--problem", str(path), "--out-dir", str(out), "--seed", "9"])
    assert sorted(p.name for p in out.iterdir()) == ["notes.txt"]
    assert not [p.name for p in tmp_path.iterdir() if p.name.startswith(".")]
