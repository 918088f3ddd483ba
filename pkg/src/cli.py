"""Command-line entry point: strip, price-vix, price-spx, smile, calibrate, martingale-check."""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from src.calibrator import RESIDUAL_COLUMNS, h_curve, problem_from_dict, staged_calibrate
from src.errors import NumericalError, QuinticError
from src.logging_config import logger
from src.market_data import build_curve, load_quotes, mid_implied_vols, strip_forward_variance
from src.quintic_model import curve_from_dict, params_from_dict
from src.settings import default_threads
from src.spx_pricer import McConfig, martingale_check, simulate_for, smile_from_records
from src.utils import (
    TOOL_NAME,
    TOOL_VERSION,
    metadata_line,
    params_hash,
    parse_float_list,
    read_json_maybe_file,
    staged_dir,
    write_csv,
    write_json,
)
from src.vix_pricer import vix_smile

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _meta(seed: Optional[int], doc: Dict[str, Any]) -> Dict[str, Any]:
    return {"tool": TOOL_NAME, "version": TOOL_VERSION, "seed": seed, "params_hash": params_hash(doc)}


def _model(args) -> tuple:
    params_doc = read_json_maybe_file(args.params)
    curve_doc = read_json_maybe_file(args.curve)
    return params_from_dict(params_doc), curve_from_dict(curve_doc), {"params": params_doc, "curve": curve_doc}


def _mc(args) -> McConfig:
    return McConfig.from_settings(
        n_paths=args.paths,
        steps_per_year=args.steps_per_year,
        seed=args.seed,
        threads=args.threads,
    )


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------
def cmd_strip(args) -> None:
    spx = load_quotes(args.quotes, "SPX")
    stripped = strip_forward_variance(spx)
    curve = build_curve(stripped, args.style)
    out = Path(args.out_dir)
    doc = stripped.to_dict()
    meta = _meta(None, {"quotes": str(args.quotes), "style": args.style})
    with staged_dir(out) as tmp:
        write_json(tmp / "stripped.json", {"_meta": meta, **doc})
        write_json(tmp / "curve.json", {"_meta": meta, **curve.to_dict()})
    logger.info("[STRIP] wrote %s and %s", out / "stripped.json", out / "curve.json")


def cmd_price_vix(args) -> None:
    params, curve, docs = _model(args)
    rows: List[Dict[str, Any]] = []
    for T in parse_float_list(args.T):
        for p in vix_smile(params, curve, T, parse_float_list(args.strikes)):
            rows.append({
                "T": T, "future": p.future, "strike": p.strike, "flag": p.flag,
                "price": p.price, "implied_vol": p.implied_vol, "note": p.note,
            })
    header = metadata_line(None, docs)
    write_csv(Path(args.out), rows, ("T", "future", "strike", "flag", "price", "implied_vol", "note"), header)
    logger.info("[VIX] wrote %d rows to %s", len(rows), args.out)


def cmd_price_spx(args) -> None:
    params, curve, docs = _model(args)
    cfg = _mc(args)
    strikes = parse_float_list(args.strikes)
    rows: List[Dict[str, Any]] = []
    for T in parse_float_list(args.T):
        records = simulate_for(params, curve, T, cfg)
        for p in smile_from_records(records, params.rho, cfg.spot, strikes, cfg.control_variate):
            rows.append({
                "T": T, "strike": p.strike, "flag": p.flag, "price": p.price, "std_error": p.std_error,
                "implied_vol": p.implied_vol, "iv_low": p.iv_low, "iv_high": p.iv_high,
            })
    header = metadata_line(cfg.seed, docs)
    write_csv(Path(args.out), rows, ("T", "strike", "flag", "price", "std_error", "implied_vol", "iv_low", "iv_high"), header)
    logger.info("[SPX] wrote %d rows to %s", len(rows), args.out)


SMILE_COLUMNS = ("strike", "flag", "mid_iv_model", "iv_low", "iv_high", "market_mid_iv")


def cmd_smile(args) -> None:
    params, curve, docs = _model(args)
    cfg = _mc(args)
    out = Path(args.out_dir)
    header = metadata_line(cfg.seed, docs)
    written = 0

    spx = load_quotes(args.quotes, "SPX")
    for T in spx.maturities():
        sl = spx.slices[T]
        market = {q.strike: iv for q, iv in mid_implied_vols(sl)}
        strikes = [q.strike for q in sl.sorted_quotes()]
        records = simulate_for(params, curve, T, cfg)
        rows = [
            {"strike": p.strike, "flag": p.flag, "mid_iv_model": p.implied_vol, "iv_low": p.iv_low,
             "iv_high": p.iv_high, "market_mid_iv": market.get(p.strike)}
            for p in smile_from_records(records, params.rho, sl.forward, strikes, cfg.control_variate)
        ]
        write_csv(out / f"smile_SPX_T{T:.6f}.csv", rows, SMILE_COLUMNS, header)
        written += 1

    vix = load_quotes(args.quotes, "VIX")
    for T in vix.maturities():
        sl = vix.slices[T]
        market = {q.strike: iv for q, iv in mid_implied_vols(sl)}
        rows = [
            {"strike": p.strike, "flag": p.flag, "mid_iv_model": p.implied_vol, "iv_low": p.implied_vol,
             "iv_high": p.implied_vol, "market_mid_iv": market.get(p.strike)}
            for p in vix_smile(params, curve, T, [q.strike for q in sl.sorted_quotes()])
        ]
        write_csv(out / f"smile_VIX_T{T:.6f}.csv", rows, SMILE_COLUMNS, header)
        written += 1
    logger.info("[STEP 3] wrote %d smile files to %s", written, out)


def cmd_calibrate(args) -> None:
    problem_path = Path(args.problem)
    doc = read_json_maybe_file(str(problem_path))
    problem = problem_from_dict(doc, base_dir=problem_path.resolve().parent, seed=args.seed, threads=args.threads)
    result = staged_calibrate(problem)

    out = Path(args.out_dir)
    meta = _meta(args.seed, doc)
    header = metadata_line(args.seed, doc)
    with staged_dir(out) as tmp:
        write_json(tmp / "result.json", {"_meta": meta, **result.to_dict()})
        write_csv(tmp / "residuals.csv", [r.to_row() for r in result.residuals], RESIDUAL_COLUMNS, header)
        if result.params.ou.time_dependent:
            horizon = max(problem.spx.maturities() + problem.vix.maturities() + [1.0])
            write_csv(tmp / "h_curve.csv", h_curve(result.params, horizon), ("t", "h"), header)
    logger.info("[CALIB] wrote results to %s", out)


def cmd_martingale(args) -> None:
    params, curve, docs = _model(args)
    cfg = _mc(args)
    rows = []
    for T in parse_float_list(args.T):
        est = martingale_check(params, curve, T, cfg)
        rows.append({"T": T, "ratio": est.value, "std_error": est.std_error, "deviation_se": (est.value - 1.0) / est.std_error if est.std_error > 0 else 0.0})
    write_csv(Path(args.out), rows, ("T", "ratio", "std_error", "deviation_se"), metadata_line(cfg.seed, docs))
    logger.info("[SPX] wrote martingale table to %s", args.out)


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: env QUINTIC_THREADS or 1)")
    common.add_argument("--seed", type=int, default=0, help="Monte Carlo seed")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--params", required=True, help="model parameter JSON (path or @path)")
    model.add_argument("--curve", required=True, help="forward variance curve JSON (path or @path)")

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--paths", type=int, default=None, help="Monte Carlo paths (default from config)")
    mc.add_argument("--steps-per-year", type=int, default=None, help="time steps per year (default from config)")

    ap = argparse.ArgumentParser(prog="quintic", description="Quintic OU SPX/VIX pricing and calibration")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("strip", parents=[common], help="strip forward variance from SPX quotes")
    p.add_argument("--quotes", required=True, help="quote CSV")
    p.add_argument("--style", choices=("spline", "piecewise"), default="spline")
    p.add_argument("--out-dir", default="output")
    p.set_defaults(func=cmd_strip)

    p = sub.add_parser("price-vix", parents=[common, model], help="VIX futures and options by quadrature")
    p.add_argument("--T", required=True, help="maturities, e.g. 0.0822 or 0.05,0.1")
    p.add_argument("--strikes", required=True, help="strikes, e.g. 10..30 or 15,20,25")
    p.add_argument("--out", default="output/price_vix.csv")
    p.set_defaults(func=cmd_price_vix)

    p = sub.add_parser("price-spx", parents=[common, model, mc], help="SPX vanillas by Monte Carlo")
    p.add_argument("--T", required=True)
    p.add_argument("--strikes", required=True)
    p.add_argument("--out", default="output/price_spx.csv")
    p.set_defaults(func=cmd_price_spx)

    p = sub.add_parser("smile", parents=[common, model, mc], help="model smiles on quoted strikes, one CSV per slice")
    p.add_argument("--quotes", required=True)
    p.add_argument("--out-dir", default="output")
    p.set_defaults(func=cmd_smile)

    p = sub.add_parser("calibrate", parents=[common], help="joint SPX/VIX calibration")
    p.add_argument("--problem", required=True, help="calibration problem JSON")
    p.add_argument("--out-dir", default="output")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("martingale-check", parents=[common, model, mc], help="E[S_T]/S0 table")
    p.add_argument("--T", required=True)
    p.add_argument("--out", default="output/martingale.csv")
    p.set_defaults(func=cmd_martingale)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads is None:
            args.threads = default_threads()
        args.func(args)
    except NumericalError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_NUMERICAL
    except (QuinticError, FileNotFoundError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
