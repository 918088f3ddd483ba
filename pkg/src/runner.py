from __future__ import annotations

import json
import time
from dataclasses import asdict
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from src.errors import ValidationError
from src.logging_config import logger
from src.quintic_model import curve_from_dict, params_from_dict
from src.settings import env_flag
from src.spx_pricer import McConfig, martingale_check, spx_smile
from src.utils import parse_float_list, project_root, read_json_maybe_file, safe_filename
from src.vix_pricer import build_vix_polynomial, default_rule, vix_future, vix_smile

COMMANDS = ("price-vix", "price-spx", "martingale-check", "vix-smile")


# ----------------------------------------------------------------------
# Output (console + file)
# ----------------------------------------------------------------------
def _get_output_path(out_dir: Path, command: str, run_ts: str) -> Path:
    """
    output/{command}_{YYYYMMDD_HHMMSS}.jsonl
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / f"{safe_filename(command)}_{run_ts}.jsonl"


def _append_jsonl(path: Path, obj: Dict[str, Any]) -> None:
    line = json.dumps(obj, ensure_ascii=False)
    with path.open("a", encoding="utf-8", newline="\n") as f:
        f.write(line + "\n")


def _pretty_print(obj: Dict[str, Any]) -> None:
    print(json.dumps(obj, ensure_ascii=False, indent=2))


# ----------------------------------------------------------------------
# Case parsing
# ----------------------------------------------------------------------
def _parse_case(defaults: Dict[str, Any], c: Dict[str, Any], base_dir: Path) -> Dict[str, Any]:
    def pick(key: str) -> Any:
        v = c.get(key)
        if v == "" or v is None:
            v = defaults.get(key)
        return v

    command = str(pick("command") or "").strip().lower()
    if command not in COMMANDS:
        raise ValidationError(f"Unsupported command: {command!r} (allowed: {COMMANDS})")
    if pick("params") is None or pick("curve") is None:
        raise ValidationError("case needs params and curve")
    if pick("T") is None:
        raise ValidationError("case needs T")

    params_doc = read_json_maybe_file(pick("params"), base_dir=base_dir)
    curve_doc = read_json_maybe_file(pick("curve"), base_dir=base_dir)
    mc_doc = dict(defaults.get("mc") or {})
    mc_doc.update(c.get("mc") or {})
    strikes = pick("strikes")
    return {
        "command": command,
        "T": float(pick("T")),
        "strikes": parse_float_list(strikes) if strikes is not None else [],
        "params_doc": params_doc,
        "curve_doc": curve_doc,
        "mc_doc": mc_doc,
        "notice": str(pick("notice") or ""),
    }


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------
def _run_price_vix(req: Dict[str, Any], params, curve) -> Dict[str, Any]:
    poly = build_vix_polynomial(params, curve, req["T"])
    out: Dict[str, Any] = {"future": vix_future(poly, default_rule()), "beta": [float(b) for b in poly.beta]}
    if req["strikes"]:
        out["smile"] = [asdict(p) for p in vix_smile(params, curve, req["T"], req["strikes"])]
    return out


def _run_vix_smile(req: Dict[str, Any], params, curve) -> Dict[str, Any]:
    if not req["strikes"]:
        raise ValidationError("vix-smile needs strikes")
    return {"smile": [asdict(p) for p in vix_smile(params, curve, req["T"], req["strikes"])]}


def _run_price_spx(req: Dict[str, Any], params, curve) -> Dict[str, Any]:
    if not req["strikes"]:
        raise ValidationError("price-spx needs strikes")
    cfg = McConfig.from_settings(**req["mc_doc"])
    return {"smile": [asdict(p) for p in spx_smile(params, curve, req["T"], req["strikes"], cfg)]}


def _run_martingale(req: Dict[str, Any], params, curve) -> Dict[str, Any]:
    cfg = McConfig.from_settings(**req["mc_doc"])
    est = martingale_check(params, curve, req["T"], cfg)
    return {"ratio": est.value, "std_error": est.std_error, "n_effective": est.n_effective}


_HANDLERS: Dict[str, Callable[..., Dict[str, Any]]] = {
    "price-vix": _run_price_vix,
    "vix-smile": _run_vix_smile,
    "price-spx": _run_price_spx,
    "martingale-check": _run_martingale,
}


# ----------------------------------------------------------------------
# Main runner
# ----------------------------------------------------------------------
def run_case_file(case_file: str, continue_on_error: bool = False, output_dir: Optional[Path] = None) -> List[Dict[str, Any]]:
    case_path = Path(case_file)
    base_dir = case_path.parent
    out_dir = Path(output_dir) if output_dir is not None else project_root() / "output"

    data = json.loads(case_path.read_text(encoding="utf-8"))
    defaults = data.get("defaults") or {}
    cases = data.get("cases") or []
    if not isinstance(cases, list) or not cases:
        raise ValidationError("cases must be a non-empty list")

    # 실행 단위 timestamp (한 번만 생성해서 파일명에 사용)
    run_ts = datetime.now().strftime("%Y%m%d_%H%M%S")
    save_input = env_flag("QUINTIC_SAVE_ENVELOPE_INPUT")

    logger.info("CASE FILE: %s", str(case_path))
    logger.info("TOTAL CASES: %d", len(cases))
    logger.info("SAVE_ENVELOPE_INPUT: %s (env QUINTIC_SAVE_ENVELOPE_INPUT=1 to enable)", save_input)
    logger.info("OUTPUT_DIR: %s", str(out_dir.resolve()))

    envelopes: List[Dict[str, Any]] = []
    for idx, c in enumerate(cases, start=1):
        case_id = c.get("id") or f"case_{idx:02d}"
        logger.info("------------------------------------------------------------")
        logger.info("[CASE %s] start", case_id)
        t0 = time.perf_counter()

        try:
            req = _parse_case(defaults, c, base_dir=base_dir)
            logger.info("[STEP 1] parse case command=%s T=%.6f strikes=%d", req["command"], req["T"], len(req["strikes"]))

            params = params_from_dict(req["params_doc"])
            curve = curve_from_dict(req["curve_doc"])
            logger.info("[STEP 2] model epsilon=%.6f rho=%.4f curve=%s", params.ou.epsilon, params.rho, curve.kind)

            logger.info("[STEP 3] run %s", req["command"])
            output = _HANDLERS[req["command"]](req, params, curve)

            envelope: Dict[str, Any] = {
                "meta": {
                    "case_id": case_id,
                    "command": req["command"],
                    "notice": req["notice"],
                    "ts": datetime.now().isoformat(timespec="seconds"),
                    "elapsed_ms": int((time.perf_counter() - t0) * 1000),
                },
                "input": {"T": req["T"], "strikes": req["strikes"], "mc": req["mc_doc"]},
                "output": output,
            }
            if save_input:
                envelope["input"]["params"] = req["params_doc"]
                envelope["input"]["curve"] = req["curve_doc"]

            logger.info("[STEP 4] result (console pretty print)")
            _pretty_print(envelope)

            out_path = _get_output_path(out_dir, req["command"], run_ts)
            _append_jsonl(out_path, envelope)
            envelopes.append(envelope)
            logger.info("[CASE %s] success (saved: %s)", case_id, str(out_path))

        except Exception as e:
            # 에러도 envelope로 저장/출력
            err_env: Dict[str, Any] = {
                "meta": {
                    "case_id": case_id,
                    "ts": datetime.now().isoformat(timespec="seconds"),
                    "elapsed_ms": int((time.perf_counter() - t0) * 1000),
                },
                "error": {
                    "message": str(e),
                    "type": type(e).__name__,
                },
            }
            logger.error("[CASE %s] failed: %s", case_id, e)
            _pretty_print(err_env)

            hinted = str(c.get("command") or defaults.get("command") or "unknown")
            _append_jsonl(_get_output_path(out_dir, hinted, run_ts), err_env)
            envelopes.append(err_env)

            if not continue_on_error:
                raise

    logger.info("DONE")
    return envelopes
