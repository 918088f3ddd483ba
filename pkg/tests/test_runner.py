import json
import shutil
import subprocess
from pathlib import Path

import pytest

from src.errors import ValidationError
from src.runner import run_case_file

CASES = Path(__file__).resolve().parent / "cases"
ROOT = Path(__file__).resolve().parents[1]


def read_jsonl(out_dir, prefix):
    files = sorted(out_dir.glob(f"{prefix}_*.jsonl"))
    assert len(files) == 1
    return [json.loads(line) for line in files[0].read_text(encoding="utf-8").splitlines()]


def test_vix_cases(tmp_path):
    envelopes = run_case_file(str(CASES / "vix_flat.json"), output_dir=tmp_path)
    assert [e["meta"]["case_id"] for e in envelopes] == ["future_1m", "smile_1m", "future_oct2017"]
    assert envelopes[0]["output"]["future"] == pytest.approx(20.0, abs=1e-8)
    assert "smile" not in envelopes[0]["output"]
    assert [p["strike"] for p in envelopes[1]["output"]["smile"]] == [15.0, 20.0, 25.0]
    assert len(envelopes[2]["output"]["smile"]) == 3
    assert 15.0 < envelopes[2]["output"]["future"] < 30.0
    assert envelopes[0]["meta"]["notice"].startswith("flat xi0")
    assert "params" not in envelopes[0]["input"]
    assert len(read_jsonl(tmp_path, "price-vix")) == 2
    assert len(read_jsonl(tmp_path, "vix-smile")) == 1


def test_envelope_input_is_opt_in(tmp_path, monkeypatch):
    monkeypatch.setenv("QUINTIC_SAVE_ENVELOPE_INPUT", "1")
    envelopes = run_case_file(str(CASES / "vix_flat.json"), output_dir=tmp_path)
    assert envelopes[0]["input"]["params"]["alpha0"] == 1.0
    assert envelopes[0]["input"]["curve"]["type"] == "parametric"


def test_bad_command_stops_the_run(tmp_path):
    with pytest.raises(ValidationError):
        run_case_file(str(CASES / "spx_small.json"), output_dir=tmp_path)
    errors = read_jsonl(tmp_path, "price-bond")
    assert errors[0]["error"]["type"] == "ValidationError"


def test_continue_on_error_keeps_going(tmp_path):
    envelopes = run_case_file(str(CASES / "spx_small.json"), continue_on_error=True, output_dir=tmp_path)
    smile, martingale, bad = envelopes
    assert [p["strike"] for p in smile["output"]["smile"]] == [90.0, 100.0, 110.0]
    assert all(p["std_error"] > 0.0 for p in smile["output"]["smile"])
    assert abs(martingale["output"]["ratio"] - 1.0) < 4.0 * martingale["output"]["std_error"]
    assert smile["input"]["mc"]["n_paths"] == 4096
    assert bad["error"]["message"].startswith("Unsupported command")
    assert "output" not in bad


def test_empty_case_list_is_rejected(tmp_path):
    path = tmp_path / "cases.json"
    path.write_text(json.dumps({"cases": []}), encoding="utf-8")
    with pytest.raises(ValidationError):
        run_case_file(str(path), output_dir=tmp_path)


@pytest.mark.skipif(shutil.which("bash") is None, reason="needs bash")
def test_launcher_prints_usage_without_arguments():
    done = subprocess.run(["bash", str(ROOT / "run.sh")], capture_output=True, text=True, timeout=30)
    assert done.returncode == 2
    assert "pricing_cases.json" in done.stdout
    assert "martingale-check" in done.stdout
