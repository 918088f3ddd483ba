from __future__ import annotations

import json
from pathlib import Path

import pytest

from src.quintic_model import curve_from_dict, params_from_dict
from src.spx_pricer import McConfig

ASSETS = Path(__file__).resolve().parent / "assets"
CASES = Path(__file__).resolve().parent / "cases"


def load_asset(name: str) -> dict:
    return json.loads((ASSETS / name).read_text(encoding="utf-8"))


@pytest.fixture
def flat_params():
    return params_from_dict(load_asset("params_flat.json"))


@pytest.fixture
def flat_curve():
    return curve_from_dict(load_asset("curve_flat.json"))


@pytest.fixture
def oct2017_params():
    return params_from_dict(load_asset("params_oct2017.json"))


@pytest.fixture
def td_params():
    return params_from_dict(load_asset("params_td.json"))


@pytest.fixture
def small_mc():
    return McConfig(n_paths=8192, steps_per_year=104, seed=11, block_size=2048)
