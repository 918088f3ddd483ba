from __future__ import annotations

import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict

import yaml

from src.errors import ConfigError


# ----------------------------------------------------------------------
# Config
# ----------------------------------------------------------------------
def _config_path() -> Path:
    """
    기본 설정은 ./src/configs/quintic.yaml 에 둔다.
    - QUINTIC_CONFIG 환경변수가 있으면 그 경로를 우선 사용한다.
    """
    override = (os.getenv("QUINTIC_CONFIG") or "").strip()
    if override:
        return Path(override)
    return Path(__file__).resolve().parent / "configs" / "quintic.yaml"


@lru_cache(maxsize=None)
def _load(path: str) -> Dict[str, Any]:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except Exception as e:
        raise ConfigError(f"Failed to load {path}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at top level")
    return data


def load_settings() -> Dict[str, Any]:
    return _load(str(_config_path()))


def section(name: str) -> Dict[str, Any]:
    data = load_settings().get(name)
    if not isinstance(data, dict):
        raise ConfigError(f"Missing config section: {name}")
    return data


def env_flag(name: str) -> bool:
    v = (os.getenv(name) or "").strip().lower()
    return v in ("1", "true", "y", "yes", "on")


def default_threads() -> int:
    raw = (os.getenv("QUINTIC_THREADS") or "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"QUINTIC_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("QUINTIC_THREADS must be >= 1")
    return n


def vix_window() -> float:
    """Δ as a year fraction (ACT/365)."""
    m = section("model")
    return float(m["vix_window_days"]) / float(m["day_count"])


def default_epsilon() -> float:
    return float(section("model")["epsilon"])
