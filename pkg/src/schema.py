from __future__ import annotations

import math
from typing import Any

from src.errors import ValidationError

FLAGS = ("call", "put")
UNDERLYINGS = ("SPX", "VIX")


def normalize_flag(f: Any) -> str:
    s = (str(f) if f is not None else "").strip().lower()
    if s in ("c", "call"):
        return "call"
    if s in ("p", "put"):
        return "put"
    raise ValidationError(f"Unsupported option flag: {f}")


def normalize_underlying(u: Any) -> str:
    s = (str(u) if u is not None else "").strip().upper()
    if s in UNDERLYINGS:
        return s
    raise ValidationError(f"Unsupported underlying: {u}")


def validate_positive(field: str, value: Any) -> float:
    v = validate_finite(field, value)
    if v <= 0.0:
        raise ValidationError(f"{field} must be > 0, got {v}")
    return v


def validate_nonnegative(field: str, value: Any) -> float:
    v = validate_finite(field, value)
    if v < 0.0:
        raise ValidationError(f"{field} must be >= 0, got {v}")
    return v


def validate_finite(field: str, value: Any) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{field} must be a number, got {value!r}")
    if not math.isfinite(v):
        raise ValidationError(f"{field} must be finite, got {v}")
    return v


def validate_range(field: str, value: Any, lo: float, hi: float) -> float:
    v = validate_finite(field, value)
    if not lo <= v <= hi:
        raise ValidationError(f"{field} must be in [{lo}, {hi}], got {v}")
    return v
