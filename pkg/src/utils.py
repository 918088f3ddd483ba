# src/utils.py
from __future__ import annotations

import hashlib
import json
import os
import re
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.errors import ValidationError

TOOL_NAME = "quintic-ou"
TOOL_VERSION = "0.1.0"


def project_root() -> Path:
    """
    프로젝트 루트 디렉토리를 반환한다.

    전제:
      - 이 파일은 <repo_root>/src/utils.py 에 위치한다.
      - 따라서 repo_root == src 폴더의 부모 폴더
    """
    return Path(__file__).resolve().parents[1]


def resolve_path(value: str, base_dir: Optional[Path] = None, root_dir: Optional[Path] = None) -> Path:
    """
    상대경로 탐색 순서:
        1) base_dir / path  (케이스 JSON이 있는 위치 기준)
        2) root_dir / path  (root_dir 미지정이면 project_root())
        3) path 그대로 (현재 작업 디렉토리 기준)

    예외:
      - 어디에도 없으면 FileNotFoundError (시도한 경로 목록 포함)
    """
    p = Path((value or "").strip())
    if p.is_absolute():
        if p.exists():
            return p
        raise FileNotFoundError(f"No such file: {p}")

    tried: List[str] = []
    candidates = []
    if base_dir is not None:
        candidates.append(Path(base_dir) / p)
    candidates.append(Path(root_dir or project_root()) / p)
    candidates.append(p)
    for cand in candidates:
        cand = cand.resolve()
        tried.append(str(cand))
        if cand.exists():
            return cand
    raise FileNotFoundError(f"No such file: {value}. Tried: {tried}")


def read_json_maybe_file(value: Any, base_dir: Optional[Path] = None) -> Dict[str, Any]:
    """
    value가 dict면 그대로, '@path' 또는 경로 문자열이면 JSON 파일로 읽는다.
    """
    if isinstance(value, dict):
        return value
    s = str(value or "").strip()
    if not s:
        raise ValidationError("missing JSON document reference")
    if s.startswith("@"):
        s = s[1:].strip()
    path = resolve_path(s, base_dir=base_dir)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e})")
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: JSON document must be an object")
    return obj


def parse_float_list(value: Any) -> List[float]:
    """
    '10..30' (step 1), '10..30:2.5', '0.8,0.9,1.0' 또는 숫자 리스트를 지원한다.
    """
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    if isinstance(value, (int, float)):
        return [float(value)]
    s = str(value or "").strip()
    if not s:
        raise ValidationError("empty number list")
    m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*\.\.\s*([-+0-9.eE]+)\s*(?::\s*([-+0-9.eE]+))?\s*", s)
    try:
        if m:
            lo, hi = float(m.group(1)), float(m.group(2))
            step = float(m.group(3)) if m.group(3) else 1.0
            if step <= 0 or hi < lo:
                raise ValidationError(f"bad range: {s}")
            n = int(np.floor((hi - lo) / step + 1e-9))
            return [lo + i * step for i in range(n + 1)]
        return [float(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse number list: {s}")


def params_hash(doc: Dict[str, Any]) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def metadata_line(seed: Optional[int], doc: Dict[str, Any]) -> str:
    seed_txt = "none" if seed is None else str(seed)
    return f"# {TOOL_NAME} version={TOOL_VERSION} seed={seed_txt} params_hash={params_hash(doc)}"


def safe_filename(s: str) -> str:
    """
    파일명 안전화:
    - Windows/Unix 모두에서 문제 될만한 문자 제거/치환
    """
    s = (s or "").strip()
    if not s:
        return "unknown"
    s = s.replace(" ", "_")
    s = re.sub(r"[^A-Za-z0-9._-]+", "_", s)
    return s[:180]


def atomic_write_text(path: Path, text: str) -> None:
    """
    temp 파일에 먼저 쓰고 os.replace로 교체한다. 실패하면 기존 파일은 그대로 남는다.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


@contextmanager
def staged_dir(path: Path) -> Iterator[Path]:
    """
    path 옆 temp 디렉토리에 모두 쓴 뒤 파일별로 os.replace 한다.
    블록 안에서 실패하면 path 에는 아무것도 쓰이지 않는다.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=str(path.parent)))
    try:
        yield tmp
        for item in sorted(tmp.iterdir()):
            os.replace(item, path / item.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def csv_text(rows: Sequence[Dict[str, Any]], columns: Sequence[str], header_comment: Optional[str] = None) -> str:
    frame = pd.DataFrame(list(rows), columns=list(columns))
    body = frame.to_csv(index=False, float_format="%.12g", lineterminator="\n")
    if header_comment:
        return header_comment + "\n" + body
    return body


def write_csv(path: Path, rows: Sequence[Dict[str, Any]], columns: Sequence[str], header_comment: Optional[str] = None) -> None:
    atomic_write_text(path, csv_text(rows, columns, header_comment))


def json_text(obj: Dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj: Dict[str, Any]) -> None:
    atomic_write_text(path, json_text(obj))


def map_ordered(fn: Callable[[Any], Any], items: Sequence[Any], threads: int = 1) -> List[Any]:
    """
    items 순서대로 결과를 돌려준다. threads > 1 이면 ThreadPoolExecutor 사용.
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
