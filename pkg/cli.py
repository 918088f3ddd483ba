"""Repo-root convenience entrypoint.

설치(pip install -e .) 없이도 아래처럼 실행할 수 있게 해준다.

  python cli.py price-vix --params tests/assets/params_flat.json --curve tests/assets/curve_flat.json --T 0.0822 --strikes 10..30

실제 구현은 `src.cli`에 있다.
"""

from __future__ import annotations

import os
import sys


def main() -> int:
    # repo-root를 sys.path에 추가해서 `src.*` import가 되도록 한다
    repo_root = os.path.dirname(os.path.abspath(__file__))
    if repo_root not in sys.path:
        sys.path.insert(0, repo_root)

    from src.cli import main as _main

    return _main()


if __name__ == "__main__":
    raise SystemExit(main())
