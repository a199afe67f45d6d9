"""Deterministic CSV and manifest writers."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    """Round-trip float formatting that is stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    v = float(x)
    if v != v:
        return "nan"
    if v in (float("inf"), float("-inf")):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def csv_text(header: Sequence[str], columns: Sequence[Iterable]) -> str:
    cols = [list(c) for c in columns]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns differ in length")
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(fmt(c[i]) for c in cols))
    return "\n".join(lines) + "\n"


def write_csv(path: Path | str, header: Sequence[str], columns: Sequence[Iterable]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, columns), encoding="utf-8", newline="\n")
    return path


def read_csv(path: Path | str) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float)
    return header, data.reshape(len(lines) - 1, len(header))


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
