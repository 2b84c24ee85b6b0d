"""Deterministic CSV emission shared by the sweep/steady/bounds outputs."""

from __future__ import annotations

import json
import math
from typing import Iterable, Sequence, TextIO


def fmt(value) -> str:
    """Format one cell: floats at 17 significant digits, bools as 0/1."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.17g}"
    return str(value)


def write_csv(fh: TextIO, header: Sequence[str], rows: Iterable[Sequence],
              config: dict | None = None) -> int:
    """Write an optional ``# config:`` comment line, the header and rows."""
    if config is not None:
        fh.write("# config: " + json.dumps(config, sort_keys=True, default=str) + "\n")
    fh.write(",".join(header) + "\n")
    n = 0
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        fh.write(",".join(fmt(v) for v in row) + "\n")
        n += 1
    return n


def read_csv(fh: TextIO) -> tuple[dict | None, list[dict[str, str]]]:
    """Inverse of :func:`write_csv` (cells stay strings)."""
    config = None
    lines = [ln.rstrip("\n") for ln in fh]
    if lines and lines[0].startswith("# config: "):
        config = json.loads(lines[0][len("# config: "):])
        lines = lines[1:]
    header = lines[0].split(",")
    return config, [dict(zip(header, ln.split(","))) for ln in lines[1:] if ln]
