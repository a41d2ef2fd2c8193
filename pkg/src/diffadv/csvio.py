"""CSV emission with ``#`` comment headers, atomic writes, and the matching reader."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass
from typing import Iterable, Sequence


def fmt(v) -> str:
    """17 significant digits for floats; ints and strings as-is."""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float) or (hasattr(v, "dtype") and getattr(v.dtype, "kind", "") == "f"):
        return format(float(v), ".17g")
    return str(v)


def render_csv(columns: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class CsvTable:
    comments: list
    columns: list
    rows: list  # list of lists of str

    def column(self, name: str, conv=float) -> list:
        i = self.columns.index(name)
        return [conv(r[i]) for r in self.rows]


def parse_csv(text: str) -> CsvTable:
    lines = text.splitlines()
    comments = []
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        comments.append(lines[i][1:].strip())
        i += 1
    body = list(csv.reader(lines[i:]))
    if not body:
        raise ValueError("CSV has no header row")
    cols = body[0]
    rows = body[1:]
    for k, r in enumerate(rows):
        if len(r) != len(cols):
            raise ValueError(f"row {k + 1} has {len(r)} fields, header has {len(cols)}")
    return CsvTable(comments, cols, rows)


def read_csv(path: str) -> CsvTable:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_csv(f.read())
