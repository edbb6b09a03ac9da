"""CSV reading/writing for data matrices."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np


class CsvFormatError(ValueError):
    def __init__(self, path, line: int, column: int | None, problem: str):
        self.path, self.line, self.column = str(path), line, column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{path}: {where}: {problem}")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path) -> np.ndarray:
    """Read a rectangular numeric CSV into an ``m x v`` float array.

    A first row containing any non-numeric cell is taken as a header.
    Blank lines are ignored. Ragged rows, non-numeric or non-finite cells
    and files without data rows raise :class:`CsvFormatError` with the
    offending line (1-based) and column (1-based).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(n, row) for n, row in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in row)]
    if rows and not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise CsvFormatError(path, 1, None, "no numeric data rows")

    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for i, (line, row) in enumerate(rows):
        if len(row) != width:
            raise CsvFormatError(path, line, None, f"expected {width} fields, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise CsvFormatError(path, line, j + 1, f"non-numeric value {cell.strip()!r}") from None
            if not math.isfinite(value):
                raise CsvFormatError(path, line, j + 1, f"non-finite value {cell.strip()!r}")
            data[i, j] = value
    return data


def format_float(x: float, digits: int = 9) -> str:
    return f"{x:.{digits}g}"


def write_csv(X, path, header=None, digits: int | None = None) -> None:
    """Write a matrix as CSV. ``digits=None`` keeps round-trip precision."""
    X = np.asarray(X, dtype=np.float64)
    fmt = repr if digits is None else (lambda x: format_float(x, digits))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in X:
            w.writerow([fmt(float(x)) for x in row])
