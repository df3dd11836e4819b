"""CSV reading and writing with shortest round-trip float formatting."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = ["TableFormatError", "format_number", "write_table", "read_table", "write_solution", "read_solution"]


class TableFormatError(ValueError):
    pass


def format_number(v) -> str:
    """``repr`` of a float is the shortest string that parses back exactly."""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])
    return path


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header and a float array (one row per data line)."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableFormatError(f"{path}: empty CSV, a header row is required") from None
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise TableFormatError(f"{path}:{line}: {len(row)} fields, header has {len(header)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise TableFormatError(f"{path}:{line}: {exc}") from None
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, data


def write_solution(path, solution, every: int = 1) -> Path:
    """Rows ``t, x... , re, im`` for every output node and grid point."""
    grid = solution.grid
    coords = [c.ravel() for c in grid.coords()]
    names = ["x"] if grid.dim == 1 else [f"x{i + 1}" for i in range(grid.dim)]
    header = ["t", *names, "re", "im"]
    values = solution.values()

    def rows():
        for j in solution.output_indices(every):
            u = np.asarray(values[j], dtype=complex).ravel()
            t = solution.t[j]
            for i in range(u.size):
                yield (t, *(c[i] for c in coords), u[i].real, u[i].imag)

    return write_table(path, header, rows())


def read_solution(path) -> tuple[list[str], np.ndarray]:
    header, data = read_table(path)
    if header[0] != "t" or header[-2:] != ["re", "im"]:
        raise TableFormatError(f"{path}: not a solution table (header {header})")
    return header, data
