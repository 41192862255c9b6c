"""CSV contract of the solver's run directories, validated standalone.

This package never imports the solver; the schemas below restate its
public file contract.  Every violation raises :class:`SchemaError` with
a column-level diagnostic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

SUMMARY_HEADER = ["kappa", "expelled_at_tend", "T_final"]

_DIAG_FIXED_TAIL = ["moment2", "l2_energy", "h1_seminorm", "dist_ref"]


class SchemaError(ValueError):
    """Input file does not match the documented CSV contract."""


def _read_rows(path: str) -> list[list[str]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln]
    except OSError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    if not lines:
        raise SchemaError(f"{path}: empty file, expected a header row")
    return [ln.split(",") for ln in lines]


def _numeric(rows: list[list[str]], width: int, path: str) -> np.ndarray:
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise SchemaError(
                f"{path}: row {i + 2} has {len(row)} columns, expected {width}"
            )
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise SchemaError(
                    f"{path}: row {i + 2}, column {j + 1}: not a number: "
                    f"{cell!r}"
                ) from None
    return data


@dataclass
class Diagnostics:
    """Parsed diagnostics.csv: the time series of every monitored value."""

    path: str
    M: int
    d: int
    t: np.ndarray
    mass: np.ndarray        # (rows, M)
    T: np.ndarray
    expelled: np.ndarray
    leakage: np.ndarray
    data: np.ndarray        # full numeric block


def read_diagnostics(path: str) -> Diagnostics:
    rows = _read_rows(path)
    header = rows[0]
    if header[0] != "t":
        raise SchemaError(f"{path}: first column must be 't', got {header[0]!r}")
    M = 0
    while 1 + M < len(header) and header[1 + M] == f"mass_{M + 1}":
        M += 1
    if M == 0:
        raise SchemaError(f"{path}: expected 'mass_1' at column 2, got "
                          f"{header[1] if len(header) > 1 else 'nothing'!r}")
    pos = 1 + M
    for name in ("T", "expelled", "leakage"):
        if pos >= len(header) or header[pos] != name:
            raise SchemaError(
                f"{path}: expected column {name!r} at position {pos + 1}, got "
                f"{header[pos] if pos < len(header) else 'nothing'!r}"
            )
        pos += 1
    d = 0
    while pos + d < len(header) and header[pos + d] == f"momentum_{d + 1}":
        d += 1
    if d == 0:
        raise SchemaError(f"{path}: expected 'momentum_1' at position {pos + 1}")
    pos += d
    tail = header[pos:]
    if tail != _DIAG_FIXED_TAIL:
        raise SchemaError(
            f"{path}: trailing columns {tail} do not match {_DIAG_FIXED_TAIL}"
        )
    data = _numeric(rows[1:], len(header), path)
    return Diagnostics(
        path=path, M=M, d=d,
        t=data[:, 0],
        mass=data[:, 1:1 + M],
        T=data[:, 1 + M],
        expelled=data[:, 2 + M],
        leakage=data[:, 3 + M],
        data=data,
    )


@dataclass
class Snapshot:
    """Parsed snapshot CSV: one level's density on the velocity grid."""

    path: str
    d: int
    points: np.ndarray      # (cells, d)
    values: np.ndarray      # (cells,)
    source: str | None
    time: float | None
    level: int | None


_SNAPSHOT_NAME = re.compile(r"snapshot_([a-z]+)_t([-0-9.e+]+)_m(\d+)\.csv$")


def read_snapshot(path: str) -> Snapshot:
    rows = _read_rows(path)
    header = rows[0]
    if header[-1] != "f" or any(
        h != f"v_{i + 1}" for i, h in enumerate(header[:-1])
    ):
        raise SchemaError(
            f"{path}: snapshot header must be v_1..v_d,f, got {header}"
        )
    d = len(header) - 1
    data = _numeric(rows[1:], d + 1, path)
    if len(data) == 0:
        raise SchemaError(f"{path}: snapshot holds no cells")
    match = _SNAPSHOT_NAME.search(path)
    source = time = level = None
    if match:
        source = match.group(1)
        time = float(match.group(2))
        level = int(match.group(3))
    return Snapshot(path=path, d=d, points=data[:, :d], values=data[:, d],
                    source=source, time=time, level=level)


@dataclass
class Summary:
    path: str
    kappa: np.ndarray
    expelled: np.ndarray
    T_final: np.ndarray


def read_summary(path: str) -> Summary:
    rows = _read_rows(path)
    if rows[0] != SUMMARY_HEADER:
        raise SchemaError(
            f"{path}: summary header must be {SUMMARY_HEADER}, got {rows[0]}"
        )
    data = _numeric(rows[1:], 3, path)
    return Summary(path=path, kappa=data[:, 0], expelled=data[:, 1],
                   T_final=data[:, 2])
