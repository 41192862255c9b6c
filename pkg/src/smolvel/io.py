"""Bit-stable CSV emission and parsing for runs, sweeps and comparisons.

Floats are serialized with 17 significant digits, which round-trips IEEE
doubles exactly; all writers emit deterministic row order and LF endings.
"""

from __future__ import annotations

import os

import numpy as np

from .diagnostics import DiagnosticsRow
from .params import VelocityGrid


class SchemaError(ValueError):
    """A CSV file does not match the expected column schema."""


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def diagnostics_header(M: int, d: int) -> list[str]:
    return (
        ["t"]
        + [f"mass_{m}" for m in range(1, M + 1)]
        + ["T", "expelled", "leakage"]
        + [f"momentum_{i}" for i in range(1, d + 1)]
        + ["moment2", "l2_energy", "h1_seminorm", "dist_ref"]
    )


def write_diagnostics_csv(path: str, rows: list[DiagnosticsRow], M: int, d: int) -> None:
    lines = [",".join(diagnostics_header(M, d))]
    for r in rows:
        vals = (
            [r.t] + list(r.mass) + [r.T, r.expelled_cumulative, r.leakage_cumulative]
            + list(r.momentum) + [r.moment2, r.l2_energy, r.h1_seminorm, r.dist_ref]
        )
        lines.append(",".join(fmt_float(v) for v in vals))
    _write_text(path, "\n".join(lines) + "\n")


def read_diagnostics_csv(path: str) -> tuple[list[str], np.ndarray]:
    """Header plus the numeric rows (possibly empty, shape (0, ncols))."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split(",")
    data = np.array(
        [[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float
    ).reshape(len(lines) - 1, len(header))
    return header, data


def snapshot_filename(source: str, t: float, m: int) -> str:
    return f"snapshot_{source}_t{t:g}_m{m}.csv"


def write_snapshot(path: str, grid: VelocityGrid, field: np.ndarray) -> None:
    header = ",".join([f"v_{i}" for i in range(1, grid.d + 1)] + ["f"])
    centers = grid.centers()
    flat = field.ravel()
    lines = [header]
    for idx in range(grid.n_cells):
        coords = ",".join(fmt_float(c) for c in centers[idx])
        lines.append(f"{coords},{fmt_float(flat[idx])}")
    _write_text(path, "\n".join(lines) + "\n")


def read_snapshot(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Returns (points (n, d), values (n,)) from a snapshot file."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[-1] != "f" or not all(
        h == f"v_{i + 1}" for i, h in enumerate(header[:-1])
    ):
        raise SchemaError(f"{path}: unexpected snapshot header {header}")
    d = len(header) - 1
    rows = np.array(
        [[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float
    ).reshape(len(lines) - 1, d + 1)
    return rows[:, :d], rows[:, d]


def write_summary_csv(path: str, entries: list[tuple[float, float, float]]) -> None:
    lines = ["kappa,expelled_at_tend,T_final"]
    for kappa, expelled, t_final in entries:
        lines.append(",".join(fmt_float(v) for v in (kappa, expelled, t_final)))
    _write_text(path, "\n".join(lines) + "\n")


REPORT_HEADER = "t,m,l1_distance,mass_pde,mass_particles,mass_se,sampling_bound"


def write_report_csv(path: str, entries: list[tuple]) -> None:
    lines = [REPORT_HEADER]
    for row in entries:
        t, m = row[0], int(row[1])
        lines.append(
            ",".join([fmt_float(t), str(m)] + [fmt_float(v) for v in row[2:]])
        )
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path: str, text: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc
