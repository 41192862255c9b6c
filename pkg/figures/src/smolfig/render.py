"""Figure builders: decay, snapshot, overlay and sweep panels.

Rendering is a pure function of the input CSV bytes: fixed style, fixed
layout, no timestamps or environment-dependent metadata, so identical
inputs produce identical PNG bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schema import SchemaError, read_diagnostics, read_snapshot, read_summary

KINDS = ("decay", "snapshot", "overlay", "sweep")

_STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "svg.hashsalt": "smolfig",
}

_LEVEL_COLORS = plt.cm.viridis


@dataclass(frozen=True)
class FigureJob:
    """One rendering request: inputs, kind, output path, style options."""

    kind: str
    inputs: tuple[str, ...]
    output: str
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; "
                              f"expected one of {KINDS}")
        if not self.inputs:
            raise SchemaError("no input files given")


def _save(fig, path: str) -> None:
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def _level_color(m: int, M: int):
    return _LEVEL_COLORS(0.15 + 0.7 * (m - 1) / max(1, M - 1))


def _render_decay(job: FigureJob):
    if len(job.inputs) != 1:
        raise SchemaError("decay figure takes exactly one diagnostics.csv")
    diag = read_diagnostics(job.inputs[0])
    fig, (ax_mass, ax_exp) = plt.subplots(1, 2, figsize=(8.2, 3.2),
                                          constrained_layout=True)
    ax_mass.set_title("weighted mass")
    ax_mass.set_xlabel("t")
    if len(diag.t):
        ax_mass.plot(diag.t, diag.T, color="k", label="T")
        for m in range(1, diag.M + 1):
            ax_mass.plot(diag.t, diag.mass[:, m - 1],
                         color=_level_color(m, diag.M), label=f"m={m}")
        ax_mass.legend(loc="best", fontsize=7)
    ax_exp.set_title("expelled mass")
    ax_exp.set_xlabel("t")
    if len(diag.t):
        ax_exp.plot(diag.t, diag.expelled, color="tab:red")
    return fig


def _render_snapshot(job: FigureJob):
    snaps = [read_snapshot(p) for p in job.inputs]
    if any(s.d != 1 for s in snaps):
        raise SchemaError("snapshot figures support one velocity dimension")
    fig, ax = plt.subplots(figsize=(5.2, 3.4), constrained_layout=True)
    ax.set_xlabel("v")
    ax.set_ylabel("f")
    M = max((s.level or 1) for s in snaps)
    for s in snaps:
        label = s.path.rsplit("/", 1)[-1]
        if s.level is not None and s.time is not None:
            label = f"m={s.level}, t={s.time:g}"
        ax.plot(s.points[:, 0], s.values,
                color=_level_color(s.level or 1, M), label=label)
    ax.legend(loc="best", fontsize=7)
    return fig


def _render_overlay(job: FigureJob):
    if len(job.inputs) % 2 != 0:
        raise SchemaError(
            f"overlay needs matching solver/particle snapshot pairs, got "
            f"{len(job.inputs)} inputs (levels mismatch)"
        )
    half = len(job.inputs) // 2
    pde = [read_snapshot(p) for p in job.inputs[:half]]
    emp = [read_snapshot(p) for p in job.inputs[half:]]
    n_particles = job.options.get("particles_n")
    fig, axes = plt.subplots(1, half, figsize=(3.4 * half, 3.2),
                             constrained_layout=True, squeeze=False)
    for ax, a, b in zip(axes[0], pde, emp):
        if a.d != 1 or b.d != 1:
            raise SchemaError("overlay figures support one velocity dimension")
        if a.points.shape != b.points.shape or not np.array_equal(
                a.points, b.points):
            raise SchemaError(
                f"overlay grids differ between {a.path} and {b.path}"
            )
        if (a.level, b.level) != (None, None) and a.level != b.level:
            raise SchemaError(
                f"overlay level mismatch: {a.path} is m={a.level}, "
                f"{b.path} is m={b.level}"
            )
        x = a.points[:, 0]
        h = float(x[1] - x[0]) if len(x) > 1 else 1.0
        ax.plot(x, a.values, color="k", label="solver")
        ax.plot(x, b.values, color="tab:orange", lw=1.0, label="particles")
        if n_particles:
            se = np.sqrt(np.maximum(b.values, 0.0) / (n_particles * h))
            ax.fill_between(x, b.values - 2 * se, b.values + 2 * se,
                            color="tab:orange", alpha=0.25,
                            label="sampling 2se")
        title = f"m={a.level}" if a.level is not None else ""
        if a.time is not None:
            title += f"  t={a.time:g}"
        ax.set_title(title)
        ax.set_xlabel("v")
        ax.legend(loc="best", fontsize=7)
    return fig


def _render_sweep(job: FigureJob):
    summary = read_summary(job.inputs[0])
    diags = [read_diagnostics(p) for p in job.inputs[1:]]
    if len(diags) != len(summary.kappa):
        raise SchemaError(
            f"sweep needs one diagnostics.csv per summary row: summary has "
            f"{len(summary.kappa)} rows, got {len(diags)} diagnostics files"
        )
    n = len(diags)
    fig, axes = plt.subplots(1, n + 1, figsize=(3.0 * (n + 1), 3.0),
                             constrained_layout=True, squeeze=False)
    for ax, kappa, diag in zip(axes[0], summary.kappa, diags):
        ax.set_title(f"kappa={kappa:g}")
        ax.set_xlabel("t")
        ax.plot(diag.t, diag.T, color="k", label="T")
        ax.plot(diag.t, diag.expelled, color="tab:red", label="expelled")
        ax.legend(loc="best", fontsize=7)
    ax = axes[0][-1]
    ax.set_title("expelled at t_end")
    ax.set_xlabel("kappa")
    ax.set_xscale("log")
    ax.plot(summary.kappa, summary.expelled, "o-", color="tab:red")
    return fig


_RENDERERS = {
    "decay": _render_decay,
    "snapshot": _render_snapshot,
    "overlay": _render_overlay,
    "sweep": _render_sweep,
}


def render(job: FigureJob) -> str:
    """Render one figure job to its output path; returns the path."""
    job.validate()
    with plt.rc_context(_STYLE):
        fig = _RENDERERS[job.kind](job)
        _save(fig, job.output)
    return job.output
