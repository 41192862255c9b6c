"""Monitored functionals: masses, weighted moments, energies, distances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collision import DensitySet
from .params import DomainError, Params

#: largest tracked moment order; beyond this the truncated box and double
#: precision make the values meaningless
MAX_MOMENT_ORDER = 6


@dataclass
class DiagnosticsRow:
    """One time sample of every monitored functional."""

    t: float
    mass: np.ndarray            # (M,) per-level masses
    T: float                    # sum_m m * mass[m]
    expelled_cumulative: float
    leakage_cumulative: float   # m-weighted OU boundary loss
    momentum: np.ndarray        # (d,) sum_m m * int v f_m
    moment2: float              # sum_m int |v|^2 f_m
    l2_energy: float            # sum_m int f_m^2
    h1_seminorm: float          # sum_m int |grad_h f_m|^2
    dist_ref: float             # L^1(<v>^2) distance to the reference state
    moment_k: dict[int, float] = field(default_factory=dict)
    weighted_l2_k: dict[int, float] = field(default_factory=dict)


def weighted_l1_distance(f: DensitySet, g: DensitySet, k: int) -> float:
    """sum_m int |f_m - g_m| <v>^k dv on matching grids."""
    if f.grid.shape != g.grid.shape or f.grid.V != g.grid.V or f.M != g.M:
        raise DomainError("weighted_l1_distance requires matching grids")
    w = f.grid.weight(k)
    diff = np.abs(f.fields - g.fields)
    return float((diff * w).sum() * f.grid.cell_volume)


def _h1_seminorm(f: DensitySet) -> float:
    grid = f.grid
    total = 0.0
    for m in range(f.M):
        sq = np.zeros(grid.shape)
        for ax in range(grid.d):
            sq += np.gradient(f.fields[m], grid.h, axis=ax) ** 2
        total += sq.sum()
    return total * grid.cell_volume


def compute_row(state, params: Params,
                reference: DensitySet | None = None,
                moment_orders: tuple[int, ...] = (),
                weighted_l2_orders: tuple[int, ...] = ()) -> DiagnosticsRow:
    """All functionals of one solver state by midpoint quadrature.

    ``state`` needs attributes t, f, expelled_cumulative and
    leakage_cumulative (SolverState in the integrator, or the particle
    module's empirical wrapper).
    """
    f: DensitySet = state.f
    grid = f.grid
    hd = grid.cell_volume
    M = f.M
    levels = np.arange(1, M + 1, dtype=float)

    mass = f.masses()
    T = float(levels @ mass)
    r2 = grid.radii_sq()
    moment2 = float(sum((f.fields[m] * r2).sum() for m in range(M)) * hd)

    momentum = np.zeros(grid.d)
    for ax in range(grid.d):
        sh = [1] * grid.d
        sh[ax] = grid.G
        vax = grid.centers_1d.reshape(sh)
        momentum[ax] = sum(
            (m + 1) * (f.fields[m] * vax).sum() for m in range(M)
        ) * hd

    l2 = float((f.fields**2).sum() * hd)

    mk: dict[int, float] = {}
    for k in moment_orders:
        if not 0 < k <= MAX_MOMENT_ORDER:
            raise DomainError(f"moment order {k} outside 1..{MAX_MOMENT_ORDER}")
        mk[k] = float(sum((f.fields[m] * r2 ** (k / 2.0)).sum()
                          for m in range(M)) * hd)

    wl2: dict[int, float] = {}
    for k in weighted_l2_orders:
        w2k = grid.weight(2 * k)
        wl2[k] = float(sum((f.fields[m] ** 2 * w2k).sum()
                           for m in range(M)) * hd)

    dist = 0.0 if reference is None else weighted_l1_distance(f, reference, 2)

    return DiagnosticsRow(
        t=state.t,
        mass=mass,
        T=T,
        expelled_cumulative=state.expelled_cumulative,
        leakage_cumulative=state.leakage_cumulative,
        momentum=momentum,
        moment2=moment2,
        l2_energy=l2,
        h1_seminorm=_h1_seminorm(f),
        dist_ref=dist,
        moment_k=mk,
        weighted_l2_k=wl2,
    )
