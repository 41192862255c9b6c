"""Shared fixtures and the independent reference collision operator."""

from __future__ import annotations

import numpy as np
import pytest

from smolvel.collision import DensitySet
from smolvel.params import Params, build_grid, cross_section


def reference_collision(f: DensitySet, params: Params, R: float | None = None):
    """Triple-loop constraint-set evaluation of Q, d=1 only.

    Plain-float arithmetic over every ordered (level, level, cell, cell)
    tuple with no shared precomputation; the deposition scheme must match
    this per cell.  Returns (Q fields, expelled mass rate, pair flux).
    """
    assert params.d == 1, "reference oracle is one-dimensional"
    grid = f.grid
    M = params.M
    n = grid.n_cells
    c = grid.centers_1d
    hd = grid.cell_volume
    Q = np.zeros((M, n))
    expelled = 0.0
    flux = 0.0
    fa = f.fields.reshape(M, n)

    def chi(v: float) -> float:
        return 1.0 if R is None or v * v <= R * R else 0.0

    for nl in range(1, M + 1):
        for kl in range(1, M + 1):
            s = cross_section(nl, kl, params)
            for a in range(n):
                for b in range(n):
                    F = (s * fa[nl - 1, a] * fa[kl - 1, b]
                         * abs(c[a] - c[b]) * hd * hd * chi(c[a]) * chi(c[b]))
                    if F == 0.0:
                        continue
                    flux += F
                    Q[nl - 1, a] -= F / hd
                    Q[kl - 1, b] -= F / hd
                    if nl + kl <= M:
                        vs = (nl * c[a] + kl * c[b]) / (nl + kl)
                        xi = (vs - c[0]) / grid.h
                        i0 = min(max(int(np.floor(xi)), 0), grid.G - 2)
                        th = min(max(xi - i0, 0.0), 1.0)
                        Q[nl + kl - 1, i0] += F * (1.0 - th) / hd
                        Q[nl + kl - 1, i0 + 1] += F * th / hd
                    else:
                        expelled += (nl + kl) * F
    return Q, expelled, flux


@pytest.fixture
def params_small():
    return Params(d=1, M=3, V=8.0, G=16)


@pytest.fixture
def grid_small(params_small):
    return build_grid(params_small)


def two_bump(M: int, grid, mass: float = 0.5) -> DensitySet:
    """Level-1 cell-integrated masses at the centers nearest v = -1, +1."""
    f = DensitySet.zeros(M, grid)
    i_minus = int(np.argmin(np.abs(grid.centers_1d + 1.0)))
    i_plus = int(np.argmin(np.abs(grid.centers_1d - 1.0)))
    f.fields[0, i_minus] = mass / grid.cell_volume
    f.fields[0, i_plus] = mass / grid.cell_volume
    return f


def random_density(M: int, grid, rng: np.random.Generator,
                   scale: float = 1.0) -> DensitySet:
    return DensitySet(scale * rng.random((M,) + grid.shape), grid)
