"""Physical parameters, model coefficients, velocity grid and weighted norms.

Everything here is immutable and pure; the rest of the package builds on
these primitives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: default cap for the automatic time step when the density is (nearly) empty
DEFAULT_MAX_DT = 0.1

#: tolerance used when clipping round-off negatives in density fields
NEGATIVITY_TOL = 1.0e-14


class DomainError(ValueError):
    """Raised when an argument violates a documented precondition."""


@dataclass(frozen=True)
class Params:
    """Physical and numerical configuration of a run.

    ``dt`` and ``R`` may be ``None``, meaning "auto" and "infinite"
    respectively.  ``V`` is the velocity-box half-width; the grid covers
    ``(-V, V)^d`` with ``G`` cells per axis.
    """

    d: int = 1
    M: int = 3
    alpha: float = 1.0
    kappa: float = 1.0
    mu: float = 1.0
    V: float = 8.0
    G: int = 256
    dt: float | None = None
    t_end: float = 1.0
    R: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise DomainError(f"d must be 1, 2 or 3, got {self.d}")
        if self.M < 1:
            raise DomainError(f"M must be >= 1, got {self.M}")
        if self.alpha <= 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if self.kappa <= 0:
            raise DomainError(f"kappa must be > 0, got {self.kappa}")
        if self.mu < 0:
            raise DomainError(f"mu must be >= 0, got {self.mu}")
        if self.V <= 0:
            raise DomainError(f"V must be > 0, got {self.V}")
        if self.G < 2:
            raise DomainError(f"G must be >= 2, got {self.G}")
        if self.dt is not None and self.dt <= 0:
            raise DomainError(f"dt must be > 0 or auto, got {self.dt}")
        if self.t_end < 0:
            raise DomainError(f"t_end must be >= 0, got {self.t_end}")
        if self.R is not None:
            if self.R <= 0:
                raise DomainError(f"R must be > 0 or infinite, got {self.R}")
            if self.R > self.V:
                raise DomainError(
                    f"truncation exceeds box: R={self.R} > V={self.V}"
                )


def auto_box_halfwidth(d: int, alpha: float, kappa: float) -> float:
    """Default box half-width: 8 stationary standard deviations, rounded up.

    The stationary per-axis variance of the linear drift-diffusion part is
    ``kappa * c(m)``, largest at m=1 where ``c(1) = alpha``.
    """
    return float(math.ceil(8.0 * math.sqrt(kappa * alpha)))


def stokes_coefficient(m: int, params: Params) -> float:
    """Drag coefficient of mass level ``m``: alpha * m**((1-d)/d)."""
    if not 1 <= m <= params.M:
        raise DomainError(f"mass level {m} outside 1..{params.M}")
    return params.alpha * float(m) ** ((1.0 - params.d) / params.d)


def cross_section(n: int, m: int, params: Params) -> float:
    """Collision cross-section (n**(1/d) + m**(1/d))**(d-1); symmetric."""
    if n < 1 or m < 1:
        raise DomainError(f"mass levels must be >= 1, got ({n}, {m})")
    d = params.d
    return (float(n) ** (1.0 / d) + float(m) ** (1.0 / d)) ** (d - 1)


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cell-centered Cartesian lattice on (-V, V)^d.

    ``centers_1d`` holds the per-axis center coordinates; full d-dimensional
    centers are the Cartesian product, flattened C-order into shape
    ``(G**d, d)`` by :meth:`centers`.
    """

    d: int
    G: int
    V: float
    centers_1d: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 2.0 * self.V / self.G

    @property
    def n_cells(self) -> int:
        return self.G**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.G,) * self.d

    def centers(self) -> np.ndarray:
        """All cell centers, shape (G**d, d), C-order over axes."""
        axes = np.meshgrid(*([self.centers_1d] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def radii_sq(self) -> np.ndarray:
        """|v|^2 at every cell, shape (G,)*d."""
        r2 = np.zeros(self.shape)
        for ax in range(self.d):
            sh = [1] * self.d
            sh[ax] = self.G
            r2 = r2 + (self.centers_1d**2).reshape(sh)
        return r2

    def weight(self, k: int) -> np.ndarray:
        """<v>^k = (1+|v|^2)^(k/2) at every cell, shape (G,)*d."""
        return (1.0 + self.radii_sq()) ** (k / 2.0)


def build_grid(params: Params) -> VelocityGrid:
    """Cell-centered grid with h = 2V/G; origin-symmetric by construction."""
    h = 2.0 * params.V / params.G
    centers = -params.V + (np.arange(params.G) + 0.5) * h
    # force exact mirror symmetry despite FP accumulation
    centers = 0.5 * (centers - centers[::-1])
    centers.setflags(write=False)
    return VelocityGrid(d=params.d, G=params.G, V=params.V, centers_1d=centers)


@dataclass(frozen=True)
class WeightedNormSpec:
    """Weighted Lebesgue norm: exponent p in {1,2,inf}, weight power k >= 0."""

    p: float
    k: int

    def __post_init__(self):
        if self.p not in (1, 2, math.inf):
            raise DomainError(f"p must be 1, 2 or inf, got {self.p}")
        if self.k < 0:
            raise DomainError(f"k must be >= 0, got {self.k}")


def weighted_norm(field_: np.ndarray, spec: WeightedNormSpec, grid: VelocityGrid) -> float:
    """Discrete weighted L^p norm of one grid field.

    Midpoint quadrature: (sum |f|^p <v>^(pk) h^d)^(1/p), or the weighted
    max for p = inf.
    """
    if field_.shape != grid.shape:
        raise DomainError(
            f"field shape {field_.shape} does not match grid {grid.shape}"
        )
    w = grid.weight(spec.k)
    if spec.p == math.inf:
        return float(np.max(np.abs(field_) * w))
    vals = np.abs(field_) ** spec.p * w**spec.p
    return float((np.sum(vals) * grid.cell_volume) ** (1.0 / spec.p))
