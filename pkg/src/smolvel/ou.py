"""Exact one-step solve of the linear drift-diffusion part.

One step of duration tau advances  d_t f = c div(v f) + kappa c^2 lap f,
whose solution is the pushforward of f under the linear map v -> exp(-c
tau) v followed by a Gaussian blur of per-axis variance sigma^2(tau) =
kappa c (1 - exp(-2 c tau)).  Both stages are folded into a single
separable transition matrix

    W[a, b] = N(x_a; exp(-c tau) x_b, sigma^2(tau)),

sampled on the grid, truncated at 8 sigma and column-normalized so that
each source cell deposits exactly its analytic in-box mass fraction.  All
weights are nonnegative, so positivity is exact; mass is conserved up to
the reported boundary leakage by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .params import DomainError, VelocityGrid

#: minimum blur width, in cell units, for a resolved step
_MIN_SIGMA_CELLS = 0.5

_KERNEL_CUTOFF_SIGMAS = 8.0

_matrix_cache: dict[tuple, np.ndarray] = {}
_MATRIX_CACHE_LIMIT = 64


class StepRefusedError(RuntimeError):
    """OU step refused: the Gaussian blur is narrower than the grid resolves.

    ``min_pool_steps`` is the smallest number of steps of this duration
    that must be pooled into one resolved step (None if even the
    stationary width is below resolution, i.e. the grid is too coarse).
    """

    def __init__(self, sigma: float, h: float, min_pool_steps: int | None):
        self.sigma = sigma
        self.h = h
        self.min_pool_steps = min_pool_steps
        hint = (f"pool >= {min_pool_steps} steps" if min_pool_steps
                else "grid too coarse for this diffusivity")
        super().__init__(
            f"under-resolved blur: sigma={sigma:.3e} < {_MIN_SIGMA_CELLS} h"
            f" (h={h:.3e}); {hint}"
        )


@dataclass(frozen=True)
class OUStepSpec:
    """Step duration tau, level coefficient c, diffusivity kappa."""

    tau: float
    c: float
    kappa: float

    def __post_init__(self):
        if self.tau < 0:
            raise DomainError(f"tau must be >= 0, got {self.tau}")
        if self.c <= 0:
            raise DomainError(f"c must be > 0, got {self.c}")
        if self.kappa <= 0:
            raise DomainError(f"kappa must be > 0, got {self.kappa}")


def ou_variance(spec: OUStepSpec) -> float:
    """Per-axis blur variance sigma^2(tau) = kappa c (1 - exp(-2 c tau))."""
    return spec.kappa * spec.c * (-math.expm1(-2.0 * spec.c * spec.tau))


def min_resolved_tau(c: float, kappa: float, h: float) -> float | None:
    """Smallest tau with sigma(tau) >= h/2, or None if unreachable."""
    ratio = h * h / (4.0 * kappa * c)
    if ratio >= 1.0:
        return None
    return -math.log1p(-ratio) / (2.0 * c)


def _axis_matrix(grid: VelocityGrid, spec: OUStepSpec) -> np.ndarray:
    """One-axis transition matrix acting on density samples."""
    key = (grid.G, grid.V, spec.c, spec.kappa, spec.tau)
    cached = _matrix_cache.get(key)
    if cached is not None:
        return cached
    x = grid.centers_1d
    s = math.exp(-spec.c * spec.tau)
    sig = math.sqrt(ou_variance(spec))
    mu = s * x
    diff = x[:, None] - mu[None, :]
    K = np.exp(-(diff * diff) / (2.0 * sig * sig))
    K[np.abs(diff) > _KERNEL_CUTOFF_SIGMAS * sig] = 0.0
    colsum = K.sum(axis=0)
    frac = ndtr((grid.V - mu) / sig) - ndtr((-grid.V - mu) / sig)
    W = K * (frac / colsum)[None, :]
    if len(_matrix_cache) >= _MATRIX_CACHE_LIMIT:
        _matrix_cache.pop(next(iter(_matrix_cache)))
    _matrix_cache[key] = W
    return W


def ou_step(field: np.ndarray, spec: OUStepSpec, grid: VelocityGrid,
            enforce_resolution: bool = True) -> tuple[np.ndarray, float]:
    """Advance one density field by one exact OU step.

    Returns the new field and the mass fraction lost through the box
    boundary (in absolute mass units, >= 0).  Raises
    :class:`StepRefusedError` when sigma(tau) < 0.5 h unless
    ``enforce_resolution`` is switched off (the tau -> 0 identity limit).
    """
    if field.shape != grid.shape:
        raise DomainError(
            f"field shape {field.shape} does not match grid {grid.shape}"
        )
    if not np.all(np.isfinite(field)):
        raise DomainError("OU step input contains non-finite values")
    if spec.tau == 0.0:
        return field.copy(), 0.0
    sig = math.sqrt(ou_variance(spec))
    # tolerant comparison so a pooled step solving sigma = h/2 exactly passes
    if enforce_resolution and sig < _MIN_SIGMA_CELLS * grid.h * (1.0 - 1e-12):
        tau_min = min_resolved_tau(spec.c, spec.kappa, grid.h)
        pool = None if tau_min is None else max(1, math.ceil(tau_min / spec.tau))
        raise StepRefusedError(sig, grid.h, pool)
    W = _axis_matrix(grid, spec)
    out = field
    for ax in range(grid.d):
        out = np.moveaxis(np.tensordot(W, out, axes=([1], [ax])), 0, ax)
    mass_in = float(field.sum()) * grid.cell_volume
    mass_out = float(out.sum()) * grid.cell_volume
    return out, max(0.0, mass_in - mass_out)
