"""Discrete coagulation operator with exact mass/momentum bookkeeping.

The nonlinearity is evaluated by pair deposition: every ordered pair of
mass levels (n, k) and ordered pair of cells (a, b) carries a number flux

    F = s(n, k) f_n(v_a) g_k(v_b) |v_a - v_b| h^(2d).

A tuple with n+k <= M deposits F into level n+k at the momentum-conserving
merge velocity v* = (n v_a + k v_b)/(n+k) with cloud-in-cell weights; a
tuple with n+k > M removes both reactants and its weighted mass (n+k) F is
tallied as expelled.  The loss field carries the conventional factor 2,
which is exactly the ordered-pair double counting: each ordered tuple
consumes F from its first slot and F from its second slot, so no extra
factor ever multiplies the gain.  This makes

    sum_m m <Q_m> + expelled_mass_rate = 0

an accounting identity rather than an inequality.

Truncation at radius R multiplies the flux by the reactant-side indicators
chi_R(v_a) chi_R(v_b); the merged velocity is never masked, so truncated
runs keep the exact ledger.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import DomainError, Params, VelocityGrid, WeightedNormSpec, cross_section, weighted_norm

#: largest cell count for which the dense pair-distance matrix is cached
_DENSE_CACHE_LIMIT = 4096

#: element budget of one pair-loop chunk
_CHUNK_ELEMS = 1 << 21

_distance_cache: dict[tuple[int, int, float], np.ndarray] = {}


@dataclass
class DensitySet:
    """State {f_m}_{m=1..M}: M nonnegative density fields on one grid.

    ``fields`` has shape (M,) + grid.shape; values are probability densities
    in velocity.
    """

    fields: np.ndarray
    grid: VelocityGrid

    @classmethod
    def zeros(cls, M: int, grid: VelocityGrid) -> "DensitySet":
        return cls(np.zeros((M,) + grid.shape), grid)

    @property
    def M(self) -> int:
        return self.fields.shape[0]

    def copy(self) -> "DensitySet":
        return DensitySet(self.fields.copy(), self.grid)

    def masses(self) -> np.ndarray:
        """Per-level discrete masses, shape (M,)."""
        return self.fields.reshape(self.M, -1).sum(axis=1) * self.grid.cell_volume

    def validate(self, tol: float = 1.0e-14) -> None:
        if not np.all(np.isfinite(self.fields)):
            raise DomainError("density fields contain non-finite values")
        low = float(self.fields.min(initial=0.0))
        if low < -tol:
            raise DomainError(f"density field negative beyond tolerance: {low}")


@dataclass
class GainBookkeeping:
    """Tallies produced alongside the gain fields by one pair sweep."""

    deposited_number_rate: np.ndarray  # (M,), indexed by level-1
    expelled_mass_rate: float
    expelled_momentum_rate: np.ndarray  # (d,)
    pair_flux_total: float


@dataclass
class CollisionOutput:
    """Q fields plus the exact weighted-mass/momentum accounting."""

    Q: np.ndarray  # (M,) + grid.shape
    expelled_mass_rate: float
    expelled_momentum_rate: np.ndarray  # (d,)
    pair_flux_total: float


def truncation_mask(grid: VelocityGrid, R: float | None) -> np.ndarray | None:
    """Indicator of the closed ball |v| <= R on the cells, or None."""
    if R is None:
        return None
    return (grid.radii_sq().ravel() <= R * R).astype(float)


def _pair_distances(grid: VelocityGrid, rows: slice) -> np.ndarray:
    """|v_a - v_b| for a in ``rows``, all b; dense-cached for small grids."""
    key = (grid.d, grid.G, grid.V)
    full = _distance_cache.get(key)
    if full is None and grid.n_cells <= _DENSE_CACHE_LIMIT:
        c = grid.centers()
        diff = c[:, None, :] - c[None, :, :]
        full = np.sqrt(np.sum(diff * diff, axis=-1))
        _distance_cache[key] = full
    if full is not None:
        return full[rows]
    c = grid.centers()
    diff = c[rows, None, :] - c[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _row_chunks(n_cells: int):
    step = max(1, _CHUNK_ELEMS // n_cells)
    for start in range(0, n_cells, step):
        yield slice(start, min(start + step, n_cells))


def _cic_deposit(points: np.ndarray, weights: np.ndarray, grid: VelocityGrid,
                 out_flat: np.ndarray) -> None:
    """Scatter point weights onto the lattice with multilinear weights.

    Points must lie inside the hull of the cell centers (the collision merge
    velocity always does: it is a convex combination of centers).  Total
    weight and first moment are preserved exactly.
    """
    origin = -grid.V + 0.5 * grid.h
    x = (points - origin) / grid.h
    i0 = np.floor(x).astype(np.int64)
    np.clip(i0, 0, grid.G - 2, out=i0)
    frac = x - i0
    np.clip(frac, 0.0, 1.0, out=frac)
    d = grid.d
    for corner in range(1 << d):
        idx = np.zeros(len(points), dtype=np.int64)
        w = weights.copy()
        for ax in range(d):
            bit = (corner >> ax) & 1
            idx = idx * grid.G + (i0[:, ax] + bit)
            w = w * (frac[:, ax] if bit else 1.0 - frac[:, ax])
        np.add.at(out_flat, idx, w)


def _section_matrix(params: Params) -> np.ndarray:
    """s(n, m) for n, m = 1..M, shape (M, M)."""
    M = params.M
    S = np.empty((M, M))
    for n in range(1, M + 1):
        for m in range(n, M + 1):
            S[n - 1, m - 1] = S[m - 1, n - 1] = cross_section(n, m, params)
    return S


def interaction_potentials(g: DensitySet, R: float | None = None) -> np.ndarray:
    """psi_n(a) = sum_b g_n(v_b) |v_a - v_b| h^d, masked reactant side.

    Shape (M, n_cells).  This is the O(M G^(2d)) inner sum shared by the
    loss field, the stability bound and the pair flux.
    """
    grid = g.grid
    n = grid.n_cells
    geff = g.fields.reshape(g.M, n)
    mask = truncation_mask(grid, R)
    if mask is not None:
        geff = geff * mask
    psi = np.empty((g.M, n))
    for rows in _row_chunks(n):
        D = _pair_distances(grid, rows)
        psi[:, rows] = geff @ D.T
    return psi * grid.cell_volume


def loss_rate_coefficients(g: DensitySet, params: Params,
                           R: float | None = None) -> np.ndarray:
    """Per-density local loss rates lambda_m(v_a) = 2 sum_n s(n,m) psi_n(a).

    L_m = lambda_m * f_m.  Shape (M,) + grid.shape.
    """
    psi = interaction_potentials(g, R)
    S = _section_matrix(params)
    lam = 2.0 * (S @ psi)
    mask = truncation_mask(g.grid, R)
    if mask is not None:
        lam = lam * mask
    return lam.reshape((params.M,) + g.grid.shape)


def loss_field(f: DensitySet, params: Params, R: float | None = None,
               g: DensitySet | None = None) -> np.ndarray:
    """Loss rate fields L_m = 2 chi f_m sum_n s(n,m) psi_n[g]."""
    lam = loss_rate_coefficients(g if g is not None else f, params, R)
    return f.fields * lam


def gain_deposit(f: DensitySet, params: Params, R: float | None = None,
                 g: DensitySet | None = None) -> tuple[np.ndarray, GainBookkeeping]:
    """Pair-deposition gain fields and the event bookkeeping.

    Returns density-rate fields of shape (M,) + grid.shape and the tallies
    for deposited number rates, expelled weighted mass/momentum and the
    total event rate.
    """
    if g is None:
        g = f
    grid = f.grid
    M = params.M
    n_cells = grid.n_cells
    centers = grid.centers()
    mask = truncation_mask(grid, R)
    fa = f.fields.reshape(M, n_cells)
    ga = g.fields.reshape(M, n_cells)
    if mask is not None:
        fa = fa * mask
        ga = ga * mask
    h2d = grid.cell_volume**2

    gain_number = np.zeros((M, n_cells))
    deposited = np.zeros(M)
    expelled_mass = 0.0
    expelled_momentum = np.zeros(grid.d)
    flux_total = 0.0

    for n_lvl in range(1, M + 1):
        for k_lvl in range(1, M + 1):
            s = cross_section(n_lvl, k_lvl, params)
            merged = n_lvl + k_lvl
            wn = float(n_lvl) / merged
            wk = float(k_lvl) / merged
            for rows in _row_chunks(n_cells):
                D = _pair_distances(grid, rows)
                F = (s * h2d) * fa[n_lvl - 1, rows, None] * ga[k_lvl - 1, None, :] * D
                fsum = float(F.sum())
                flux_total += fsum
                if merged <= M:
                    vstar = (wn * centers[rows, None, :]
                             + wk * centers[None, :, :])
                    _cic_deposit(vstar.reshape(-1, grid.d), F.ravel(), grid,
                                 gain_number[merged - 1])
                    deposited[merged - 1] += fsum
                else:
                    expelled_mass += merged * fsum
                    expelled_momentum += (n_lvl * (F.sum(axis=1) @ centers[rows])
                                          + k_lvl * (F.sum(axis=0) @ centers))

    gain = gain_number.reshape((M,) + grid.shape) / grid.cell_volume
    book = GainBookkeeping(
        deposited_number_rate=deposited,
        expelled_mass_rate=expelled_mass,
        expelled_momentum_rate=expelled_momentum,
        pair_flux_total=flux_total,
    )
    return gain, book


def collision_operator(f: DensitySet, params: Params, R: float | None = None,
                       g: DensitySet | None = None) -> CollisionOutput:
    """Q_m(f, g) = gain_m - L_m with exact expelled-mass accounting.

    With g omitted this is the quadratic operator Q(f, f); passing a second
    argument evaluates the bilinear form used by the distributivity checks.
    """
    gain, book = gain_deposit(f, params, R, g)
    loss = loss_field(f, params, R, g)
    return CollisionOutput(
        Q=gain - loss,
        expelled_mass_rate=book.expelled_mass_rate,
        expelled_momentum_rate=book.expelled_momentum_rate,
        pair_flux_total=book.pair_flux_total,
    )


def nonlinearity_bound_ratio(f: DensitySet, spec: WeightedNormSpec,
                             params: Params) -> float:
    """||Q(f,f)||_{p,M,k} / (||f||_{p,M,k+1} ||f||_{1,M,k+1}), a diagnostic.

    The denominator pairs one norm at the requested exponent with one L^1
    norm, both at weight k+1.
    """
    up = WeightedNormSpec(spec.p, spec.k + 1)
    one = WeightedNormSpec(1, spec.k + 1)
    den_p = sum(weighted_norm(f.fields[m], up, f.grid) for m in range(f.M))
    den_1 = sum(weighted_norm(f.fields[m], one, f.grid) for m in range(f.M))
    if den_p == 0.0 or den_1 == 0.0:
        raise DomainError("nonlinearity ratio undefined for zero density")
    out = collision_operator(f, params)
    num = sum(weighted_norm(out.Q[m], spec, f.grid) for m in range(f.M))
    return num / (den_p * den_1)


def stability_dt(f: DensitySet, params: Params, R: float | None = None,
                 dt_max: float | None = None) -> float:
    """Largest collision step that cannot drive an occupied cell negative.

    Returns 0.5 / max lambda_m(v_a) over cells where f_m > 0 (unoccupied
    cells feel no loss).  An empty density has no constraint and returns
    ``dt_max`` (defaults to the configured dt, else the package maximum).
    """
    from .params import DEFAULT_MAX_DT

    if dt_max is None:
        dt_max = params.dt if params.dt is not None else DEFAULT_MAX_DT
    lam = loss_rate_coefficients(f, params, R)
    occupied = f.fields > 0.0
    if not occupied.any():
        return dt_max
    lam_max = float(lam[occupied].max())
    if lam_max <= 0.0:
        return dt_max
    return 0.5 / lam_max
