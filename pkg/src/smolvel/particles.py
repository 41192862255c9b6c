"""Monte Carlo twin of the kinetic solver.

Each active particle carries a mass level in {1..M} and a velocity;
between coagulations velocities follow the Stokes-drag diffusion

    dv_i = c(m_i) (-v_i dt + sqrt(2 mu) dB_i + sum_k sigma_k dW^k)

with per-particle Brownian motions and an optional shared (common-noise)
increment per constant field sigma_k.  An unordered pair coagulates in one
step with probability 1 - exp(-2 lambda_ij dt_p), where lambda_ij =
s(m_i, m_j) |v_i - v_j| / N, times a compactly supported spatial factor in
spatial mode.  Merges conserve momentum; merged masses above M leave the
system and are tallied.

Three sweep strategies share the same per-pair law: the O(N^2) reference
(every pair gets a Bernoulli draw), a majorant-thinned mean-field sweep
for large N, and a cell-list sweep in spatial mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .collision import DensitySet, _cic_deposit
from .config import ConfigError, InitSpec, ParticleConfig
from .diagnostics import compute_row
from .params import DomainError, Params, VelocityGrid, cross_section, stokes_coefficient

#: mean-field sweeps at or below this active count use the exact reference
EXACT_SWEEP_LIMIT = 2048

#: accuracy guards
_EM_DRIFT_LIMIT = 0.1
_PAIR_PROB_LIMIT = 0.1


@dataclass
class ParticleState:
    """Velocities, mass levels and activity flags of <= N particles."""

    v: np.ndarray                 # (N, d)
    m: np.ndarray                 # (N,) int64 mass levels
    active: np.ndarray            # (N,) bool
    x: np.ndarray | None          # (N, d) torus positions, spatial mode only
    expelled_mass: float
    rng: np.random.Generator
    N0: int

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def weighted_mass(self) -> float:
        """sum of active mass levels plus the expelled tally (exact ledger)."""
        return float(self.m[self.active].sum()) + self.expelled_mass


# --- interaction mollifier ------------------------------------------------
# theta(x) = C |x|^2 exp(-1/(1-|x|^2)) on |x| < 1: smooth, symmetric,
# compact support, theta(0) = 0, unit integral.

_SPHERE_SURFACE = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}
_theta_norms: dict[int, float] = {}
_section_tables: dict[tuple[int, int], np.ndarray] = {}


def _section_table(params: Params) -> np.ndarray:
    """s(n, m) lookup, shape (M, M), cached per (d, M)."""
    key = (params.d, params.M)
    tab = _section_tables.get(key)
    if tab is None:
        tab = np.array([
            [cross_section(n, m, params) for m in range(1, params.M + 1)]
            for n in range(1, params.M + 1)
        ])
        _section_tables[key] = tab
    return tab


def _bump_profile(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    out[inside] = ri * ri * np.exp(-1.0 / (1.0 - ri * ri))
    return out


def _theta_norm(d: int) -> float:
    norm = _theta_norms.get(d)
    if norm is None:
        integral, _ = quad(lambda r: float(_bump_profile(r)) * r ** (d - 1), 0.0, 1.0)
        norm = 1.0 / (_SPHERE_SURFACE[d] * integral)
        _theta_norms[d] = norm
    return norm


def theta_mollifier(x: np.ndarray, d: int) -> np.ndarray:
    """Unit-integral interaction bump; vanishes at 0 and outside |x| < 1."""
    r = np.sqrt(np.sum(np.atleast_2d(x) ** 2, axis=-1))
    return _theta_norm(d) * _bump_profile(r)


def _theta_peak(d: int) -> float:
    rr = np.linspace(0.0, 1.0, 4097)
    return float((_theta_norm(d) * _bump_profile(rr)).max())


# --- construction ---------------------------------------------------------

def sample_initial(init: InitSpec, N: int, seed: int, params: Params,
                   spatial: bool = False) -> ParticleState:
    """Draw N particles: levels i.i.d. from r(m), velocities from g_m."""
    if N < 2:
        raise ConfigError(f"N must be >= 2, got {N}")
    rng = np.random.default_rng(seed)
    r = np.asarray(init.level_weights, dtype=float)
    if abs(r.sum() - 1.0) > 1.0e-12 or (r < 0).any():
        raise ConfigError("invalid level weights")
    d = params.d
    levels = rng.choice(np.arange(1, params.M + 1), size=N, p=r / r.sum())
    v = np.empty((N, d))
    for m in range(1, params.M + 1):
        sel = levels == m
        count = int(sel.sum())
        if count == 0:
            continue
        mix = init.mixtures[m - 1]
        weights = np.array([c.weight for c in mix])
        comp_idx = rng.choice(len(mix), size=count, p=weights / weights.sum())
        draws = rng.standard_normal((count, d))
        means = np.array([c.mean for c in mix])
        sds = np.sqrt(np.array([c.var for c in mix]))
        v[sel] = means[comp_idx] + sds[comp_idx] * draws
    x = rng.random((N, d)) if spatial else None
    return ParticleState(v=v, m=levels.astype(np.int64),
                         active=np.ones(N, dtype=bool), x=x,
                         expelled_mass=0.0, rng=rng, N0=N)


# --- dynamics -------------------------------------------------------------

def em_step(state: ParticleState, config: ParticleConfig, params: Params,
            dt_p: float | None = None) -> ParticleState:
    """One Euler-Maruyama step of the velocity (and position) dynamics."""
    dt = config.dt_p if dt_p is None else dt_p
    c_max = max(stokes_coefficient(m, params) for m in range(1, params.M + 1))
    if dt * c_max > _EM_DRIFT_LIMIT:
        raise DomainError(
            f"dt_p*c = {dt * c_max:.3f} exceeds {_EM_DRIFT_LIMIT}; reduce dt_p"
        )
    act = state.active
    n = int(act.sum())
    if n == 0:
        return state
    rng = state.rng
    xi = rng.standard_normal((n, params.d))
    incr = math.sqrt(2.0 * config.mu * dt) * xi - state.v[act] * dt
    for sigma in config.common_noise:
        dw = rng.standard_normal() * math.sqrt(dt)
        incr = incr + np.asarray(sigma) * dw
    c_arr = np.array([stokes_coefficient(m, params)
                      for m in range(1, params.M + 1)])
    state.v[act] += c_arr[state.m[act] - 1, None] * incr
    if state.x is not None:
        state.x[act] = np.mod(state.x[act] + state.v[act] * dt, 1.0)
    return state


def _pair_probability_cap(state: ParticleState, config: ParticleConfig,
                          params: Params, dt: float) -> float:
    act = state.active
    if not act.any():
        return 0.0
    vmax = float(np.sqrt((state.v[act] ** 2).sum(axis=1)).max())
    s_max = cross_section(params.M, params.M, params)
    lam_max = s_max * 2.0 * vmax / state.N0
    if config.mode == "spatial":
        lam_max *= config.epsilon ** (-params.d) * _theta_peak(params.d)
    return -math.expm1(-2.0 * lam_max * dt)


def _merge(state: ParticleState, i: int, j: int, M: int) -> None:
    mi, mj = int(state.m[i]), int(state.m[j])
    msum = mi + mj
    if msum > M:
        state.active[i] = state.active[j] = False
        state.expelled_mass += msum
        return
    vstar = (mi * state.v[i] + mj * state.v[j]) / msum
    keep_i = state.rng.random() < mi / msum
    keep, drop = (i, j) if keep_i else (j, i)
    state.v[keep] = vstar
    state.m[keep] = msum
    state.active[drop] = False
    # position of the survivor is x_keep already (merge happens at x_i with
    # probability m_i/(m_i+m_j), else x_j)


def _process_pairs(state: ParticleState, pairs: np.ndarray, M: int) -> None:
    for i, j in pairs:
        if state.active[i] and state.active[j]:
            _merge(state, int(i), int(j), M)


def _sweep_exact(state: ParticleState, config: ParticleConfig, params: Params,
                 dt: float) -> None:
    """Reference sweep: independent Bernoulli per unordered active pair."""
    idx = np.flatnonzero(state.active)
    na = len(idx)
    if na < 2:
        return
    rng = state.rng
    v = state.v[idx]
    diff = v[:, None, :] - v[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1))
    stab = _section_table(params)
    levels = state.m[idx] - 1
    lam = stab[np.ix_(levels, levels)] * dist / state.N0
    if config.mode == "spatial":
        dx = np.abs(state.x[idx][:, None, :] - state.x[idx][None, :, :])
        dx = np.minimum(dx, 1.0 - dx)  # torus min-image
        lam = lam * (config.epsilon ** (-params.d)
                     * theta_mollifier(dx / config.epsilon, params.d))
    prob = -np.expm1(-2.0 * lam * dt)
    draws = rng.random((na, na))
    iu, ju = np.triu_indices(na, k=1)
    fired = draws[iu, ju] < prob[iu, ju]
    if not fired.any():
        return
    pairs = np.stack([idx[iu[fired]], idx[ju[fired]]], axis=1)
    order = rng.permutation(len(pairs))
    _process_pairs(state, pairs[order], params.M)


def _sweep_thinned(state: ParticleState, config: ParticleConfig,
                   params: Params, dt: float) -> None:
    """Mean-field sweep by majorant thinning; O(events), large-N path.

    Candidate pairs arrive at the capped rate and are accepted with the
    exact per-pair probability ratio, reproducing the reference's per-pair
    law up to the with-replacement sampling of candidates (an O(p^2)
    correction, same order as the tau-leaping bias).
    """
    idx = np.flatnonzero(state.active)
    na = len(idx)
    if na < 2:
        return
    rng = state.rng
    p_cap = _pair_probability_cap(state, config, params, dt)
    if p_cap <= 0.0:
        return
    n_pairs = na * (na - 1) // 2
    n_cand = int(rng.binomial(n_pairs, p_cap))
    if n_cand == 0:
        return
    cand = rng.integers(0, na, size=(n_cand, 2))
    accept_u = rng.random(n_cand)
    v0 = state.v.copy()  # rates from the pre-sweep snapshot
    m0 = state.m.copy()
    for (a, b), u in zip(cand, accept_u):
        if a == b:
            continue
        i, j = int(idx[a]), int(idx[b])
        if not (state.active[i] and state.active[j]):
            continue
        s = cross_section(int(m0[i]), int(m0[j]), params)
        lam = s * float(np.linalg.norm(v0[i] - v0[j])) / state.N0
        p_ij = -math.expm1(-2.0 * lam * dt)
        if u < p_ij / p_cap:
            _merge(state, i, j, params.M)


def _sweep_celllist(state: ParticleState, config: ParticleConfig,
                    params: Params, dt: float) -> None:
    """Spatial sweep over epsilon-neighbor candidates from torus cell lists.

    Pairs farther than epsilon have zero rate, so skipping them leaves the
    per-pair law identical to the reference sweep.
    """
    idx = np.flatnonzero(state.active)
    na = len(idx)
    if na < 2:
        return
    d = params.d
    ncell = max(1, int(math.floor(1.0 / config.epsilon)))
    if ncell < 3:
        _sweep_exact(state, config, params, dt)
        return
    rng = state.rng
    cells = np.floor(state.x[idx] * ncell).astype(np.int64) % ncell
    flat = np.zeros(na, dtype=np.int64)
    for ax in range(d):
        flat = flat * ncell + cells[:, ax]
    buckets: dict[int, list[int]] = {}
    for local, key in enumerate(flat):
        buckets.setdefault(int(key), []).append(local)

    offsets = []
    for code in range(3**d):
        off, c = [], code
        for _ in range(d):
            off.append(c % 3 - 1)
            c //= 3
        offsets.append(tuple(off))

    cand_i, cand_j = [], []
    for key, members in buckets.items():
        coords = []
        c = key
        for _ in range(d):
            coords.append(c % ncell)
            c //= ncell
        coords = coords[::-1]
        for off in offsets:
            nb = 0
            for ax in range(d):
                nb = nb * ncell + (coords[ax] + off[ax]) % ncell
            if nb < key:
                continue  # each cell pair visited once
            others = buckets.get(nb)
            if not others:
                continue
            if nb == key:
                for ia in range(len(members)):
                    for ib in range(ia + 1, len(members)):
                        cand_i.append(members[ia])
                        cand_j.append(members[ib])
            else:
                for a in members:
                    for b in others:
                        cand_i.append(a)
                        cand_j.append(b)
    if not cand_i:
        return
    ca = np.array(cand_i)
    cb = np.array(cand_j)
    gi, gj = idx[ca], idx[cb]
    dx = np.abs(state.x[gi] - state.x[gj])
    dx = np.minimum(dx, 1.0 - dx)
    theta = config.epsilon ** (-d) * theta_mollifier(dx / config.epsilon, d)
    keep = theta > 0.0
    if not keep.any():
        return
    gi, gj, theta = gi[keep], gj[keep], theta[keep]
    s = _section_table(params)[state.m[gi] - 1, state.m[gj] - 1]
    dist = np.sqrt(((state.v[gi] - state.v[gj]) ** 2).sum(axis=1))
    prob = -np.expm1(-2.0 * s * dist / state.N0 * theta * dt)
    fired = state.rng.random(len(prob)) < prob
    if not fired.any():
        return
    pairs = np.stack([gi[fired], gj[fired]], axis=1)
    order = rng.permutation(len(pairs))
    _process_pairs(state, pairs[order], params.M)


def coagulation_sweep(state: ParticleState, config: ParticleConfig,
                      params: Params, dt_p: float | None = None,
                      force_exact: bool = False) -> ParticleState:
    """One tau-leaping coagulation sweep; strategy picked by mode and size."""
    dt = config.dt_p if dt_p is None else dt_p
    p_cap = _pair_probability_cap(state, config, params, dt)
    if p_cap > _PAIR_PROB_LIMIT:
        raise DomainError(
            f"max pair probability {p_cap:.3f} exceeds {_PAIR_PROB_LIMIT}; "
            "reduce dt_p"
        )
    if config.mode == "spatial":
        if force_exact:
            _sweep_exact(state, config, params, dt)
        else:
            _sweep_celllist(state, config, params, dt)
    elif force_exact or state.n_active <= EXACT_SWEEP_LIMIT:
        _sweep_exact(state, config, params, dt)
    else:
        _sweep_thinned(state, config, params, dt)
    return state


# --- observation ----------------------------------------------------------

def empirical_density(state: ParticleState, grid: VelocityGrid,
                      M: int) -> tuple[DensitySet, float, float]:
    """CIC-deposited empirical densities, 1/N0 weight per particle.

    Returns (densities, out-of-box number fraction, m-weighted out-of-box
    fraction); particles outside the hull of the cell centers are tallied,
    not deposited.
    """
    fields = np.zeros((M, grid.n_cells))
    act = np.flatnonzero(state.active)
    bound = grid.V - 0.5 * grid.h
    out_frac = 0.0
    out_weighted = 0.0
    w = 1.0 / state.N0
    for m in range(1, M + 1):
        sel = act[state.m[act] == m]
        if len(sel) == 0:
            continue
        v = state.v[sel]
        inside = np.all(np.abs(v) <= bound, axis=1)
        n_out = int((~inside).sum())
        if n_out:
            out_frac += n_out * w
            out_weighted += m * n_out * w
        pts = v[inside]
        if len(pts):
            _cic_deposit(pts, np.full(len(pts), w), grid, fields[m - 1])
    dens = DensitySet(fields.reshape((M,) + grid.shape) / grid.cell_volume, grid)
    return dens, out_frac, out_weighted


@dataclass
class _EmpiricalState:
    t: float
    f: DensitySet
    expelled_cumulative: float
    leakage_cumulative: float


def run_particles(params: Params, init: InitSpec, config: ParticleConfig,
                  grid: VelocityGrid, output_every: float = 0.1,
                  snapshot_times: tuple[float, ...] = (),
                  force_exact: bool = False):
    """Integrate the particle system; diagnostics on empirical densities."""
    from .integrator import RunResult, _event_times

    config.validate(params.d)
    state = sample_initial(init, config.N, params.seed, params,
                           spatial=config.mode == "spatial")

    def observe(t: float):
        dens, _, out_w = empirical_density(state, grid, params.M)
        wrapper = _EmpiricalState(
            t=t, f=dens,
            expelled_cumulative=state.expelled_mass / state.N0,
            leakage_cumulative=out_w,
        )
        return wrapper

    first = observe(0.0)
    reference = first.f.copy()
    rows = [compute_row(first, params, reference=reference)]
    snapshots = []

    def is_snapshot(t: float) -> bool:
        return any(abs(t - ts) <= 1.0e-12 for ts in snapshot_times)

    def is_output(t: float) -> bool:
        if abs(t - params.t_end) <= 1.0e-12:
            return True
        k = round(t / output_every)
        return abs(t - k * output_every) <= 1.0e-9 * max(1.0, t)

    def emit(t: float) -> None:
        if is_output(t):
            rows.append(compute_row(observe(t), params, reference=reference))
        if is_snapshot(t):
            dens, _, _ = empirical_density(state, grid, params.M)
            for m in range(params.M):
                snapshots.append((t, m + 1, dens.fields[m].copy()))

    if is_snapshot(0.0):
        dens, _, _ = empirical_density(state, grid, params.M)
        for m in range(params.M):
            snapshots.append((0.0, m + 1, dens.fields[m].copy()))
    if params.t_end == 0.0:
        return RunResult(rows, snapshots, state)

    t = 0.0
    for target in _event_times(params.t_end, output_every, snapshot_times):
        while t < target - 1.0e-12:
            dt = min(config.dt_p, target - t)
            em_step(state, config, params, dt_p=dt)
            coagulation_sweep(state, config, params, dt_p=dt,
                              force_exact=force_exact)
            t += dt
        t = target
        emit(target)
    return RunResult(rows, snapshots, state)
