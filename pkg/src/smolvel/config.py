"""Flat key-value run configuration: parsing, validation, canonical echo.

The format is a sectioned key = value document::

    [model]
    d = 1
    M = 3
    ...

Unknown sections or keys are hard errors; every diagnostic carries the
offending line or field.  ``format_config`` writes the fully resolved
configuration back out in a canonical form whose re-parse is identical
(floats are serialized with shortest round-trip representation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .params import Params, auto_box_halfwidth

LEVEL_WEIGHT_TOL = 1.0e-12


class ConfigError(ValueError):
    """Configuration rejected; message identifies the line or field."""


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: tuple[float, ...]
    var: tuple[float, ...]


@dataclass(frozen=True)
class InitSpec:
    """Initial data f_m(0) = r(m) g_m with Gaussian-mixture g_m."""

    level_weights: tuple[float, ...]
    mixtures: tuple[tuple[GaussianComponent, ...], ...]

    def validate(self, d: int) -> None:
        r = self.level_weights
        if len(r) != len(self.mixtures):
            raise ConfigError("init: one mixture required per level weight")
        if any(w < 0 for w in r):
            raise ConfigError("init: level weights must be >= 0")
        if abs(sum(r) - 1.0) > LEVEL_WEIGHT_TOL:
            raise ConfigError(
                f"init: level weights sum to {sum(r)!r}, expected 1"
            )
        for m, mix in enumerate(self.mixtures, start=1):
            if not mix:
                raise ConfigError(f"init: g_{m} has no components")
            wsum = sum(c.weight for c in mix)
            if any(c.weight <= 0 for c in mix) or abs(wsum - 1.0) > LEVEL_WEIGHT_TOL:
                raise ConfigError(
                    f"init: g_{m} component weights must be > 0 and sum to 1"
                )
            for c in mix:
                if len(c.mean) != d or len(c.var) != d:
                    raise ConfigError(
                        f"init: g_{m} mean/var must have {d} components"
                    )
                if any(v <= 0 for v in c.var):
                    raise ConfigError(f"init: g_{m} covariances must be > 0")


def standard_init(M: int, d: int) -> InitSpec:
    """All weight on level 1 with a standard normal velocity profile."""
    comp = GaussianComponent(1.0, (0.0,) * d, (1.0,) * d)
    return InitSpec(
        level_weights=(1.0,) + (0.0,) * (M - 1),
        mixtures=((comp,),) * M,
    )


def mixture_density(mix: tuple[GaussianComponent, ...], grid) -> np.ndarray:
    """Pointwise mixture density sampled at the cell centers."""
    out = np.zeros(grid.shape)
    for comp in mix:
        pdf = np.ones(grid.shape)
        for ax in range(grid.d):
            sh = [1] * grid.d
            sh[ax] = grid.G
            x = grid.centers_1d.reshape(sh)
            mu, var = comp.mean[ax], comp.var[ax]
            pdf = pdf * np.exp(-((x - mu) ** 2) / (2.0 * var)) / math.sqrt(
                2.0 * math.pi * var
            )
        out += comp.weight * pdf
    return out


def initial_density_set(init: InitSpec, params: Params, grid):
    """DensitySet f_m(0) = r(m) g_m on the grid."""
    from .collision import DensitySet

    fields = np.zeros((params.M,) + grid.shape)
    for m in range(params.M):
        r = init.level_weights[m]
        if r > 0.0:
            fields[m] = r * mixture_density(init.mixtures[m], grid)
    return DensitySet(fields, grid)


@dataclass(frozen=True)
class ParticleConfig:
    """Monte Carlo run configuration."""

    N: int = 10000
    epsilon: float = 0.1
    mode: str = "meanfield"
    common_noise: tuple[tuple[float, ...], ...] = ()
    mu: float = 1.0
    dt_p: float = 0.01

    def validate(self, d: int) -> None:
        if self.N < 2:
            raise ConfigError(f"particles: N must be >= 2, got {self.N}")
        if self.mode not in ("meanfield", "spatial"):
            raise ConfigError(f"particles: unknown mode {self.mode!r}")
        if self.mode == "spatial" and not 0.0 < self.epsilon < 1.0:
            raise ConfigError(
                f"particles: epsilon must be in (0,1), got {self.epsilon}"
            )
        if self.dt_p <= 0:
            raise ConfigError(f"particles: dt_p must be > 0, got {self.dt_p}")
        for vec in self.common_noise:
            if len(vec) != d:
                raise ConfigError(
                    f"particles: common-noise vector {vec} must have {d} components"
                )


@dataclass(frozen=True)
class OutputSpec:
    output_every: float = 0.1
    snapshot_times: tuple[float, ...] = ()
    out_dir: str = "run_out"

    def validate(self, t_end: float) -> None:
        if self.output_every <= 0:
            raise ConfigError(
                f"output: output_every must be > 0, got {self.output_every}"
            )
        for ts in self.snapshot_times:
            if not 0.0 <= ts <= t_end:
                raise ConfigError(
                    f"output: snapshot time {ts} outside [0, {t_end}]"
                )


@dataclass(frozen=True)
class ResolvedConfig:
    params: Params
    init: InitSpec
    particles: ParticleConfig
    output: OutputSpec
    v_auto: bool
    deterministic: bool = False


_SECTIONS = {
    "model": {"d", "M", "alpha", "kappa", "mu", "seed"},
    "grid": {"V", "G"},
    "time": {"dt", "t_end"},
    "truncation": {"R"},
    "init": None,  # r_<m> and g_<m>, level-checked after the scan
    "particles": {"N", "epsilon", "mode", "common_noise", "dt_p"},
    "output": {"output_every", "snapshot_times", "out_dir"},
}


def _scan(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    """Raw section/key scan retaining line numbers for diagnostics."""
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{current}]")
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value': {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, value = (part.strip() for part in line.split("=", 1))
        allowed = _SECTIONS[current]
        if allowed is not None and key not in allowed:
            raise ConfigError(
                f"line {lineno}: unknown key {key!r} in section [{current}]"
            )
        if current == "init" and not (key.startswith("r_") or key.startswith("g_")):
            raise ConfigError(
                f"line {lineno}: unknown key {key!r} in section [init]"
            )
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        sections[current][key] = (value, lineno)
    return sections


def _take(sections, section: str, key: str, default=None):
    entry = sections.get(section, {}).pop(key, None)
    if entry is None:
        return default, None
    return entry[0], entry[1]


def _as_int(value: str, where: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{where}: expected integer, got {value!r}") from None


def _as_float(value: str, where: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{where}: expected number, got {value!r}") from None


def _parse_floats(value: str, where: str) -> tuple[float, ...]:
    value = value.strip()
    if not value:
        return ()
    return tuple(_as_float(p.strip(), where) for p in value.split(","))


def _parse_component(token: str, where: str) -> GaussianComponent:
    # one component:  weight @ mean... : var...
    if "@" not in token or ":" not in token:
        raise ConfigError(
            f"{where}: component must be 'weight @ mean.. : var..', got {token!r}"
        )
    w_part, rest = token.split("@", 1)
    mean_part, var_part = rest.split(":", 1)
    mean = tuple(_as_float(p, where) for p in mean_part.split())
    var = tuple(_as_float(p, where) for p in var_part.split())
    if not mean or not var:
        raise ConfigError(f"{where}: empty mean or var in {token!r}")
    return GaussianComponent(_as_float(w_part.strip(), where), mean, var)


def parse_config(text: str) -> ResolvedConfig:
    """Validate a configuration document and resolve every default."""
    sections = _scan(text)

    def need(section, key, conv, default):
        value, lineno = _take(sections, section, key)
        if value is None:
            if default is None:
                raise ConfigError(f"missing required key {key!r} in [{section}]")
            return default
        return conv(value, f"line {lineno} ({section}.{key})")

    d = need("model", "d", _as_int, None)
    M = need("model", "M", _as_int, None)
    alpha = need("model", "alpha", _as_float, 1.0)
    kappa = need("model", "kappa", _as_float, 1.0)
    mu = need("model", "mu", _as_float, kappa)
    seed = need("model", "seed", _as_int, 0)

    v_raw, _ = _take(sections, "grid", "V")
    v_auto = v_raw is None or v_raw.strip() == "auto"
    V = auto_box_halfwidth(d, alpha, kappa) if v_auto else _as_float(v_raw, "grid.V")
    G = need("grid", "G", _as_int, 256)

    dt_raw, _ = _take(sections, "time", "dt")
    dt = None if dt_raw is None or dt_raw.strip() == "auto" else _as_float(dt_raw, "time.dt")
    t_end = need("time", "t_end", _as_float, 1.0)

    r_raw, _ = _take(sections, "truncation", "R")
    R = None if r_raw is None or r_raw.strip() == "infinite" else _as_float(r_raw, "truncation.R")

    try:
        params = Params(d=d, M=M, alpha=alpha, kappa=kappa, mu=mu, V=V, G=G,
                        dt=dt, t_end=t_end, R=R, seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    # init section: r_<m> / g_<m>
    init_keys = sections.get("init", {})
    if init_keys:
        weights = []
        mixtures = []
        default_mix = (GaussianComponent(1.0, (0.0,) * d, (1.0,) * d),)
        for m in range(1, M + 1):
            rv, rl = _take(sections, "init", f"r_{m}")
            weights.append(0.0 if rv is None else _as_float(rv, f"line {rl} (init.r_{m})"))
            gv, gl = _take(sections, "init", f"g_{m}")
            if gv is None:
                mixtures.append(default_mix)
            else:
                where = f"line {gl} (init.g_{m})"
                mixtures.append(tuple(
                    _parse_component(tok.strip(), where)
                    for tok in gv.split("|")
                ))
        leftover = sections.get("init", {})
        if leftover:
            key, (_, lineno) = next(iter(leftover.items()))
            raise ConfigError(
                f"line {lineno}: init key {key!r} has no level within 1..{M}"
            )
        init = InitSpec(tuple(weights), tuple(mixtures))
    else:
        init = standard_init(M, d)
    init.validate(d)

    noise_raw, nl = _take(sections, "particles", "common_noise")
    if noise_raw is None or not noise_raw.strip():
        noise: tuple[tuple[float, ...], ...] = ()
    else:
        where = f"line {nl} (particles.common_noise)"
        noise = tuple(
            _parse_floats(vec, where)
            for vec in noise_raw.split(";") if vec.strip()
        )
    pconf = ParticleConfig(
        N=need("particles", "N", _as_int, 10000),
        epsilon=need("particles", "epsilon", _as_float, 0.1),
        mode=need("particles", "mode", lambda v, w: v.strip(), "meanfield"),
        common_noise=noise,
        mu=mu,
        dt_p=need("particles", "dt_p", _as_float, 0.01),
    )
    pconf.validate(d)

    snap_raw, sl = _take(sections, "output", "snapshot_times")
    snaps = () if snap_raw is None else _parse_floats(
        snap_raw, f"line {sl} (output.snapshot_times)"
    )
    output = OutputSpec(
        output_every=need("output", "output_every", _as_float, 0.1),
        snapshot_times=snaps,
        out_dir=need("output", "out_dir", lambda v, w: v.strip(), "run_out"),
    )
    output.validate(t_end)

    return ResolvedConfig(params=params, init=init, particles=pconf,
                          output=output, v_auto=v_auto)


def _fmt(x: float) -> str:
    return repr(float(x))


def format_config(cfg: ResolvedConfig) -> str:
    """Canonical text of a resolved configuration; re-parses identically."""
    p, init, pc, out = cfg.params, cfg.init, cfg.particles, cfg.output
    lines = [
        "[model]",
        f"d = {p.d}",
        f"M = {p.M}",
        f"alpha = {_fmt(p.alpha)}",
        f"kappa = {_fmt(p.kappa)}",
        f"mu = {_fmt(p.mu)}",
        f"seed = {p.seed}",
        "",
        "[grid]",
        f"V = {_fmt(p.V)}",
        f"G = {p.G}",
        "",
        "[time]",
        f"dt = {'auto' if p.dt is None else _fmt(p.dt)}",
        f"t_end = {_fmt(p.t_end)}",
        "",
        "[truncation]",
        f"R = {'infinite' if p.R is None else _fmt(p.R)}",
        "",
        "[init]",
    ]
    for m in range(1, p.M + 1):
        lines.append(f"r_{m} = {_fmt(init.level_weights[m - 1])}")
        comps = " | ".join(
            f"{_fmt(c.weight)} @ {' '.join(_fmt(v) for v in c.mean)} : "
            f"{' '.join(_fmt(v) for v in c.var)}"
            for c in init.mixtures[m - 1]
        )
        lines.append(f"g_{m} = {comps}")
    lines += [
        "",
        "[particles]",
        f"N = {pc.N}",
        f"epsilon = {_fmt(pc.epsilon)}",
        f"mode = {pc.mode}",
        "common_noise = " + "; ".join(
            ",".join(_fmt(v) for v in vec) for vec in pc.common_noise
        ),
        f"dt_p = {_fmt(pc.dt_p)}",
        "",
        "[output]",
        f"output_every = {_fmt(out.output_every)}",
        "snapshot_times = " + ",".join(_fmt(t) for t in out.snapshot_times),
        f"out_dir = {out.out_dir}",
        "",
    ]
    return "\n".join(lines)


def with_overrides(cfg: ResolvedConfig, *, kappa: float | None = None,
                   out_dir: str | None = None) -> ResolvedConfig:
    """Derived configuration for sweeps: per-kappa physics, auto-V rescale."""
    params = cfg.params
    v_auto = cfg.v_auto
    if kappa is not None:
        V = auto_box_halfwidth(params.d, params.alpha, kappa) if v_auto else params.V
        params = replace(params, kappa=kappa, V=V)
    output = cfg.output if out_dir is None else replace(cfg.output, out_dir=out_dir)
    particles = replace(cfg.particles, mu=params.mu)
    return ResolvedConfig(params=params, init=cfg.init, particles=particles,
                          output=output, v_auto=v_auto,
                          deterministic=cfg.deterministic)
