import dataclasses
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import ks_2samp

from smolvel.config import ParticleConfig, standard_init, GaussianComponent, InitSpec
from smolvel.params import DomainError, Params, build_grid
from smolvel.particles import (
    ParticleState,
    coagulation_sweep,
    em_step,
    empirical_density,
    run_particles,
    sample_initial,
    theta_mollifier,
    _theta_norm,
)


def make_state(v, m, seed=0, x=None, N0=None):
    v = np.atleast_2d(np.asarray(v, dtype=float)).reshape(len(m), -1)
    m = np.asarray(m, dtype=np.int64)
    return ParticleState(
        v=v, m=m, active=np.ones(len(m), dtype=bool),
        x=None if x is None else np.asarray(x, dtype=float),
        expelled_mass=0.0, rng=np.random.default_rng(seed),
        N0=N0 if N0 is not None else len(m),
    )


class TestMollifier:
    def test_vanishes_at_origin_and_outside(self):
        assert theta_mollifier(np.array([[0.0]]), 1)[0] == 0.0
        assert theta_mollifier(np.array([[1.5]]), 1)[0] == 0.0

    def test_unit_integral(self):
        for d in (1, 2, 3):
            norm = _theta_norm(d)
            surface = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}[d]
            val, _ = quad(
                lambda r: surface * r ** (d - 1)
                * float(theta_mollifier(np.array([[r] + [0.0] * (d - 1)]), d)[0]),
                0, 1)
            assert val == pytest.approx(1.0, rel=1e-8)
            assert norm > 0


class TestSampleInitial:
    def test_all_mass_one(self):
        p = Params(d=1, M=3)
        st = sample_initial(standard_init(3, 1), 500, 0, p)
        assert np.all(st.m == 1)
        assert st.n_active == 500

    def test_clt_moments(self):
        p = Params(d=1, M=1)
        N = 100_000
        st = sample_initial(standard_init(1, 1), N, 1, p)
        assert abs(st.v.mean()) <= 4.0 / math.sqrt(N)
        assert st.v.var() == pytest.approx(1.0, rel=0.05)

    def test_mixture_levels(self):
        p = Params(d=1, M=2)
        init = InitSpec(
            level_weights=(0.25, 0.75),
            mixtures=((GaussianComponent(1.0, (0.0,), (1.0,)),),
                      (GaussianComponent(1.0, (3.0,), (0.04,)),)),
        )
        st = sample_initial(init, 40_000, 2, p)
        frac2 = (st.m == 2).mean()
        assert frac2 == pytest.approx(0.75, abs=0.01)
        assert st.v[st.m == 2].mean() == pytest.approx(3.0, abs=0.01)

    def test_seed_determinism(self):
        p = Params(d=2, M=3, G=16)
        a = sample_initial(standard_init(3, 2), 1000, 7, p, spatial=True)
        b = sample_initial(standard_init(3, 2), 1000, 7, p, spatial=True)
        assert np.array_equal(a.v, b.v) and np.array_equal(a.x, b.x)
        assert np.array_equal(a.m, b.m)


class TestEmStep:
    def test_deterministic_drift_decay(self):
        p = Params(d=1, M=1, alpha=1.0)
        cfg = ParticleConfig(N=4, mu=0.0, dt_p=0.001)
        st = make_state([[2.0], [1.0], [-0.5], [3.0]], [1, 1, 1, 1])
        v0 = st.v.copy()
        for _ in range(1000):
            em_step(st, cfg, p)
        np.testing.assert_allclose(st.v, v0 * math.exp(-1.0), rtol=1e-2)

    def test_common_noise_shared_increment(self):
        p = Params(d=1, M=2, alpha=1.0)
        cfg = ParticleConfig(N=6, mu=0.0, dt_p=0.01,
                             common_noise=((0.7,),))
        st = make_state(np.zeros((6, 1)), [1, 1, 1, 2, 2, 2])
        em_step(st, cfg, p)
        # zero drift at v=0: every equal-mass particle gets the same kick
        assert np.all(st.v[:3] == st.v[0])
        assert np.all(st.v[3:] == st.v[3])

    def test_stationary_variance(self):
        p = Params(d=1, M=1, alpha=1.0)
        cfg = ParticleConfig(N=100_000, mu=1.0, dt_p=0.01)
        st = sample_initial(standard_init(1, 1), 100_000, 3, p)
        st.v[:] = 0.0
        for _ in range(600):
            em_step(st, cfg, p)
        assert st.v.var() == pytest.approx(1.0 * 1.0, rel=0.05)

    def test_accuracy_guard(self):
        p = Params(d=1, M=1, alpha=1.0)
        cfg = ParticleConfig(N=4, mu=0.0, dt_p=0.5)
        st = make_state([[1.0], [2.0], [0.0], [1.0]], [1, 1, 1, 1])
        with pytest.raises(DomainError):
            em_step(st, cfg, p)


class TestCoagulationSweep:
    def test_equal_velocities_never_fire(self):
        p = Params(d=1, M=3)
        cfg = ParticleConfig(N=8, dt_p=0.05)
        st = make_state(np.ones((8, 1)), [1] * 8)
        for _ in range(50):
            coagulation_sweep(st, cfg, p)
        assert st.n_active == 8 and st.expelled_mass == 0.0

    def test_momentum_conserving_merge(self):
        p = Params(d=1, M=2)
        cfg = ParticleConfig(N=2, dt_p=0.05)
        st = make_state([[1.0], [-1.0]], [1, 1], seed=5)
        for _ in range(500):
            coagulation_sweep(st, cfg, p)
            if st.n_active == 1:
                break
        assert st.n_active == 1
        survivor = int(np.flatnonzero(st.active)[0])
        assert st.m[survivor] == 2
        assert st.v[survivor, 0] == 0.0

    def test_overflow_pair_expelled(self):
        p = Params(d=1, M=3)
        cfg = ParticleConfig(N=2, dt_p=0.02)
        st = make_state([[1.0], [-1.0]], [3, 1], seed=6)
        for _ in range(500):
            coagulation_sweep(st, cfg, p)
            if st.n_active == 0:
                break
        assert st.n_active == 0
        assert st.expelled_mass == 4.0

    def test_pair_probability_guard(self):
        p = Params(d=1, M=1)
        cfg = ParticleConfig(N=2, dt_p=5.0)
        st = make_state([[4.0], [-4.0]], [1, 1])
        with pytest.raises(DomainError):
            coagulation_sweep(st, cfg, p)

    def test_weighted_mass_ledger_exact(self):
        p = Params(d=1, M=3)
        cfg = ParticleConfig(N=400, dt_p=0.02)
        st = sample_initial(standard_init(3, 1), 400, 9, p)
        total0 = st.weighted_mass()
        for _ in range(60):
            em_step(st, cfg, p)
            coagulation_sweep(st, cfg, p)
        assert st.weighted_mass() == total0

    def test_in_system_momentum_preserved_by_sweeps(self):
        # M = N: no chain of merges can overflow, so nothing is expelled
        # and the total momentum changes only through merge round-off
        p = Params(d=1, M=80, G=16)
        cfg = ParticleConfig(N=80, dt_p=0.02)
        rng = np.random.default_rng(12)
        st = make_state(rng.standard_normal((80, 1)), np.ones(80, dtype=int),
                        seed=13)
        mom0 = float((st.m[st.active, None] * st.v[st.active]).sum())
        for _ in range(60):
            coagulation_sweep(st, cfg, p)
        mom1 = float((st.m[st.active, None] * st.v[st.active]).sum())
        assert st.expelled_mass == 0.0
        assert mom1 == pytest.approx(mom0, abs=1e-11)
        assert st.n_active < 80  # events actually happened

    def test_thinned_matches_exact_distribution(self, monkeypatch):
        # the majorant-thinned large-N path must be statistically
        # indistinguishable from the reference Bernoulli sweep; force the
        # thinned branch at every sweep regardless of the active count
        import smolvel.particles as particles_mod

        monkeypatch.setattr(particles_mod, "EXACT_SWEEP_LIMIT", 0)
        p = Params(d=1, M=3, t_end=0.2)
        finals = {"exact": [], "thinned": []}
        for seed in range(20):
            for label, force in (("exact", True), ("thinned", False)):
                cfg = ParticleConfig(N=1200, dt_p=0.02)
                st = sample_initial(standard_init(3, 1), 1200, seed, p)
                for _ in range(12):
                    coagulation_sweep(st, cfg, p, force_exact=force)
                finals[label].append((st.m[st.active] == 1).sum())
        stat = ks_2samp(finals["exact"], finals["thinned"])
        assert stat.pvalue > 0.01

    def test_celllist_matches_exact_distribution(self):
        p = Params(d=1, M=3, t_end=0.3)
        finals = {"exact": [], "cells": []}
        for seed in range(20):
            for label, force in (("exact", True), ("cells", False)):
                cfg = ParticleConfig(N=300, dt_p=0.05, mode="spatial",
                                     epsilon=0.2)
                st = sample_initial(standard_init(3, 1), 300, seed, p,
                                    spatial=True)
                for _ in range(12):
                    em_step(st, cfg, p)
                    coagulation_sweep(st, cfg, p, force_exact=force)
                finals[label].append((st.m[st.active] == 1).sum())
        stat = ks_2samp(finals["exact"], finals["cells"])
        assert stat.pvalue > 0.01


class TestEmpiricalDensity:
    def test_empty_state_zero(self):
        p = Params(d=1, M=2, V=4.0, G=16)
        g = build_grid(p)
        st = make_state([[0.0], [0.0]], [1, 1])
        st.active[:] = False
        dens, out_frac, _ = empirical_density(st, g, 2)
        assert np.all(dens.fields == 0.0) and out_frac == 0.0

    def test_single_particle_at_center(self):
        p = Params(d=1, M=1, V=4.0, G=16)
        g = build_grid(p)
        st = make_state([[float(g.centers_1d[5])]], [1], N0=10)
        dens, _, _ = empirical_density(st, g, 1)
        expected = 1.0 / (10 * g.cell_volume)
        assert dens.fields[0, 5] == pytest.approx(expected, rel=1e-14)
        assert np.count_nonzero(dens.fields) == 1

    def test_partition_of_unity(self):
        p = Params(d=2, M=3, V=3.0, G=8)
        g = build_grid(p)
        rng = np.random.default_rng(3)
        st = make_state(3.5 * rng.standard_normal((200, 2)),
                        rng.integers(1, 4, 200), N0=250)
        st.active[rng.random(200) < 0.2] = False
        dens, out_frac, _ = empirical_density(st, g, 3)
        total = dens.fields.sum() * g.cell_volume + out_frac
        assert total == pytest.approx(st.n_active / 250, abs=1e-12)


class TestRunParticles:
    def test_bit_identical_for_fixed_seed(self):
        p = Params(d=1, M=3, G=64, t_end=0.2, seed=11)
        g = build_grid(p)
        cfg = ParticleConfig(N=500, dt_p=0.02)
        init = standard_init(3, 1)
        a = run_particles(p, init, cfg, g, output_every=0.1)
        b = run_particles(p, init, cfg, g, output_every=0.1)
        assert np.array_equal(a.state.v, b.state.v)
        assert np.array_equal(a.state.m, b.state.m)
        for ra, rb in zip(a.rows, b.rows):
            assert np.array_equal(ra.mass, rb.mass) and ra.T == rb.T

    def test_expelled_nondecreasing(self):
        p = Params(d=1, M=2, G=64, t_end=0.4, seed=4)
        g = build_grid(p)
        cfg = ParticleConfig(N=800, dt_p=0.02)
        res = run_particles(p, standard_init(2, 1), cfg, g, output_every=0.1)
        exp = [r.expelled_cumulative for r in res.rows]
        assert all(b >= a for a, b in zip(exp, exp[1:]))
        assert res.state.weighted_mass() == 800.0

    def test_noncolliding_pair_pure_ou(self):
        p = Params(d=1, M=3, G=64, t_end=0.3, seed=2)
        g = build_grid(p)
        cfg = ParticleConfig(N=2, mu=0.0, dt_p=0.01)
        init = InitSpec(
            level_weights=(1.0, 0.0, 0.0),
            mixtures=((GaussianComponent(1.0, (2.0,), (1e-20,)),),) * 3,
        )
        res = run_particles(p, init, cfg, g, output_every=0.3)
        st = res.state
        assert st.n_active == 2  # equal velocities: the kernel vanishes
        np.testing.assert_allclose(st.v, 2.0 * math.exp(-0.3), rtol=5e-3)
