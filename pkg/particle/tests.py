import math

import numpy as np
from django.test import SimpleTestCase

from core.config import SimConfig
from core.exceptions import GridShapeError, ParticleIndexError
from core.paths import wiener_sample
from core.weights import constant_weight, rational_weight
from observables.statistics import mc_expectation, mean_series, fit_decay_rate

from .engine import run, run_replicas, run_wong_zakai
from .ensemble import ParticleEnsemble, initial_ensemble
from .forces import flocking_force, flocking_forces
from .steppers import step_ito, step_stratonovich


def pair(v=(1.0, -1.0), x=(-0.5, 0.5), mode='common'):
    return ParticleEnsemble(
        x=np.array(x, dtype=float)[:, None], v=np.array(v, dtype=float)[:, None], noise_mode=mode
    )


def config(**kwargs):
    params = dict(d=1, N=2, T=1.0, dt=0.01, sigma=0.3, weight=constant_weight(1.0),
                  noise_mode='common', seed=5, replicas=1)
    params.update(kwargs)
    return SimConfig(**params)


class ForceTests(SimpleTestCase):

    def test_consensus_is_equilibrium(self):
        rng = np.random.default_rng(0)
        ens = ParticleEnsemble(x=rng.normal(size=(10, 2)), v=np.tile([0.3, -0.2], (10, 1)))
        np.testing.assert_allclose(flocking_forces(ens, rational_weight(0.1, 1.0)), 0.0, atol=1e-15)

    def test_pair_by_hand(self):
        np.testing.assert_allclose(flocking_force(pair(), constant_weight(1.0), 0), [-1.0])

    def test_forces_sum_to_zero(self):
        rng = np.random.default_rng(1)
        ens = initial_ensemble(200, 3, rng)
        total = flocking_forces(ens, rational_weight(0.2, 1.0)).sum(axis=0)
        self.assertLessEqual(np.max(np.abs(total)), 1e-12 * ens.N * np.max(np.abs(ens.v)))

    def test_single_force_matches_batch(self):
        rng = np.random.default_rng(2)
        ens = initial_ensemble(50, 2, rng)
        w = rational_weight(0.3, 1.0)
        np.testing.assert_allclose(flocking_force(ens, w, 7), flocking_forces(ens, w)[7], atol=1e-14)

    def test_index_out_of_range(self):
        with self.assertRaises(ParticleIndexError):
            flocking_force(pair(), constant_weight(), 2)


class StepperTests(SimpleTestCase):

    def test_no_noise_is_deterministic_heun(self):
        ens, w, dt = pair(), constant_weight(1.0), 0.1
        nxt = step_stratonovich(ens, w, 0.0, 0.37, dt)
        # v' = v(1 − dt + dt²/2) при v̄ = 0
        np.testing.assert_allclose(nxt.v[:, 0], np.array([1.0, -1.0]) * (1 - dt + dt * dt / 2))

    def test_pair_closed_form(self):
        path = wiener_sample(13, 1.0, 0.01)
        ens, w, sigma = pair(), constant_weight(1.0), 0.3
        for k, dW in enumerate(path.increments):
            ens = step_stratonovich(ens, w, sigma, dW, path.dt)
        exact = 2.0 * math.exp(-path.T - sigma * path.values[-1])
        relative = abs((ens.v[0, 0] - ens.v[1, 0]) - exact) / exact
        self.assertLessEqual(relative, 5 * path.dt)

    def test_single_particle_keeps_velocity(self):
        ens = ParticleEnsemble(x=np.array([[0.2, 0.1]]), v=np.array([[1.5, -0.5]]))
        nxt = step_stratonovich(ens, rational_weight(), 0.8, 0.4, 0.1)
        np.testing.assert_array_equal(nxt.v, ens.v)

    def test_mean_velocity_conserved(self):
        rng = np.random.default_rng(3)
        ens = initial_ensemble(32, 2, rng)
        ens = ens.evolve(ens.x, ens.v + 0.25, 0.0)
        v0, vmax = ens.vbar, np.max(np.abs(ens.v))
        path = wiener_sample(4, 2.0, 0.01)
        for dW in path.increments:
            ens = step_stratonovich(ens, rational_weight(0.2, 1.0), 0.5, dW, path.dt)
            self.assertLessEqual(np.max(np.abs(ens.vbar - v0)), 1e-10 * ens.N * vmax)

    def test_m2_pathwise_constant_weight(self):
        path = wiener_sample(6, 2.0, 0.01)
        rng = np.random.default_rng(4)
        ens = initial_ensemble(64, 2, rng)
        m2_0 = np.mean(np.sum(ens.v ** 2, axis=1))
        for k, dW in enumerate(path.increments):
            ens = step_stratonovich(ens, constant_weight(1.0), 0.3, dW, path.dt)
            t = path.t_grid[k + 1]
            exact = m2_0 * math.exp(-2 * t - 2 * 0.3 * path.values[k + 1])
            self.assertLessEqual(abs(np.mean(np.sum(ens.v ** 2, axis=1)) / exact - 1), 10 * path.dt)

    def test_increment_count_mismatch(self):
        ens = pair(mode='independent')
        with self.assertRaises(GridShapeError):
            step_ito(ens, constant_weight(), 0.5, 0.1, 0.01)
        with self.assertRaises(GridShapeError):
            step_stratonovich(pair(), constant_weight(), 0.5, np.zeros(2), 0.01)

    def test_ito_without_noise_is_forward_euler(self):
        ens, dt = pair(), 0.1
        nxt = step_ito(ens, constant_weight(1.0), 0.0, 0.5, dt)
        np.testing.assert_allclose(nxt.v[:, 0], [1.0 - dt, -1.0 + dt])
        np.testing.assert_allclose(nxt.x[:, 0], [-0.5 + dt, 0.5 - dt])


class RunTests(SimpleTestCase):

    def test_zero_horizon(self):
        record = run(config(T=0.0))
        self.assertEqual(len(record.states), 1)
        self.assertEqual(list(record.times), [0.0])

    def test_replica_determinism(self):
        cfg = config(N=16, d=2, weight=rational_weight(0.2, 1.0))
        a, b = run(cfg, replica=3), run(cfg, replica=3)
        np.testing.assert_array_equal(a.final.v, b.final.v)
        np.testing.assert_array_equal(a.series.m2, b.series.m2)
        self.assertEqual(a.config_hash, cfg.config_hash)

    def test_snapshot_cadence(self):
        record = run(config(snapshot_every=7))
        self.assertEqual(record.times[-1], 1.0)
        self.assertTrue(np.all(np.diff(record.times) > 0))
        self.assertEqual(len(record.times), len(range(0, 100, 7)) + 1)

    def test_momentum_in_common_noise(self):
        record = run(config(N=32, d=2, weight=rational_weight(0.2, 1.0)))
        self.assertLessEqual(np.max(np.abs(record.series.m1)), 1e-10)
        np.testing.assert_array_equal(record.series.m0, 1.0)

    def test_ito_matches_stratonovich_in_law(self):
        cfg = config(N=16, d=1, T=1.0, dt=0.02, replicas=200, seed=21)
        strat = run_replicas(cfg, scheme='stratonovich').terminal('m2')
        ito = run_replicas(cfg, scheme='ito').terminal('m2')
        (ms, cs), (mi, ci) = mc_expectation(strat), mc_expectation(ito)
        self.assertLessEqual(abs(ms - mi), cs + ci)

    def test_independent_noise_decays(self):
        cfg = config(N=16, d=1, T=2.0, dt=0.02, sigma=0.5, noise_mode='independent', replicas=20,
                     snapshot_every=5)
        batch = run_replicas(cfg, scheme='ito')
        fit = fit_decay_rate(mean_series(batch.series_list), 'm2')
        self.assertLess(fit.rate, 0.0)

    def test_threads_do_not_change_results(self):
        cfg = config(N=8, d=2, replicas=6, weight=rational_weight(0.3, 1.0))
        serial = run_replicas(cfg, threads=1).terminal('m2')
        pooled = run_replicas(cfg, threads=3).terminal('m2')
        np.testing.assert_array_equal(serial, pooled)


class WongZakaiTests(SimpleTestCase):

    def test_no_noise_matches_heun(self):
        cfg = config(N=8, sigma=0.0, noise_mode='none', weight=rational_weight(0.4, 1.0))
        path = wiener_sample(2, cfg.T, cfg.dt)
        heun = run(cfg, path=path)
        rk4 = run_wong_zakai(cfg, path, eps=0.1, ens0=heun.states[0])
        tol = 10 * cfg.dt ** 2 * cfg.T
        self.assertLessEqual(np.max(np.abs(heun.final.v - rk4.final.v)), tol)
        self.assertLessEqual(np.max(np.abs(heun.final.x - rk4.final.x)), tol)

    def test_pair_closed_form(self):
        cfg = config()
        path = wiener_sample(31, cfg.T, cfg.dt)
        record = run_wong_zakai(cfg, path, eps=cfg.dt, ens0=pair())
        w_T = record.final.v[0, 0] - record.final.v[1, 0]
        exact = 2.0 * math.exp(-cfg.T - cfg.sigma * path.values[-1])
        self.assertLessEqual(abs(w_T - exact) / exact, 0.1)

    def test_distance_shrinks_with_eps(self):
        cfg = config(sigma=0.5)
        path = wiener_sample(8, cfg.T, cfg.dt)
        reference = run(cfg, path=path, ens0=pair())
        distances = []
        for eps in (0.2, 0.1, 0.05):
            smooth = run_wong_zakai(cfg, path, eps=eps, ens0=pair())
            gaps = [np.max(np.abs(a.v - b.v)) for a, b in zip(smooth.states, reference.states)]
            distances.append(max(gaps))
        self.assertGreaterEqual(distances[0], distances[1])
        self.assertGreaterEqual(distances[1], distances[2])
