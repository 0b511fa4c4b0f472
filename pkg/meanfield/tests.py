import math

import numpy as np
from django.test import SimpleTestCase, override_settings

from core.config import SimConfig
from core.exceptions import GridShapeError, LabConfigError, LabDomainError
from core.paths import wiener_sample
from core.weights import constant_weight, rational_weight
from particle.engine import initial_for

from .experiments import chaos_experiment, linear_response, perturb, stability_experiment
from .wasserstein import EmpiricalMeasure, brute_force_wasserstein2, pairwise_wasserstein2, wasserstein2


def measure(points):
    return EmpiricalMeasure(atoms=np.asarray(points, dtype=float))


def config(**kwargs):
    params = dict(d=1, N=16, T=0.5, dt=0.02, sigma=0.3, weight=rational_weight(0.2, 1.0), seed=3)
    params.update(kwargs)
    return SimConfig(**params)


class WassersteinTests(SimpleTestCase):

    def test_identical(self):
        a = measure(np.random.default_rng(0).normal(size=(10, 2)))
        self.assertEqual(wasserstein2(a, a), 0.0)

    def test_single_atoms(self):
        self.assertEqual(wasserstein2(measure([[0.0, 0.0]]), measure([[1.0, 0.0]])), 1.0)

    def test_two_atoms_by_hand(self):
        a = measure([[0.0, 0.0], [1.0, 0.0]])
        b = measure([[0.0, 0.1], [1.0, -0.1]])
        self.assertAlmostEqual(wasserstein2(a, b), 0.1, places=12)
        self.assertAlmostEqual(brute_force_wasserstein2(a, b), 0.1, places=12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for n in range(1, 9):
            a, b = measure(rng.normal(size=(n, 2))), measure(rng.normal(size=(n, 2)))
            self.assertEqual(wasserstein2(a, b), brute_force_wasserstein2(a, b))

    def test_metric_properties(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a, b, c = (measure(rng.normal(size=(6, 2))) for _ in range(3))
            self.assertEqual(wasserstein2(a, b), wasserstein2(b, a))
            self.assertLessEqual(wasserstein2(a, c), wasserstein2(a, b) + wasserstein2(b, c) + 1e-9)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(3)
        a, b = measure(rng.normal(size=(20, 2))), measure(rng.normal(size=(20, 2)))
        shuffled = measure(a.atoms[rng.permutation(20)])
        self.assertAlmostEqual(wasserstein2(a, b), wasserstein2(shuffled, b), places=12)

    def test_unequal_sizes(self):
        a = measure([[0.0, 0.0], [2.0, 0.0]])
        b = measure([[1.0, 0.0]])
        self.assertAlmostEqual(wasserstein2(a, b), 1.0, places=10)

    def test_empty_measure(self):
        with self.assertRaises(LabDomainError):
            wasserstein2(measure(np.zeros((0, 2))), measure([[0.0, 0.0]]))

    def test_dimension_mismatch(self):
        with self.assertRaises(GridShapeError):
            wasserstein2(measure([[0.0, 0.0]]), measure([[0.0, 0.0, 0.0, 0.0]]))

    def test_brute_force_limit(self):
        a = measure(np.zeros((9, 2)))
        with self.assertRaises(LabConfigError):
            brute_force_wasserstein2(a, a)

    @override_settings(FLOCK_EXACT_MATCHING_LIMIT=4)
    def test_entropic_fallback_is_upper_estimate(self):
        rng = np.random.default_rng(4)
        a, b = measure(rng.normal(size=(6, 2))), measure(rng.normal(size=(6, 2)))
        exact = brute_force_wasserstein2(a, b)
        with self.assertLogs('meanfield.wasserstein', level='WARNING'):
            approx = wasserstein2(a, b)
        self.assertGreaterEqual(approx, exact * (1 - 1e-3))

    def test_pairs_in_threads(self):
        rng = np.random.default_rng(5)
        pairs = [(measure(rng.normal(size=(8, 2))), measure(rng.normal(size=(8, 2)))) for _ in range(5)]
        self.assertEqual(pairwise_wasserstein2(pairs, threads=3), pairwise_wasserstein2(pairs, threads=1))


class ChaosTests(SimpleTestCase):

    def test_single_size(self):
        result = chaos_experiment(config(), [32])
        self.assertEqual(len(result.table), 1)
        self.assertEqual(result.table['W2'].iloc[0], 0.0)

    def test_relabeling_master_keeps_reference(self):
        cfg = config()
        path = wiener_sample(2, cfg.T, cfg.dt)
        master = initial_for(cfg.replace(N=64))
        base = chaos_experiment(cfg, [8, 64], path=path, master=master)
        order = np.concatenate([np.arange(8), 8 + np.random.default_rng(0).permutation(56)])
        shuffled = chaos_experiment(cfg, [8, 64], path=path, master=master.permuted(order))
        np.testing.assert_allclose(base.table['W2'], shuffled.table['W2'], atol=1e-10)

    def test_distances_shrink_without_noise(self):
        cfg = config(sigma=0.0, weight=constant_weight(1.0))
        result = chaos_experiment(cfg, [8, 64, 512])
        self.assertGreater(result.table['W2'].iloc[0], result.table['W2'].iloc[1])
        self.assertGreaterEqual(result.path_sup, 0.0)

    def test_small_master(self):
        cfg = config()
        with self.assertRaises(GridShapeError):
            chaos_experiment(cfg, [8, 32], master=initial_for(cfg.replace(N=16)))


class StabilityTests(SimpleTestCase):

    def test_identical_data(self):
        cfg = config()
        init = initial_for(cfg)
        result = stability_experiment(cfg, init, init)
        self.assertTrue(np.all(result.distances() == 0))
        self.assertEqual(result.max_ratio, 0.0)

    def test_velocity_shift_is_translation(self):
        cfg = config()
        result = linear_response(cfg, 1e-3)
        t = result.table['t'].to_numpy()
        np.testing.assert_allclose(result.table['W2_eps'], 1e-3 * np.sqrt(1.0 + t * t), rtol=1e-6)
        self.assertGreaterEqual(result.extra['ratio_min'], 0.3)
        self.assertLessEqual(result.extra['ratio_max'], 0.7)
        self.assertAlmostEqual(result.max_ratio, math.sqrt(1.0 + cfg.T ** 2), places=5)

    def test_position_perturbation_stays_bounded(self):
        cfg = config(T=1.0)
        init = initial_for(cfg)
        result = stability_experiment(cfg, init, perturb(init, 1e-3, 'position'))
        self.assertTrue(np.isfinite(result.max_ratio))
        self.assertLess(result.max_ratio, 10.0)

    def test_size_mismatch(self):
        cfg = config()
        with self.assertRaises(GridShapeError):
            stability_experiment(cfg, initial_for(cfg), initial_for(cfg.replace(N=8)))

    def test_unknown_perturbation(self):
        with self.assertRaises(LabConfigError):
            perturb(initial_for(config()), 0.1, 'mass')
