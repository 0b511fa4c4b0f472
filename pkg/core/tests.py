import os
import tempfile
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from .config import SimConfig, load_config, replica_seed
from .exceptions import LabConfigError, LabDomainError
from .paths import WienerPath, _ramp_smooth, _ramp_smooth_rate, mollify_path, wiener_refine, wiener_sample
from .weights import build_weight, classical_weight, constant_weight, rational_weight


class CommWeightTests(SimpleTestCase):

    def test_rational_at_zero(self):
        w = rational_weight(0.1, 1.0)
        self.assertEqual(w(0.0), 1.0)

    def test_constant_profile(self):
        self.assertEqual(constant_weight(1.0)(7.3), 1.0)

    def test_monotone(self):
        w = rational_weight(0.1, 1.0)
        self.assertLessEqual(w(2.0), w(1.0))

    def test_negative_distance(self):
        with self.assertRaises(LabDomainError):
            rational_weight()(-0.5)

    def test_invariants_on_random_pairs(self):
        rng = np.random.default_rng(7)
        r = rng.uniform(0, 20, 10_000)
        s = rng.uniform(0, 20, 10_000)
        for w in (constant_weight(0.7), rational_weight(0.4, 1.0), classical_weight(0.5, 2.0)):
            fr, fs = w(r), w(s)
            self.assertTrue(np.all(fr >= w.phi_m - 1e-15))
            self.assertTrue(np.all(fr <= w.phi_M + 1e-15))
            self.assertEqual(w(0.0), w.phi_M)
            self.assertTrue(np.all((fr - fs)[r <= s] >= -1e-15))
            self.assertTrue(np.all(np.abs(fr - fs) <= w.lip * np.abs(r - s) + 1e-12))

    def test_build_weight_unknown(self):
        with self.assertRaises(LabConfigError):
            build_weight('gaussian', phi0=1.0)


class WienerPathTests(SimpleTestCase):

    def test_grid_size(self):
        path = wiener_sample(1, 1.0, 0.5)
        self.assertEqual(len(path.t_grid), 3)
        self.assertEqual(path.values[0], 0.0)

    def test_determinism(self):
        a = wiener_sample(11, 1.0, 0.01)
        b = wiener_sample(11, 1.0, 0.01)
        np.testing.assert_array_equal(a.values, b.values)

    def test_zero_horizon(self):
        path = wiener_sample(3, 0.0, 0.1)
        self.assertEqual(path.K, 0)
        np.testing.assert_array_equal(path.values, [0.0])

    def test_bad_step(self):
        with self.assertRaises(LabConfigError):
            wiener_sample(1, 1.0, 0.0)

    def test_terminal_mean(self):
        T, n = 1.0, 10_000
        terminal = np.array([wiener_sample(seed, T, 0.25).values[-1] for seed in range(n)])
        self.assertLess(abs(terminal.mean()), 4 * np.sqrt(T / n))

    def test_refine_preserves_values(self):
        path = wiener_sample(5, 1.0, 0.1)
        fine = wiener_refine(path, 4)
        np.testing.assert_array_equal(fine.values[::4], path.values)
        self.assertAlmostEqual(fine.dt, path.dt / 4)

    def test_refine_nesting(self):
        path = wiener_sample(5, 1.0, 0.1)
        twice = wiener_refine(wiener_refine(path, 2), 2)
        once = wiener_refine(path, 4)
        np.testing.assert_array_equal(twice.values[::4], once.values[::4])

    def test_refine_factor_check(self):
        with self.assertRaises(LabConfigError):
            wiener_refine(wiener_sample(1, 1.0, 0.1), 1)

    def test_bridge_variance(self):
        path = wiener_sample(9, 1.0, 1e-4)
        fine = wiener_refine(path, 2)
        var = np.var(fine.increments)
        self.assertAlmostEqual(var / fine.dt, 1.0, delta=0.05)


class MollifyPathTests(SimpleTestCase):

    def test_small_eps_matches_interpolant(self):
        path = wiener_sample(2, 1.0, 0.01)
        smooth = mollify_path(path, path.dt * 1e-6)
        diff = np.abs(smooth.value_at(path.t_grid) - path.values)
        self.assertLessEqual(diff.max(), 1e-6)

    def test_zero_path(self):
        path = wiener_sample(2, 1.0, 0.1)
        zero = WienerPath(t_grid=path.t_grid, values=np.zeros_like(path.values), seed=0, dt=path.dt)
        smooth = mollify_path(zero, 0.2)
        np.testing.assert_array_equal(smooth.values, 0.0)

    def test_distance_monotone_in_eps(self):
        path = wiener_sample(4, 1.0, 0.01)
        distances = [mollify_path(path, eps).sup_distance() for eps in (0.2, 0.1, 0.05)]
        self.assertGreaterEqual(distances[0], distances[1])
        self.assertGreaterEqual(distances[1], distances[2])

    def test_rate_integrates_to_value(self):
        path = wiener_sample(4, 1.0, 0.05)
        smooth = mollify_path(path, 0.1, resolution=40)
        rates = smooth.rate_at(smooth.t_grid)
        integral = np.concatenate([[0.0], np.cumsum(0.5 * (rates[1:] + rates[:-1]) * np.diff(smooth.t_grid))])
        np.testing.assert_allclose(smooth.values - smooth.values[0], integral, atol=1e-3)

    def test_banded_matches_full_window(self):
        path = wiener_sample(6, 1.0, 0.02)
        t = np.linspace(-0.1, 1.1, 97)
        for eps in (0.005, 0.07, 0.3, 1.5):
            smooth = mollify_path(path, eps)
            window = t[:, None] - path.t_grid[None, :]
            value = path.at(t) + _ramp_smooth(window, eps) @ smooth.kinks
            rate = _ramp_smooth_rate(window, eps) @ smooth.kinks
            np.testing.assert_allclose(smooth.value_at(t), value, atol=1e-12)
            np.testing.assert_allclose(smooth.rate_at(t), rate, atol=1e-10)

    def test_rate_keeps_input_shape(self):
        path = wiener_sample(6, 1.0, 0.05)
        smooth = mollify_path(path, 0.1)
        t = path.t_grid[:-1, None] + np.linspace(0.0, path.dt, 3)[None, :]
        rates = smooth.rate_at(t)
        self.assertEqual(rates.shape, t.shape)
        np.testing.assert_allclose(rates[:, 0], smooth.rate_at(path.t_grid[:-1]))

    def test_bad_eps(self):
        with self.assertRaises(LabConfigError):
            mollify_path(wiener_sample(1, 1.0, 0.1), 0.0)


class ConfigTests(SimpleTestCase):

    def _write(self, text):
        handle = tempfile.NamedTemporaryFile('w', suffix='.cfg', delete=False)
        handle.write(text)
        handle.close()
        self.addCleanup(os.unlink, handle.name)
        return handle.name

    def test_empty_file_lists_missing_keys(self):
        with self.assertRaises(LabConfigError) as ctx:
            load_config(self._write(''))
        self.assertEqual(
            ctx.exception.missing_keys,
            sorted(['d', 'N', 'T', 'dt', 'sigma', 'weight', 'noise_mode', 'seed', 'replicas']),
        )

    def test_full_file(self):
        name = self._write(
            "# поток\nd=2\nN=64\nT=4\ndt=0.01\nsigma=0.3\nweight=rational\nphi_m=0.4\nphi_M=1.0\n"
            "noise_mode=common\nseed=17\nreplicas=500\nn_list=32,128\n"
        )
        with mock.patch.dict(os.environ, {}, clear=False):
            os.environ.pop('FLOCK_SEED', None)
            sim = load_config(name)
        self.assertEqual(sim.N, 64)
        self.assertEqual(sim.weight.phi_m, 0.4)
        self.assertEqual(sim.option('n_list'), [32, 128])
        self.assertEqual(sim.seed, 17)
        self.assertEqual(sim.n_steps, 400)

    def test_seed_precedence(self):
        name = self._write(
            "d=1\nN=2\nT=1\ndt=0.1\nsigma=0\nweight=constant\nphi0=1\nnoise_mode=none\nseed=1\nreplicas=1\n"
        )
        with mock.patch.dict(os.environ, {'FLOCK_SEED': '99'}):
            self.assertEqual(load_config(name).seed, 99)
            self.assertEqual(load_config(name, seed=5).seed, 5)

    def test_missing_weight_parameter(self):
        name = self._write(
            "d=1\nN=2\nT=1\ndt=0.1\nsigma=0\nweight=rational\nphi_m=0.1\nnoise_mode=none\nseed=1\nreplicas=1\n"
        )
        with self.assertRaises(LabConfigError) as ctx:
            load_config(name)
        self.assertEqual(ctx.exception.missing_keys, ['phi_M'])

    def test_invalid_values(self):
        with self.assertRaises(LabConfigError):
            SimConfig(d=0, N=1, T=1.0, dt=0.1, sigma=0.0, weight=constant_weight())
        with self.assertRaises(LabConfigError):
            SimConfig(d=1, N=1, T=1.0, dt=0.1, sigma=0.0, weight=constant_weight(), noise_mode='colored')

    def test_replica_seeds_distinct_and_stable(self):
        seeds = [replica_seed(42, i) for i in range(100)]
        self.assertEqual(len(set(seeds)), 100)
        self.assertEqual(seeds[3], replica_seed(42, 3))
