import math
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase, override_settings

from core.config import SimConfig
from core.exceptions import GridShapeError, LabDomainError
from core.paths import wiener_sample
from core.weights import constant_weight, rational_weight
from kinetic.grid import KineticState, PhaseGrid
from particle.engine import path_for, run
from particle.ensemble import ParticleEnsemble

from .bounds import (
    dissipation_bound_check, exponential_martingale_check, expectation_band_check, growth_bound_check,
    pathwise_bound_check, velocity_support_check,
)
from .moments import MomentSeries, fluctuation_energy, moments, moment_series, supports
from .statistics import bootstrap_rate, fit_decay_rate, mc_expectation, mean_series


def series_of(t, m2, path=None):
    n = len(t)
    return MomentSeries(
        t_grid=np.asarray(t, dtype=float), m0=np.ones(n), m1=np.zeros((n, 1)), m2=np.asarray(m2, dtype=float),
        e_t=np.asarray(m2, dtype=float), supp_x=np.ones(n), supp_v=np.ones(n), path=path,
    )


class MomentTests(SimpleTestCase):

    def setUp(self):
        self.ens = ParticleEnsemble(
            x=np.array([[0.0, 0.0], [3.0, 4.0]]), v=np.array([[1.0, 0.0], [0.0, -1.0]]),
        )

    def test_particle_moments(self):
        m0, m1, m2 = moments(self.ens)
        self.assertEqual(m0, 1.0)
        np.testing.assert_allclose(m1, [0.5, -0.5])
        self.assertAlmostEqual(m2, 1.0)

    def test_fluctuation_energy_about_initial_mean(self):
        self.assertAlmostEqual(fluctuation_energy(self.ens, [0.5, -0.5]), 0.5)
        self.assertAlmostEqual(fluctuation_energy(self.ens, [0.0, 0.0]), 1.0)

    def test_particle_supports(self):
        self.assertEqual(supports(self.ens), (5.0, 1.0))

    def test_series_tracks_initial_mean(self):
        series = moment_series([0.0, 1.0], [self.ens, self.ens])
        np.testing.assert_allclose(series.e_t, [0.5, 0.5])
        self.assertEqual(list(series.to_frame().columns), ['t', 'M0', 'M1_0', 'M1_1', 'M2', 'E', 'suppX', 'suppV'])

    def test_series_length_mismatch(self):
        with self.assertRaises(GridShapeError):
            MomentSeries(t_grid=np.zeros(3), m0=np.zeros(2), m1=np.zeros(3), m2=np.zeros(3),
                         e_t=np.zeros(3), supp_x=np.zeros(3), supp_v=np.zeros(3))

    def test_unknown_observable(self):
        with self.assertRaises(LabDomainError):
            series_of([0, 1], [1, 1]).values('m7')

    def test_empty_sequence(self):
        with self.assertRaises(LabDomainError):
            moment_series([], [])


class StatisticsTests(SimpleTestCase):

    def test_expectation_interval(self):
        mean, ci = mc_expectation([1.0, 2.0, 3.0, 4.0])
        self.assertEqual(mean, 2.5)
        self.assertAlmostEqual(ci, 1.96 * math.sqrt(5.0 / 3.0) / 2.0)

    def test_expectation_needs_two_samples(self):
        with self.assertRaises(LabDomainError):
            mc_expectation([1.0])

    def test_exact_exponential_rate(self):
        t = np.linspace(0, 4, 81)
        fit = fit_decay_rate(series_of(t, 0.3 * np.exp(-1.5 * t)))
        self.assertAlmostEqual(fit.rate, -1.5, places=10)
        self.assertAlmostEqual(fit.r_squared, 1.0, places=10)
        np.testing.assert_allclose(fit.window, (0.8, 3.6))

    def test_nonpositive_values_listed(self):
        t = np.linspace(0, 1, 11)
        m2 = np.exp(-t)
        m2[5] = 0.0
        with self.assertRaisesMessage(LabDomainError, '0.5'):
            fit_decay_rate(series_of(t, m2), window=(0.0, 1.0))

    def test_window_too_narrow(self):
        t = np.linspace(0, 1, 11)
        with self.assertRaises(LabDomainError):
            fit_decay_rate(series_of(t, np.exp(-t)), window=(0.52, 0.58))

    def test_mean_series_interval(self):
        t = np.linspace(0, 1, 5)
        mean = mean_series([series_of(t, np.ones(5)), series_of(t, 3 * np.ones(5))])
        np.testing.assert_allclose(mean.m2, 2.0)
        np.testing.assert_allclose(mean.m2_ci, 1.96 * math.sqrt(2.0) / math.sqrt(2.0))
        self.assertEqual(mean.n_replicas, 2)

    def test_mean_series_rejects_mixed_grids(self):
        with self.assertRaises(GridShapeError):
            mean_series([series_of([0, 1], [1, 1]), series_of([0, 2], [1, 1])])
        with self.assertRaises(LabDomainError):
            mean_series([series_of([0, 1], [1, 1])])

    def test_bootstrap_identical_replicas(self):
        t = np.linspace(0, 2, 21)
        replicas = [series_of(t, np.exp(-0.7 * t)) for _ in range(5)]
        fit = bootstrap_rate(replicas, n_boot=20)
        self.assertAlmostEqual(fit.rate, -0.7, places=10)
        self.assertAlmostEqual(fit.ci_halfwidth, 0.0, places=10)


class BoundTests(SimpleTestCase):

    def setUp(self):
        self.path = wiener_sample(9, 2.0, 0.01)
        t, W = self.path.t_grid, self.path.values
        self.exact = 0.4 * np.exp(-2.0 * t - 2.0 * 0.3 * W)

    def test_exact_constant_weight_series_passes(self):
        check = pathwise_bound_check(series_of(self.path.t_grid, self.exact, self.path), 1.0, 0.3, self.path)
        self.assertTrue(check.passed)
        self.assertEqual(check.max_violation, 0.0)

    def test_violation_is_located(self):
        m2 = self.exact.copy()
        m2[120] *= 1.5
        check = pathwise_bound_check(series_of(self.path.t_grid, m2, self.path), 1.0, 0.3, self.path)
        self.assertFalse(check.passed)
        self.assertAlmostEqual(check.worst_time, self.path.t_grid[120])

    def test_series_off_path_grid(self):
        series = series_of([0.0, 0.005], [1.0, 1.0])
        with self.assertRaises(GridShapeError):
            pathwise_bound_check(series, 1.0, 0.3, self.path)

    def test_band_not_applicable_under_strong_noise(self):
        t = np.linspace(0, 1, 11)
        mean = mean_series([series_of(t, np.exp(-t)), series_of(t, np.exp(-t))])
        check = expectation_band_check(mean, rational_weight(0.1, 1.0), 0.5, 0.01)
        self.assertFalse(check.applicable)

    def test_band_holds_inside(self):
        t = np.linspace(0, 2, 21)
        sigma, w = 0.3, rational_weight(0.4, 1.0)
        mid = np.exp(-2.0 * (0.7 - sigma ** 2) * t)
        mean = mean_series([series_of(t, mid), series_of(t, mid)])
        check = expectation_band_check(mean, w, sigma, 0.01)
        self.assertTrue(check.applicable)
        self.assertTrue(check.passed)
        self.assertAlmostEqual(check.details['upper_rate'], -2.0 * (0.4 - 0.09))

    def test_growth_bound(self):
        t = np.linspace(0, 1, 11)
        flat = mean_series([series_of(t, np.ones(11)), series_of(t, np.ones(11))])
        self.assertTrue(growth_bound_check(flat, math.sqrt(0.5), 0.01).passed)
        steep = mean_series([series_of(t, np.exp(3 * t)), series_of(t, np.exp(3 * t))])
        self.assertFalse(growth_bound_check(steep, math.sqrt(0.5), 0.01).passed)

    def test_exponential_martingale(self):
        check = exponential_martingale_check(0.3, 1.0, 0.05, paths=2000, seed=4)
        self.assertAlmostEqual(check.details['exact'], math.exp(0.18))
        self.assertLess(check.max_violation, 0.06)


class DecayBoundTests(SimpleTestCase):
    """Оценки через φ̄(2X) и носитель скоростей: синтетические ряды и прогоны частиц"""

    def setUp(self):
        self.path = wiener_sample(9, 2.0, 0.01)
        t, W = self.path.t_grid, self.path.values
        self.decay = np.exp(-t - 0.3 * W)
        self.series = replace(
            series_of(t, 0.4 * self.decay ** 2, self.path), supp_x=np.full(len(t), 3.0), supp_v=self.decay.copy(),
        )

    def test_constant_weight_dissipation_is_tight(self):
        check = dissipation_bound_check(self.series, constant_weight(1.0), 0.3, self.path)
        self.assertTrue(check.passed)
        self.assertEqual(check.max_violation, 0.0)

    def test_dissipation_violation_is_located(self):
        m2 = self.series.m2.copy()
        m2[150] *= 1.5
        check = dissipation_bound_check(replace(self.series, m2=m2), constant_weight(1.0), 0.3, self.path)
        self.assertFalse(check.passed)
        self.assertAlmostEqual(check.worst_time, self.path.t_grid[150])

    def test_dissipation_uses_position_support(self):
        # широкий носитель: φ̄(2X) близко к φ_m, нулевой: φ̄ = φ_M
        w = rational_weight(0.2, 1.0)
        slow = replace(self.series, m2=0.4 * np.exp(-0.5 * self.path.t_grid - 0.6 * self.path.values))
        wide = replace(slow, supp_x=np.full(len(self.path.t_grid), 50.0))
        self.assertTrue(dissipation_bound_check(wide, w, 0.3, self.path).passed)
        self.assertFalse(dissipation_bound_check(replace(slow, supp_x=np.zeros_like(slow.supp_x)), w, 0.3,
                                                 self.path).passed)

    def test_velocity_support_holds_for_decaying_support(self):
        check = velocity_support_check(self.series, constant_weight(1.0), 0.3, self.path, d=1)
        self.assertTrue(check.passed)

    def test_velocity_support_violation(self):
        supp_v = self.series.supp_v.copy()
        supp_v[5] *= 3.0
        check = velocity_support_check(replace(self.series, supp_v=supp_v), constant_weight(1.0), 0.3,
                                       self.path, d=1)
        self.assertFalse(check.passed)
        self.assertAlmostEqual(check.worst_time, self.path.t_grid[5])

    def test_particle_run_respects_bounds(self):
        w = rational_weight(0.2, 1.0)
        cfg = SimConfig(d=2, N=16, T=1.0, dt=0.01, sigma=0.3, weight=w, noise_mode='common', seed=5, replicas=1)
        record = run(cfg, path=path_for(cfg), keep_states=False)
        self.assertTrue(dissipation_bound_check(record.series, w, 0.3, record.path).passed)
        self.assertTrue(velocity_support_check(record.series, w, 0.3, record.path, d=2).passed)
        self.assertTrue(pathwise_bound_check(record.series, w.phi_m, 0.3, record.path).passed)


@override_settings(FLOCK_SUPPORT_THRESHOLD=0.5)
class ThresholdSettingTests(SimpleTestCase):

    def test_threshold_from_settings(self):
        grid = PhaseGrid((-1, 1), (-1, 1), 9, 9)
        f = np.zeros(grid.shape)
        f[4, 4], f[8, 8] = 1.0, 0.25
        self.assertEqual(supports(KineticState(grid=grid, f=f)), (0.0, 0.0))
