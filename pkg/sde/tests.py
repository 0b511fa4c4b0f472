import math

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import GridShapeError, NumericalBlowupError
from core.paths import wiener_refine, wiener_sample

from .integrators import (
    AffineCoefficients,
    convergence_summary,
    default_convergence_problem,
    integrate_ito,
    integrate_stratonovich,
    ito_drift_correction,
    observed_order,
    strong_convergence_study,
)
from .oracles import Trajectory, affine_spec_on, comparison_check, gbm_affine_closed_form


class ClosedFormTests(SimpleTestCase):

    def setUp(self):
        self.path = wiener_sample(21, 1.0, 0.01)

    def test_no_dynamics(self):
        traj = gbm_affine_closed_form(affine_spec_on(self.path, 5.0, 0.0, 0.0, 0.0), self.path)
        np.testing.assert_allclose(traj.states, 5.0, rtol=0, atol=1e-14)

    def test_geometric_brownian_motion(self):
        mu, sigma0, x0 = 0.3, 0.7, 2.0
        traj = gbm_affine_closed_form(affine_spec_on(self.path, x0, 0.0, mu, sigma0), self.path)
        expected = x0 * np.exp((mu - 0.5 * sigma0 ** 2) * self.path.t_grid + sigma0 * self.path.values)
        np.testing.assert_allclose(traj.states, expected, rtol=1e-12)

    def test_constant_forcing(self):
        traj = gbm_affine_closed_form(affine_spec_on(self.path, 1.5, 1.0, 0.0, 0.0), self.path)
        bound = self.path.dt ** 2 * self.path.T
        self.assertLessEqual(np.max(np.abs(traj.states - (1.5 + self.path.t_grid))), bound)

    def test_deterministic_variation_of_constants(self):
        # dx = (cos t − x) dt: x = e^{-t}(x0 − 1/2) + (cos t + sin t)/2
        traj = gbm_affine_closed_form(affine_spec_on(self.path, 1.0, np.cos, -1.0, 0.0), self.path)
        t = self.path.t_grid
        exact = np.exp(-t) * 0.5 + 0.5 * (np.cos(t) + np.sin(t))
        self.assertLessEqual(np.max(np.abs(traj.states - exact)), 2 * self.path.dt ** 2)

    def test_grid_mismatch(self):
        other = wiener_sample(21, 1.0, 0.02)
        with self.assertRaises(GridShapeError):
            gbm_affine_closed_form(affine_spec_on(other, 1.0, 0.0, 0.0, 0.0), self.path)


class IntegratorTests(SimpleTestCase):

    def test_zero_coefficients(self):
        path = wiener_sample(3, 1.0, 0.01)
        zero = lambda x, t: 0.0 * x
        traj = integrate_ito(zero, zero, 2.5, path)
        np.testing.assert_array_equal(traj.states, 2.5)

    def test_linear_decay(self):
        path = wiener_sample(3, 1.0, 0.01)
        traj = integrate_ito(lambda x, t: -x, lambda x, t: 0.0 * x, 1.0, path)
        self.assertAlmostEqual(traj.terminal, math.exp(-1.0), delta=5 * path.dt)

    def test_blowup_reports_step(self):
        path = wiener_sample(3, 1.0, 0.1)
        with self.assertRaises(NumericalBlowupError) as ctx:
            integrate_ito(lambda x, t: x * 1e200, lambda x, t: 0.0 * x, 1e200, path)
        self.assertEqual(ctx.exception.step, 1)

    def test_euler_maruyama_halving(self):
        paths = [wiener_sample(seed, 1.0, 2.0 ** -8) for seed in range(20)]
        table = strong_convergence_study(
            default_convergence_problem(), paths, [2.0 ** -8, 2.0 ** -9, 2.0 ** -10], scheme='ito'
        )
        summary = convergence_summary(table)
        for row in summary.itertuples():
            self.assertGreaterEqual(row.fraction_decreasing, 0.9)
            self.assertGreaterEqual(row.median_ratio, 0.35)
            self.assertLessEqual(row.median_ratio, 0.65)

    def test_default_problem_is_first_order(self):
        paths = [wiener_sample(seed, 1.0, 2.0 ** -8) for seed in range(20)]
        table = strong_convergence_study(
            default_convergence_problem(), paths, [2.0 ** -8, 2.0 ** -9, 2.0 ** -10], scheme='ito'
        )
        self.assertGreaterEqual(observed_order(table), 0.8)
        self.assertLessEqual(observed_order(table), 1.25)

    def test_noise_dominated_problem_is_half_order(self):
        noisy = AffineCoefficients(x0=1.0, a=0.0, b=0.0, c=0.5)
        paths = [wiener_sample(seed, 1.0, 2.0 ** -8) for seed in range(40)]
        table = strong_convergence_study(noisy, paths, [2.0 ** -8, 2.0 ** -9, 2.0 ** -10], scheme='ito')
        self.assertGreaterEqual(observed_order(table), 0.3)
        self.assertLessEqual(observed_order(table), 0.75)

    def test_heun_decreases(self):
        paths = [wiener_sample(seed, 1.0, 2.0 ** -8) for seed in range(20)]
        table = strong_convergence_study(
            default_convergence_problem(), paths, [2.0 ** -8, 2.0 ** -9, 2.0 ** -10], scheme='stratonovich'
        )
        for row in convergence_summary(table).itertuples():
            self.assertGreaterEqual(row.fraction_decreasing, 0.9)

    def test_stratonovich_exponential(self):
        base = wiener_sample(8, 1.0, 2.0 ** -6)
        fine = wiener_refine(base, 4)
        errors = []
        for stride in (4, 2, 1):
            path = fine.coarsen(stride) if stride > 1 else fine
            traj = integrate_stratonovich(lambda x, t: 0.0 * x, lambda x, t: -x, 1.0, path)
            errors.append(np.max(np.abs(traj.states - np.exp(-path.values))))
        self.assertLess(errors[2], errors[0])

    def test_heun_without_noise(self):
        path = wiener_sample(5, 1.0, 0.05)
        traj = integrate_stratonovich(lambda x, t: -x, lambda x, t: 0.0 * x, 1.0, path)
        h = path.dt
        expected = (1.0 - h + 0.5 * h * h) ** np.arange(path.K + 1)
        np.testing.assert_allclose(traj.states, expected, rtol=1e-12)

    def test_ito_and_stratonovich_laws_agree(self):
        sigma, n = 0.5, 2000
        differences = []
        for seed in range(n):
            path = wiener_sample(10_000 + seed, 0.5, 0.02)
            strat = integrate_stratonovich(lambda x, t: 0.0 * x, lambda x, t: -sigma * x, 1.0, path)
            ito = integrate_ito(lambda x, t: 0.5 * sigma ** 2 * x, lambda x, t: -sigma * x, 1.0, path)
            differences.append(ito.terminal - strat.terminal)
        differences = np.asarray(differences)
        halfwidth = 3.0 * differences.std(ddof=1) / math.sqrt(n)
        self.assertLessEqual(abs(differences.mean()), halfwidth)


class DriftCorrectionTests(SimpleTestCase):

    def test_zero_sigma(self):
        np.testing.assert_array_equal(ito_drift_correction(0.0)(np.array([1.0, -3.0]), 0.0), 0.0)

    def test_unit_sigma(self):
        self.assertEqual(ito_drift_correction(1.0)(np.array([2.0]), np.array([0.0]))[0], 1.0)

    def test_symmetric_pair(self):
        v = np.array([[1.0], [-1.0]])
        adj = ito_drift_correction(0.7)(v, v.mean(axis=0))
        np.testing.assert_allclose(adj[0], -adj[1])


class ComparisonTests(SimpleTestCase):

    def _pair(self, seed, shift):
        path = wiener_sample(seed, 1.0, 0.01)
        a = lambda t: 1.0 + np.sin(3.0 * t)
        y = gbm_affine_closed_form(affine_spec_on(path, 1.0, a, -0.5, 0.4), path)
        x = gbm_affine_closed_form(affine_spec_on(path, 1.0, lambda t: a(t) + shift, -0.5, 0.4), path)
        return x, y

    def test_drift_dominated_ordering(self):
        for seed in range(100):
            x, y = self._pair(seed, -0.5)
            ok, index = comparison_check(x, y)
            self.assertTrue(ok, msg=f"seed={seed} index={index}")

    def test_identical(self):
        x, _ = self._pair(1, 0.0)
        self.assertEqual(comparison_check(x, x), (True, None))

    def test_reversed_violation(self):
        x, y = self._pair(2, 0.5)
        ok, index = comparison_check(x, y)
        self.assertFalse(ok)
        self.assertEqual(index, 1)

    def test_grid_mismatch(self):
        x = Trajectory(t_grid=np.linspace(0, 1, 5), states=np.zeros(5))
        y = Trajectory(t_grid=np.linspace(0, 1, 6), states=np.zeros(6))
        with self.assertRaises(GridShapeError):
            comparison_check(x, y)
