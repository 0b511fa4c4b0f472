import math

import numpy as np
from django.test import SimpleTestCase
from scipy.interpolate import RegularGridInterpolator

from core.config import SimConfig, rng_for
from core.exceptions import GridShapeError, LabConfigError, OutOfGridError
from core.paths import wiener_sample
from core.weights import constant_weight, rational_weight
from observables.moments import moments, supports
from particle.engine import run
from particle.ensemble import sample_from_density

from .characteristics import ExtendedHull, backward_step, characteristics_step
from .fields import FrozenField, div_v_Fa, field_Fa
from .grid import (
    KineticState, PhaseGrid, datum_radius, indicator_density, moment_bound, support_envelopes, validate_grid,
)
from .solver import (
    IterationDiagnostics, evolve_semi_lagrangian, expected_supnorm_check, iterate_moment_check, mollify_initial,
    pathwise_supnorm_check, semi_lagrangian_evolve, solve_fixed_point, static_trajectory, successive_step,
    support_envelope_check,
)


def nodal_interpolator(state):
    grid = state.grid
    return RegularGridInterpolator((grid.x_nodes, grid.v_nodes), state.f, bounds_error=False, fill_value=0.0)


def datum(n=33, half=2.0, x_half=0.5, v_half=0.5, eps=0.3):
    grid = PhaseGrid((-half, half), (-half, half), n, n)
    return mollify_initial(indicator_density(grid, x_half, v_half), eps)


class GridTests(SimpleTestCase):

    def test_too_few_nodes(self):
        with self.assertRaises(GridShapeError):
            PhaseGrid((-1, 1), (-1, 1), 4, 16)

    def test_empty_rectangle(self):
        with self.assertRaises(GridShapeError):
            PhaseGrid((1, 1), (-1, 1), 16, 16)

    def test_density_shape_checked(self):
        grid = PhaseGrid((-1, 1), (-1, 1), 16, 16)
        with self.assertRaises(GridShapeError):
            KineticState(grid=grid, f=np.zeros((16, 15)))

    def test_indicator_is_normalized(self):
        state = indicator_density(PhaseGrid((-2, 2), (-2, 2), 33, 33), 0.5, 0.25)
        self.assertAlmostEqual(state.mass, 1.0, places=12)
        supp_x, supp_v = supports(state)
        self.assertAlmostEqual(supp_x, 0.5, delta=0.125)
        self.assertAlmostEqual(supp_v, 0.25, delta=0.125)

    def test_uniform_second_moment(self):
        grid = PhaseGrid((-1, 1), (-1, 1), 65, 65)
        f = np.full(grid.shape, 0.25)
        m0, _, m2 = moments(KineticState(grid=grid, f=f))
        self.assertAlmostEqual(m0, 1.0, places=12)
        self.assertAlmostEqual(m2, 1.0 / 3.0, delta=grid.hv ** 2)

    def test_envelopes_start_at_radius(self):
        path = wiener_sample(1, 0.5, 0.01)
        x_env, v_env = support_envelopes(path, 0.7, 0.1, 1.0, 0.3)
        self.assertAlmostEqual(v_env[0], 0.7)
        self.assertAlmostEqual(x_env[0], math.sqrt(2) * 0.7)
        self.assertTrue(np.all(np.diff(x_env) >= 0))
        self.assertAlmostEqual(moment_bound(path, 0.1, 1.0, 0.3)[0], 1.1)

    def test_undersized_grid_refused(self):
        f_in = datum(n=33, half=1.0, eps=0.2)
        path = wiener_sample(3, 0.5, 0.01)
        with self.assertRaises(LabConfigError):
            validate_grid(f_in.grid, path, datum_radius(f_in), moments(f_in)[2], 1.0, 0.3)
        with self.assertRaises(LabConfigError):
            solve_fixed_point(f_in, constant_weight(1.0), 0.3, path, tol=1e-6)


class FieldTests(SimpleTestCase):

    def setUp(self):
        self.state = indicator_density(PhaseGrid((-2, 2), (-2, 2), 33, 33), 0.5, 0.5)

    def test_symmetric_density_at_zero_velocity(self):
        self.assertAlmostEqual(field_Fa(self.state, rational_weight(0.2, 1.0), 0.3, 0.0), 0.0, places=12)

    def test_fast_velocity_constant_weight(self):
        self.assertAlmostEqual(field_Fa(self.state, constant_weight(1.0), 0.0, 1.8), -1.8, places=12)

    def test_point_mass(self):
        grid = self.state.grid
        f = np.zeros(grid.shape)
        f[20, 24] = 1.0 / (grid.hx * grid.hv)
        state = KineticState(grid=grid, f=f)
        v0 = grid.v_nodes[24]
        self.assertAlmostEqual(field_Fa(state, constant_weight(1.0), -0.4, 0.1), v0 - 0.1, places=12)

    def test_divergence_is_minus_mass(self):
        self.assertAlmostEqual(div_v_Fa(self.state, constant_weight(1.0), 0.7), -1.0, places=12)

    def test_divergence_of_empty_density(self):
        empty = KineticState(grid=self.state.grid, f=np.zeros(self.state.grid.shape))
        self.assertEqual(div_v_Fa(empty, rational_weight(), 0.0), 0.0)

    def test_divergence_within_weight_bounds(self):
        w = rational_weight(0.3, 1.0)
        values = div_v_Fa(self.state, w, self.state.grid.x_nodes)
        self.assertTrue(np.all(values <= -w.phi_m + 1e-12))
        self.assertTrue(np.all(values >= -w.phi_M - 1e-12))

    def test_out_of_grid(self):
        with self.assertRaises(OutOfGridError):
            field_Fa(self.state, constant_weight(), 5.0, 0.0)
        with self.assertRaises(OutOfGridError):
            div_v_Fa(self.state, constant_weight(), -2.5)

    def test_frozen_field_matches_direct_quadrature(self):
        w = rational_weight(0.1, 1.0)
        nodes = self.state.grid.x_nodes
        frozen = FrozenField.from_state(self.state, w, nodes)
        np.testing.assert_allclose(frozen.force(nodes, 0.3), field_Fa(self.state, w, nodes, 0.3), atol=1e-14)
        np.testing.assert_allclose(frozen.divergence(nodes), div_v_Fa(self.state, w, nodes), atol=1e-14)


class CharacteristicsTests(SimpleTestCase):

    def setUp(self):
        self.axis = np.linspace(-4, 4, 65)
        self.x = np.array([-0.5, 0.0, 0.8])
        self.v = np.array([1.0, -0.3, 0.2])

    def test_free_transport(self):
        zero = FrozenField.constant(0.0, 0.0, self.axis)
        x, v = characteristics_step(self.x, self.v, zero, 0.0, 0.02, 0.1)
        np.testing.assert_allclose(x, self.x + 0.1 * self.v)
        np.testing.assert_allclose(v, self.v)

    def test_constant_force(self):
        push = FrozenField.constant(0.7, 0.0, self.axis)
        _, v = characteristics_step(self.x, self.v, push, 0.0, 0.0, 0.1)
        np.testing.assert_allclose(v, self.v + 0.07)

    def test_noise_only_matches_exponential(self):
        zero = FrozenField.constant(0.0, 0.0, self.axis)
        sigma, dW = 0.5, 0.01
        _, v = characteristics_step(self.x, self.v, zero, sigma, dW, 0.001)
        np.testing.assert_allclose(v, self.v * math.exp(-sigma * dW), rtol=1e-7)

    def test_backward_inverts_constant_force(self):
        push = FrozenField.constant(0.4, 0.0, self.axis)
        x1, v1 = characteristics_step(self.x, self.v, push, 0.0, 0.0, 0.05)
        x0, v0 = backward_step(x1, v1, push, push, 0.0, 0.0, 0.05)
        np.testing.assert_allclose(x0, self.x, atol=1e-14)
        np.testing.assert_allclose(v0, self.v, atol=1e-14)

    def test_clamp_counts_exits(self):
        hull = ExtendedHull(PhaseGrid((-1, 1), (-1, 1), 16, 16))
        zero = FrozenField.constant(0.0, 0.0, hull.axis())
        with self.assertLogs('kinetic.characteristics', level='WARNING'):
            x, v = characteristics_step(np.array([1.9]), np.array([10.0]), zero, 0.0, 0.0, 0.1, hull=hull)
        self.assertEqual(hull.clamped, 1)
        self.assertLessEqual(x[0], hull.x_bounds[1])
        self.assertLessEqual(v[0], hull.v_bounds[1])


class MollifyTests(SimpleTestCase):

    def setUp(self):
        self.raw = indicator_density(PhaseGrid((-2, 2), (-2, 2), 41, 41), 0.5, 0.5)

    def test_mass_momentum_and_supnorm(self):
        smooth = mollify_initial(self.raw, 0.3)
        self.assertAlmostEqual(smooth.mass, 1.0, delta=1e-10)
        self.assertLessEqual(abs(moments(smooth)[1][0]), 1e-12)
        self.assertLessEqual(smooth.sup_norm, self.raw.sup_norm * (1 + 1e-6))

    def test_support_grows_by_eps(self):
        eps = 0.3
        (sx, sv), (rx, rv) = supports(mollify_initial(self.raw, eps)), supports(self.raw)
        self.assertLessEqual(sx, rx + eps + 1e-12)
        self.assertLessEqual(sv, rv + eps + 1e-12)

    def test_sub_cell_eps_is_identity(self):
        smooth = mollify_initial(self.raw, 0.5 * self.raw.grid.hx)
        np.testing.assert_allclose(smooth.f, self.raw.f, atol=1e-12 * self.raw.sup_norm)

    def test_recenters_velocity(self):
        grid = self.raw.grid
        X, V = grid.mesh()
        f = ((np.abs(X) <= 0.5) & (V >= -0.2) & (V <= 0.7)).astype(float)
        raw = KineticState(grid=grid, f=f / grid.integrate(f))
        smooth = mollify_initial(raw, 0.2)
        self.assertLessEqual(abs(moments(smooth)[1][0]), 1e-3)
        self.assertTrue(np.all(smooth.f >= 0))

    def test_support_too_wide(self):
        raw = indicator_density(PhaseGrid((-1, 1), (-1, 1), 21, 21), 0.9, 0.5)
        with self.assertRaises(LabConfigError):
            mollify_initial(raw, 0.2)

    def test_bad_eps(self):
        with self.assertRaises(LabConfigError):
            mollify_initial(self.raw, 0.0)


class SuccessiveStepTests(SimpleTestCase):

    def setUp(self):
        self.f_in = datum(n=49)
        self.path = wiener_sample(7, 0.25, 0.05)

    def test_free_transport(self):
        pull = successive_step(static_trajectory(self.f_in, self.path), self.f_in, constant_weight(0.0), 0.0, self.path)
        grid = self.f_in.grid
        X, V = grid.mesh()
        shifted = X - V * self.path.T
        expected = nodal_interpolator(self.f_in)(np.stack([shifted, V], axis=-1))
        np.testing.assert_allclose(pull.trajectory.final.f, expected, atol=1e-12)

    def test_noise_keeps_mass(self):
        pull = successive_step(static_trajectory(self.f_in, self.path), self.f_in, constant_weight(0.0), 0.5, self.path)
        masses = np.array([state.mass for state in pull.trajectory.states])
        self.assertLessEqual(np.max(np.abs(masses - 1.0)), 0.01)

    def test_first_iterate_moment_bound(self):
        w, sigma = constant_weight(1.0), 0.3
        trajectory, diagnostics = solve_fixed_point(self.f_in, w, sigma, self.path, tol=1e-6, max_iter=1,
                                                    validate=False)
        check = iterate_moment_check(diagnostics, self.path, moments(self.f_in)[2], w.phi_M, sigma)
        self.assertTrue(check.passed)
        self.assertTrue(all(np.all(state.f >= 0) for state in trajectory.states))

    def test_time_mismatch(self):
        other = wiener_sample(7, 0.5, 0.05)
        with self.assertRaises(GridShapeError):
            successive_step(static_trajectory(self.f_in, other), self.f_in, constant_weight(), 0.3, self.path)


class FixedPointTests(SimpleTestCase):

    def setUp(self):
        self.f_in = datum(n=33)
        self.path = wiener_sample(11, 0.25, 0.05)

    def test_zero_weight_converges_at_once(self):
        _, diagnostics = solve_fixed_point(self.f_in, constant_weight(0.0), 0.3, self.path, tol=1e-10,
                                           validate=False)
        self.assertTrue(diagnostics.converged)
        self.assertEqual(diagnostics.converged_at, 1)

    def test_constant_weight_conservation(self):
        tol = 1e-6 * self.f_in.sup_norm
        trajectory, diagnostics = solve_fixed_point(self.f_in, constant_weight(1.0), 0.3, self.path, tol=tol,
                                                    max_iter=8, validate=False)
        self.assertTrue(diagnostics.converged)
        self.assertTrue(all(gap >= 0 for gap in diagnostics.gaps + diagnostics.flow_gaps))
        series = trajectory.series
        self.assertLessEqual(np.max(np.abs(series.m0 - 1.0)), 0.01)
        self.assertLessEqual(np.max(np.abs(series.m1)), 0.01 * math.sqrt(series.m2[0]))
        self.assertTrue(pathwise_supnorm_check(trajectory, 1.0, 0.3).passed)

    def test_gaps_shrink_for_rational_weight(self):
        _, diagnostics = solve_fixed_point(self.f_in, rational_weight(0.1, 1.0), 0.3, self.path,
                                           tol=1e-9, max_iter=6, validate=False)
        self.assertLess(diagnostics.gaps[-1], diagnostics.gaps[0])
        self.assertEqual(len(diagnostics.to_frame()), diagnostics.iterations)

    def test_non_convergence_is_flagged(self):
        with self.assertLogs('kinetic.solver', level='WARNING'):
            trajectory, diagnostics = solve_fixed_point(self.f_in, constant_weight(1.0), 0.3, self.path,
                                                        tol=1e-30, max_iter=1, validate=False)
        self.assertFalse(diagnostics.converged)
        self.assertIsNone(diagnostics.converged_at)
        self.assertEqual(len(trajectory.states), self.path.K + 1)

    def test_solution_stays_inside_envelopes(self):
        trajectory, _ = solve_fixed_point(self.f_in, constant_weight(1.0), 0.3, self.path,
                                          tol=1e-6 * self.f_in.sup_norm, max_iter=8, validate=False)
        check = support_envelope_check(trajectory, datum_radius(self.f_in), 1.0, 0.3)
        self.assertTrue(check.passed, check.details)
        self.assertEqual(check.details['cell'], self.f_in.grid.hx)

    def test_envelopes_of_smaller_datum_are_violated(self):
        trajectory, _ = solve_fixed_point(self.f_in, constant_weight(1.0), 0.3, self.path,
                                          tol=1e-6 * self.f_in.sup_norm, max_iter=8, validate=False)
        check = support_envelope_check(trajectory, 0.25 * datum_radius(self.f_in), 1.0, 0.3)
        self.assertFalse(check.passed)
        self.assertGreater(check.max_violation, 0.0)

    def test_moments_agree_with_particles_on_same_path(self):
        w, sigma = constant_weight(1.0), 0.3
        trajectory, _ = solve_fixed_point(self.f_in, w, sigma, self.path, tol=1e-6 * self.f_in.sup_norm,
                                          max_iter=8, validate=False)
        cfg = SimConfig(d=1, N=4096, T=self.path.T, dt=self.path.dt, sigma=sigma, weight=w,
                        noise_mode='common', seed=11, replicas=1)
        ens0 = sample_from_density(self.f_in, cfg.N, rng_for(3))
        particles = run(cfg, path=self.path, ens0=ens0, keep_states=False)
        kinetic_m2 = trajectory.series.m2
        self.assertLessEqual(abs(kinetic_m2[-1] - particles.series.m2[-1]), 0.05 * kinetic_m2[0])
        self.assertAlmostEqual(kinetic_m2[-1] / kinetic_m2[0], particles.series.m2[-1] / particles.series.m2[0],
                               delta=0.05)

    def test_bad_tolerance(self):
        with self.assertRaises(LabConfigError):
            solve_fixed_point(self.f_in, constant_weight(), 0.3, self.path, tol=0.0)


class IterationDiagnosticsTests(SimpleTestCase):

    def diagnostics(self, gaps, T=1.0):
        return IterationDiagnostics(tol=1e-12, T=T, sup_in=1.0, gaps=list(gaps), flow_gaps=list(gaps))

    def test_factorial_gaps_pass(self):
        T = 0.5
        check = self.diagnostics([T ** n / math.factorial(n) for n in range(1, 8)], T=T).factorial_signature()
        self.assertTrue(check.passed)
        self.assertEqual(check.max_violation, 0.0)
        self.assertEqual(check.details['usable_ratios'], 5.0)
        np.testing.assert_allclose(
            self.diagnostics([T ** n / math.factorial(n) for n in range(1, 8)], T=T).contraction_constants(), 1.0,
        )

    def test_geometric_gaps_within_slack(self):
        self.assertTrue(self.diagnostics([0.5 ** n for n in range(7)]).factorial_signature().passed)

    def test_growing_ratios_fail(self):
        check = self.diagnostics([1.0, 0.1, 0.05, 0.04]).factorial_signature()
        self.assertFalse(check.passed)
        self.assertEqual(check.worst_time, 2.0)
        self.assertAlmostEqual(check.max_violation, 5.0 - 1.1)

    def test_gaps_at_round_off_are_ignored(self):
        check = self.diagnostics([1.0, 1e-3, 1e-15, 1e-15, 1e-15]).factorial_signature()
        self.assertFalse(check.passed)
        self.assertEqual(check.details['usable_ratios'], 1.0)

    def test_ratios_skip_zero_gaps(self):
        np.testing.assert_allclose(self.diagnostics([0.0, 1.0, 0.5]).ratios(), [0.0, 0.5])


class SemiLagrangianTests(SimpleTestCase):

    def setUp(self):
        self.f_in = datum(n=49)
        self.path = wiener_sample(5, 0.25, 0.05)

    def test_free_transport_step(self):
        state = semi_lagrangian_evolve(self.f_in, constant_weight(0.0), 0.0, self.path, 0.05)
        grid = self.f_in.grid
        X, V = grid.mesh()
        np.testing.assert_allclose(state.f, nodal_interpolator(self.f_in)(np.stack([X - 0.05 * V, V], axis=-1)), atol=1e-12)
        self.assertAlmostEqual(state.t, 0.05)

    def test_mass_and_positivity(self):
        trajectory = evolve_semi_lagrangian(self.f_in, constant_weight(1.0), 0.3, self.path, validate=False)
        masses = np.array([state.mass for state in trajectory.states])
        self.assertLessEqual(np.max(np.abs(masses - 1.0)), 0.01)
        self.assertTrue(all(np.all(state.f >= 0) for state in trajectory.states))
        self.assertTrue(pathwise_supnorm_check(trajectory, 1.0, 0.3).passed)

    def test_expected_supnorm(self):
        f_in = datum(n=33)
        check = expected_supnorm_check(f_in, constant_weight(1.0), 0.3, 0.2, 0.05, paths=4, seed=2)
        self.assertTrue(check.passed)
