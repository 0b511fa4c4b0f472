import json
import os
import shutil
import tempfile
from io import StringIO
from unittest import mock

import numpy as np
import pandas as pd
from django.conf import settings
from django.contrib.auth import get_user_model
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings
from django.urls import reverse

from core.config import load_config
from core.exceptions import LabConfigError
from observables.bounds import BoundCheck

from .context import Check
from .models import CheckResult, ExperimentRun
from .report import SUMMARY_NAME, emit_report, report_status
from .runner import (
    EXPERIMENT_NAMES, MANIFEST_NAME, ExperimentSpec, checks_from_manifest, exit_status, read_manifest,
    run_experiment,
)
from .suites import DEFAULT_EPS_LIST, SUITES

STABILITY_CONFIG = """\
# малый прогон устойчивости
d=1
N=8
T=0.2
dt=0.02
sigma=0.3
weight=rational
phi_m=0.2
phi_M=1.0
noise_mode=common
seed=5
replicas=1
perturbation=0.001
"""

BASE_KEYS = """\
d={d}
N={N}
T={T}
dt={dt}
sigma=0.3
noise_mode=common
seed=5
replicas={replicas}
"""

CONSTANT_WEIGHT = 'weight=constant\nphi0=1.0\n'
RATIONAL_WEIGHT = 'weight=rational\nphi_m=0.2\nphi_M=1.0\n'
KINETIC_KEYS = 'nx=32\nnv=32\ntol=1e-6\nmax_iter=12\n'


def small_config(d=1, N=8, T=0.2, dt=0.02, replicas=1, weight=CONSTANT_WEIGHT, extra=''):
    return BASE_KEYS.format(d=d, N=N, T=T, dt=dt, replicas=replicas) + weight + extra


def write_manifest(directory, experiment, checks):
    os.makedirs(directory, exist_ok=True)
    lines = [f'experiment={experiment}', 'wall_time=1.234']
    for tag, passed, measured in checks:
        lines.append(f"check.{tag}={'pass' if passed else 'fail'}")
        lines.append(f'measured.{tag}={json.dumps(measured, sort_keys=True)}')
    with open(os.path.join(directory, MANIFEST_NAME), 'w', encoding='utf-8') as fh:
        fh.write('\n'.join(lines) + '\n')


class TempDirMixin:

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.mkdtemp(prefix='flock-test-')
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)

    def write_config(self, text, name='run.cfg'):
        path = os.path.join(self.tmp, name)
        with open(path, 'w', encoding='utf-8') as fh:
            fh.write(text)
        return path


class CheckTests(SimpleTestCase):

    def test_exit_status_is_function_of_checks(self):
        self.assertEqual(exit_status([]), 0)
        self.assertEqual(exit_status([Check('a', True), Check('b', True)]), 0)
        self.assertEqual(exit_status([Check('a', True), Check('b', False)]), 1)

    def test_bound_check_values_are_json_ready(self):
        check = Check.from_bound('band', BoundCheck(passed=False, max_violation=float('inf'), worst_time=0.5))
        self.assertEqual(check.measured['max_violation'], 'inf')
        self.assertTrue(check.measured['applicable'])
        json.dumps(check.measured)


class RunnerTests(TempDirMixin, SimpleTestCase):

    def test_unknown_experiment(self):
        config = load_config(self.write_config(STABILITY_CONFIG))
        with self.assertRaises(LabConfigError):
            ExperimentSpec(name='flock-speed', config=config, output_dir=self.tmp)

    def test_all_names_registered(self):
        self.assertEqual(len(EXPERIMENT_NAMES), 10)
        self.assertIn('kinetic-supnorm', EXPERIMENT_NAMES)

    def test_stability_run_writes_artifacts(self):
        config = load_config(self.write_config(STABILITY_CONFIG))
        out = os.path.join(self.tmp, 'out')
        result = run_experiment(ExperimentSpec(name='stability', config=config, output_dir=out))
        self.assertEqual(result.exit_status, 0, result.failures())
        self.assertTrue(os.path.isfile(os.path.join(out, 'stability.csv')))

        items = read_manifest(result.manifest_path)
        self.assertEqual(items['experiment'], 'stability')
        self.assertEqual(items['config.config_hash'], config.config_hash)
        self.assertEqual(items['seed.master'], '5')
        self.assertIn('version.numpy', items)
        tags = [check.tag for check in checks_from_manifest(items)]
        self.assertEqual(tags, ['stability-ratio-finite', 'linear-response', 'position-perturbation-bounded'])
        self.assertEqual(exit_status(checks_from_manifest(items)), result.exit_status)

    def test_rerun_reproduces_tables(self):
        config = load_config(self.write_config(STABILITY_CONFIG))
        tables = []
        for name in ('a', 'b'):
            out = os.path.join(self.tmp, name)
            run_experiment(ExperimentSpec(name='stability', config=config, output_dir=out))
            with open(os.path.join(out, 'stability.csv'), encoding='utf-8') as fh:
                tables.append(fh.read())
        self.assertEqual(tables[0], tables[1])

    def test_kinetic_requires_one_dimension(self):
        config = load_config(self.write_config(STABILITY_CONFIG.replace('d=1', 'd=2')))
        with self.assertRaises(LabConfigError):
            run_experiment(ExperimentSpec(name='kinetic-supnorm', config=config, output_dir=self.tmp))


class ReportTests(TempDirMixin, SimpleTestCase):

    def test_no_manifests(self):
        with self.assertRaises(LabConfigError):
            emit_report(self.tmp)

    def test_single_passing_run(self):
        write_manifest(os.path.join(self.tmp, 'run1'), 'oracle-suite', [('comparison-principle', True, {'held': 100})])
        target = emit_report(self.tmp)
        with open(target, encoding='utf-8') as fh:
            text = fh.read()
        self.assertTrue(text.startswith('overall=pass\nruns=1\nchecks=1\nfailed=0\n'))
        self.assertIn('comparison-principle', text)
        self.assertEqual(report_status(self.tmp), 0)

    def test_mixed_runs_fail_overall(self):
        write_manifest(os.path.join(self.tmp, 'a'), 'flock-rate', [('rate-band', True, {'rate': -1.5})])
        write_manifest(os.path.join(self.tmp, 'b'), 'chaos', [('chaos-decreasing', False, {'fraction': 0.8})])
        with open(emit_report(self.tmp), encoding='utf-8') as fh:
            lines = fh.read().splitlines()
        self.assertEqual(lines[0], 'overall=fail')
        self.assertEqual(lines[3], 'failed=1')
        self.assertEqual(sum('chaos-decreasing' in line for line in lines), 1)
        self.assertEqual(report_status(self.tmp), 1)

    def test_report_is_idempotent(self):
        write_manifest(os.path.join(self.tmp, 'a'), 'stability', [('linear-response', True, {'ratio_min': 0.5})])
        first = open(emit_report(self.tmp), encoding='utf-8').read()
        second = open(emit_report(self.tmp), encoding='utf-8').read()
        self.assertEqual(first, second)
        self.assertTrue(os.path.isfile(os.path.join(self.tmp, SUMMARY_NAME)))


class FlockCommandTests(TempDirMixin, TestCase):

    def test_empty_config_lists_missing_keys(self):
        path = self.write_config('')
        with self.assertRaises(CommandError) as ctx:
            call_command('flock', 'stability', '--config', path, '--out', self.tmp, stdout=StringIO(),
                         stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('replicas', str(ctx.exception))
        self.assertFalse(ExperimentRun.objects.exists())

    def test_bad_grid_flag(self):
        path = self.write_config(STABILITY_CONFIG)
        with self.assertRaises(CommandError):
            call_command('flock', 'stability', '--config', path, '--grid', '64', stdout=StringIO())

    def test_run_is_registered(self):
        path = self.write_config(STABILITY_CONFIG)
        out = os.path.join(self.tmp, 'stability')
        call_command('flock', 'stability', '--config', path, '--out', out, '--seed', '9',
                     stdout=StringIO())
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'passed')
        self.assertEqual(run.master_seed, 9)
        self.assertIn('experiment=stability', run.manifest)
        self.assertEqual(run.checks.count(), 3)
        self.assertTrue(run.checks.filter(tag='linear-response', passed=True).exists())

    def test_pathwise_bounds_command_passes(self):
        path = self.write_config(small_config(d=2, N=8, T=0.5, dt=0.01, replicas=2))
        stdout = StringIO()
        call_command('flock', 'pathwise-bounds', '--config', path, '--out', os.path.join(self.tmp, 'pw'),
                     stdout=stdout)
        self.assertIn('Все проверки пройдены', stdout.getvalue())
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'passed')
        self.assertEqual(run.checks.filter(passed=False).count(), 0)
        self.assertEqual(run.checks.count(), 8)

    def test_unexpected_error_marks_run(self):
        def broken(context):
            raise RuntimeError('сбой решателя')

        path = self.write_config(STABILITY_CONFIG)
        with mock.patch.dict(SUITES, {'stability': broken}):
            with self.assertLogs('experiments.management.commands.flock', level='ERROR'):
                with self.assertRaises(CommandError) as ctx:
                    call_command('flock', 'stability', '--config', path, '--out', self.tmp, stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'error')
        self.assertIn('RuntimeError', run.manifest)

    def test_interrupt_marks_run(self):
        def interrupted(context):
            raise KeyboardInterrupt

        path = self.write_config(STABILITY_CONFIG)
        with mock.patch.dict(SUITES, {'stability': interrupted}):
            with self.assertRaises(KeyboardInterrupt):
                call_command('flock', 'stability', '--config', path, '--out', self.tmp, stdout=StringIO())
        self.assertEqual(ExperimentRun.objects.get().status, 'error')

    def test_report_command(self):
        write_manifest(os.path.join(self.tmp, 'a'), 'chaos', [('chaos-decreasing', False, {'fraction': 0.5})])
        with self.assertRaises(CommandError) as ctx:
            call_command('flock_report', self.tmp, stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertTrue(os.path.isfile(os.path.join(self.tmp, SUMMARY_NAME)))


@override_settings(ALLOWED_HOSTS=['testserver'])
class RegistryApiTests(TestCase):

    def setUp(self):
        user = get_user_model().objects.create_user(username='lab', password='lab-pass')
        self.client.force_login(user)
        self.passed = ExperimentRun.objects.create(
            name='flock-rate', output_dir='/tmp/a', config_hash='abc', master_seed=1, status='passed',
        )
        self.failed = ExperimentRun.objects.create(
            name='chaos', output_dir='/tmp/b', config_hash='def', master_seed=2, status='failed',
            manifest='experiment=chaos\ncheck.chaos-decreasing=fail\n',
        )
        CheckResult.objects.create(run=self.passed, tag='rate-band', passed=True, measured={'rate': -1.5})
        CheckResult.objects.create(run=self.failed, tag='chaos-decreasing', passed=False, measured={'fraction': 0.8})

    def test_str(self):
        self.assertEqual(str(self.failed), 'chaos [Есть непройденные проверки] def')
        self.assertEqual(str(self.failed.checks.get()), 'chaos-decreasing: fail')

    def test_requires_login(self):
        self.client.logout()
        response = self.client.get(reverse('experiments:experimentrun-list'))
        self.assertIn(response.status_code, (401, 403))

    def test_filter_runs_by_status(self):
        response = self.client.get(reverse('experiments:experimentrun-list'), {'status': 'failed'})
        self.assertEqual(response.status_code, 200)
        names = [item['name'] for item in response.json()]
        self.assertEqual(names, ['chaos'])

    def test_checks_nested_in_run(self):
        response = self.client.get(reverse('experiments:experimentrun-detail', args=[self.passed.pk]))
        self.assertEqual(response.json()['checks'][0]['tag'], 'rate-band')

    def test_filter_checks(self):
        response = self.client.get(reverse('experiments:checkresult-list'), {'passed': 'false'})
        self.assertEqual([item['tag'] for item in response.json()], ['chaos-decreasing'])

    def test_manifest_action(self):
        response = self.client.get(reverse('experiments:experimentrun-manifest', args=[self.failed.pk]))
        self.assertEqual(response.json(), {'experiment': 'chaos', 'check.chaos-decreasing': 'fail'})


class SuiteSmokeTests(TempDirMixin, SimpleTestCase):
    """Каждый эксперимент в уменьшенном размере: набор проверок и таблиц"""

    def run_suite(self, name, text, tags, files=()):
        config = load_config(self.write_config(text, f'{name}.cfg'))
        out = os.path.join(self.tmp, name)
        result = run_experiment(ExperimentSpec(name=name, config=config, output_dir=out))
        self.assertEqual([check.tag for check in result.checks], tags)
        for filename in files + (MANIFEST_NAME,):
            self.assertTrue(os.path.isfile(os.path.join(out, filename)), filename)
        self.assertEqual(exit_status(checks_from_manifest(read_manifest(result.manifest_path))), result.exit_status)
        return result

    def assertPassed(self, result, *tags):
        checks = {check.tag: check for check in result.checks}
        for tag in tags:
            self.assertTrue(checks[tag].passed, f'{tag}: {checks[tag].measured}')

    def test_oracle_suite(self):
        result = self.run_suite('oracle-suite', small_config(extra='paths=12\n'), [
            'closed-form-gbm', 'closed-form-forcing', 'strong-convergence-ito', 'euler-maruyama-halving',
            'strong-convergence-stratonovich', 'comparison-principle', 'comparison-control',
            'exponential-martingale',
        ], files=('convergence.csv',))
        self.assertPassed(result, 'closed-form-gbm', 'closed-form-forcing', 'comparison-principle',
                          'comparison-control')

    def test_flock_rate(self):
        text = small_config(d=2, N=16, T=1.0, dt=0.02, replicas=6)
        result = self.run_suite('flock-rate', text, [
            'exponential-martingale', 'rate-band', 'expectation-band', 'growth-bound',
        ], files=('mean_series.csv', 'rates.csv', 'rates.txt'))
        self.assertPassed(result, 'growth-bound')
        rates = pd.read_csv(os.path.join(self.tmp, 'flock-rate', 'rates.csv'))
        np.testing.assert_allclose(rates['band_lower'], -2.0 * (1.0 - 0.3 ** 2))
        np.testing.assert_allclose(rates['band_upper'], -2.0 * (1.0 - 0.3 ** 2))

    def test_pathwise_bounds(self):
        text = small_config(d=2, N=8, T=0.5, dt=0.01, replicas=2)
        result = self.run_suite('pathwise-bounds', text, [
            'mass-exact', 'momentum-conservation', 'pathwise-bound', 'dissipation-bound', 'velocity-support',
            'exact-dissipation', 'pair-closed-form', 'falsification-control',
        ], files=('pathwise.csv', 'pair.csv'))
        self.assertEqual(result.exit_status, 0, result.failures())

    def test_wong_zakai(self):
        text = small_config(N=4, T=0.2, dt=0.01, weight=RATIONAL_WEIGHT)
        self.run_suite('wong-zakai', text, ['wong-zakai-monotone', 'wong-zakai-pair', 'wong-zakai-noise-free'],
                       files=('wong_zakai.csv',))
        table = pd.read_csv(os.path.join(self.tmp, 'wong-zakai', 'wong_zakai.csv'))
        self.assertEqual(list(table['eps']), list(DEFAULT_EPS_LIST))

    def test_ito_vs_stratonovich(self):
        text = small_config(N=4, replicas=4, extra='n_list=2,4\n')
        self.run_suite('ito-vs-strat', text, ['ito-stratonovich-N2', 'ito-stratonovich-N4'],
                       files=('ito_vs_strat.csv',))

    def test_chaos(self):
        text = small_config(replicas=2, extra='n_list=4,8,16\n')
        result = self.run_suite('chaos', text, ['chaos-decreasing', 'matching-brute-force'], files=('chaos.csv',))
        self.assertPassed(result, 'matching-brute-force')

    def test_kinetic_fixed_point(self):
        text = small_config(T=0.2, dt=0.05, weight=RATIONAL_WEIGHT, extra=KINETIC_KEYS)
        result = self.run_suite('kinetic-fixed-point', text, [
            'fixed-point-converged', 'iterate-moments', 'kinetic-mass', 'kinetic-momentum', 'kinetic-positivity',
            'kinetic-support-envelopes', 'kinetic-supnorm-pathwise', 'factorial-contraction',
            'semi-lagrangian-agreement',
        ], files=('iterations.csv', 'kinetic_series.csv', 'kinetic_final.csv', 'kinetic_trajectory.npz',
                  'contraction.csv'))
        self.assertPassed(result, 'fixed-point-converged', 'kinetic-mass', 'kinetic-positivity')

    def test_kinetic_vs_particle(self):
        text = small_config(T=0.2, dt=0.05, extra=KINETIC_KEYS + 'n_particles=512\n')
        self.run_suite('kinetic-vs-particle', text, [
            'kinetic-mass', 'kinetic-momentum', 'kinetic-positivity', 'kinetic-support-envelopes',
            'kinetic-supnorm-pathwise', 'kinetic-particle-m2',
        ], files=('kinetic_vs_particle.csv',))

    def test_kinetic_supnorm(self):
        text = small_config(T=0.2, dt=0.05, extra=KINETIC_KEYS + 'paths=2\nmode=semi-lagrangian\n')
        self.run_suite('kinetic-supnorm', text, ['supnorm-expectation'])


class ShippedConfigTests(SimpleTestCase):
    """Конфигурации из каталога configs/"""

    def load(self, name):
        return load_config(os.path.join(settings.BASE_DIR, 'configs', f'{name}.cfg'))

    def test_every_experiment_has_a_config(self):
        for name in EXPERIMENT_NAMES:
            with self.subTest(experiment=name):
                self.assertTrue(self.load(name).config_hash)

    def test_rate_variants(self):
        rational = self.load('flock-rate-rational')
        self.assertGreater(rational.weight.phi_m, rational.sigma ** 2)
        growth = self.load('flock-rate-growth')
        self.assertGreater(growth.sigma ** 2, growth.weight.phi_M)

    def test_wong_zakai_schedule(self):
        self.assertEqual(self.load('wong-zakai').option('eps_list'), list(DEFAULT_EPS_LIST))

    def test_flock_rate_header_matches_band(self):
        with open(os.path.join(settings.BASE_DIR, 'configs', 'flock-rate.cfg'), encoding='utf-8') as fh:
            header = fh.readline()
        self.assertIn('-2*(phi0 - sigma^2)', header)
