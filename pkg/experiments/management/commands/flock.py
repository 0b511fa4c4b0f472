import json
import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.config import load_config
from core.exceptions import FlockLabError, LabConfigError
from experiments.runner import (
    EXPERIMENT_NAMES, ExperimentSpec, default_output_dir, mark_error, register_run, run_experiment, start_run,
)
from kinetic.solver import MODES

USAGE_ERROR = 2
CHECK_FAILURE = 1

logger = logging.getLogger(__name__)


def parse_grid(value):
    """'64x48' -> (64, 48)"""
    try:
        nx, nv = (int(part) for part in value.lower().split('x'))
    except ValueError:
        raise CommandError(f"Сетка задаётся как NXxNV, получено '{value}'", returncode=USAGE_ERROR) from None
    return nx, nv


class Command(BaseCommand):
    help = 'Запускает именованный эксперимент лаборатории и записывает таблицы, графики и манифест'

    def add_arguments(self, parser):
        parser.add_argument('experiment', choices=EXPERIMENT_NAMES, help='Имя эксперимента')
        parser.add_argument('--config', required=True, help='Файл конфигурации key=value')
        parser.add_argument('--seed', type=int, default=None, help='Мастер-сид (важнее FLOCK_SEED и файла)')
        parser.add_argument('--out', default=None, help='Каталог результатов')
        parser.add_argument('--replicas', type=int, default=None, help='Число реплик Монте-Карло')
        parser.add_argument('--threads', type=int, default=None, help='Потоков для реплик и W2')
        parser.add_argument('--snapshot-every', type=int, default=None, help='Снимок каждые K шагов')
        parser.add_argument('--grid', default=None, help='Фазовая сетка NXxNV (кинетические эксперименты)')
        parser.add_argument('--tol', type=float, default=None, help='Допуск последовательных приближений')
        parser.add_argument('--max-iter', type=int, default=None, help='Предел числа итераций')
        parser.add_argument('--mode', choices=MODES, default=None, help='Режим кинетического решателя')
        parser.add_argument('--no-registry', action='store_true', help='Не записывать прогон в базу')

    def handle(self, *args, **options):
        name = options['experiment']
        overrides = {
            'replicas': options['replicas'],
            'snapshot_every': options['snapshot_every'],
            'tol': options['tol'],
            'max_iter': options['max_iter'],
            'mode': options['mode'],
        }
        if options['grid']:
            overrides['nx'], overrides['nv'] = parse_grid(options['grid'])

        try:
            config = load_config(options['config'], seed=options['seed'], overrides=overrides)
            spec = ExperimentSpec(
                name=name,
                config=config,
                output_dir=options['out'] or default_output_dir(name, config),
                threads=options['threads'] or settings.FLOCK_THREADS,
            )
        except LabConfigError as e:
            if e.missing_keys:
                self.stderr.write(f"Отсутствуют ключи: {', '.join(e.missing_keys)}")
            raise CommandError(str(e), returncode=USAGE_ERROR) from e

        self.stdout.write(self.style.SUCCESS(
            f'Эксперимент {name}: hash={config.config_hash}, seed={config.seed}, каталог {spec.output_dir}'
        ))
        run = None if options['no_registry'] else start_run(spec)
        try:
            result = run_experiment(spec)
        except FlockLabError as e:
            if run is not None:
                mark_error(run, str(e))
            code = USAGE_ERROR if isinstance(e, LabConfigError) else CHECK_FAILURE
            raise CommandError(f'Эксперимент {name} прерван: {e}', returncode=code) from e
        except KeyboardInterrupt:
            if run is not None:
                mark_error(run, 'прервано пользователем')
            raise
        except Exception as e:
            logger.exception(f'Непредвиденная ошибка эксперимента {name}')
            if run is not None:
                mark_error(run, f'{type(e).__name__}: {e}')
            raise CommandError(f'Эксперимент {name} завершился ошибкой: {e}', returncode=USAGE_ERROR) from e

        if run is not None:
            register_run(result, run)

        for check in result.checks:
            line = f"  {check.tag}: {'pass' if check.passed else 'FAIL'}"
            self.stdout.write(self.style.SUCCESS(line) if check.passed else self.style.ERROR(line))
        self.stdout.write(f'Манифест: {result.manifest_path} ({result.wall_time:.1f} с)')

        failures = result.failures()
        if failures:
            self.stderr.write(json.dumps(failures, sort_keys=True))
            raise CommandError(f'Не пройдено проверок: {len(failures)} из {len(result.checks)}',
                               returncode=CHECK_FAILURE)
        self.stdout.write(self.style.SUCCESS('Все проверки пройдены'))
