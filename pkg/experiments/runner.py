"""
Запуск именованных экспериментов: артефакты, манифест и код выхода
"""

import json
import logging
import os
import platform
import time
from dataclasses import dataclass, field
from importlib import metadata
from typing import Dict, List, Optional

from django.conf import settings

from core.config import SimConfig
from core.exceptions import LabConfigError

from .context import Check, ExperimentContext
from .export_utils import ResultExportService
from .models import CheckResult, ExperimentRun
from .suites import SUITES

logger = logging.getLogger(__name__)

EXPERIMENT_NAMES = tuple(SUITES)

MANIFEST_NAME = 'manifest.txt'

# пакеты, версии которых попадают в манифест
VERSIONED_PACKAGES = ('numpy', 'scipy', 'pandas', 'POT', 'matplotlib', 'Django')


@dataclass(frozen=True)
class ExperimentSpec:
    """Имя эксперимента, конфигурация и каталог результатов"""
    name: str
    config: SimConfig
    output_dir: str
    threads: int = 1

    def __post_init__(self):
        if self.name not in SUITES:
            raise LabConfigError(
                f"Неизвестный эксперимент '{self.name}', доступны: {', '.join(EXPERIMENT_NAMES)}"
            )


@dataclass
class RunResult:
    spec: ExperimentSpec
    checks: List[Check]
    wall_time: float
    manifest_path: str
    files: List[str] = field(default_factory=list)
    records: Dict[str, object] = field(default_factory=dict)

    @property
    def exit_status(self) -> int:
        return exit_status(self.checks)

    @property
    def passed(self) -> bool:
        return self.exit_status == 0

    def failures(self) -> List[dict]:
        return failure_list(self.checks)


def exit_status(checks) -> int:
    """0, если все проверки пройдены, иначе 1"""
    return 0 if all(check.passed for check in checks) else 1


def failure_list(checks) -> List[dict]:
    return [check.as_dict() for check in checks if not check.passed]


def default_output_dir(name: str, config: SimConfig) -> str:
    base = getattr(settings, 'FLOCK_OUTPUT_DIR', 'runs')
    return os.path.join(str(base), f'{name}-{config.config_hash}')


def package_versions() -> Dict[str, str]:
    versions = {'python': platform.python_version()}
    for package in VERSIONED_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = 'missing'
    return versions


def manifest_lines(spec: ExperimentSpec, checks, wall_time: float, files, records) -> List[str]:
    """Строки key=value; порядок фиксирован, значения проверок в JSON с сортировкой ключей"""
    lines = [f'experiment={spec.name}', f'status={"pass" if exit_status(checks) == 0 else "fail"}',
             f'exit_status={exit_status(checks)}', f'threads={spec.threads}']
    lines += [f'config.{key}={value}' for key, value in spec.config.as_items().items()]
    lines.append(f'seed.master={spec.config.seed}')
    lines.append('seed.derivation=SeedSequence([master, replica])')
    lines += [f'record.{key}={value}' for key, value in sorted(records.items())]
    lines += [f'version.{name}={value}' for name, value in package_versions().items()]
    lines.append(f'wall_time={wall_time:.3f}')
    lines.append(f'files={",".join(files)}')
    for check in checks:
        lines.append(f'check.{check.tag}={"pass" if check.passed else "fail"}')
        lines.append(f'measured.{check.tag}={json.dumps(check.measured, sort_keys=True)}')
    return lines


def read_manifest(path) -> Dict[str, str]:
    """Манифест как упорядоченный словарь; строки без '=' пропускаются"""
    items = {}
    with open(path, encoding='utf-8') as fh:
        for line in fh:
            key, sep, value = line.rstrip('\n').partition('=')
            if sep:
                items[key.strip()] = value
    return items


def checks_from_manifest(items: Dict[str, str]) -> List[Check]:
    checks = []
    for key, value in items.items():
        if key.startswith('check.'):
            tag = key[len('check.'):]
            measured = json.loads(items.get(f'measured.{tag}', '{}'))
            checks.append(Check(tag=tag, passed=value == 'pass', measured=measured))
    return checks


def run_experiment(spec: ExperimentSpec) -> RunResult:
    """
    Выполнение эксперимента: таблицы и графики пишутся в output_dir, затем манифест.

    Исключения лаборатории пробрасываются наружу до записи манифеста.
    """
    export = ResultExportService(spec.output_dir)
    context = ExperimentContext(spec, export)
    logger.info(f"Эксперимент {spec.name}: hash={spec.config.config_hash}, seed={spec.config.seed}, "
                f"каталог {spec.output_dir}")
    started = time.perf_counter()
    SUITES[spec.name](context)
    wall_time = time.perf_counter() - started

    manifest_path = export.path(MANIFEST_NAME)
    lines = manifest_lines(spec, context.checks, wall_time, export.files, context.records)
    with open(manifest_path, 'w', encoding='utf-8') as fh:
        fh.write('\n'.join(lines) + '\n')

    result = RunResult(spec=spec, checks=list(context.checks), wall_time=wall_time,
                       manifest_path=manifest_path, files=list(export.files), records=dict(context.records))
    logger.info(f"Эксперимент {spec.name} завершён за {wall_time:.1f} с: "
                f"{len(result.checks) - len(result.failures())}/{len(result.checks)} проверок пройдено")
    return result


def register_run(result: RunResult, run=None):
    """Запись результата в реестр ExperimentRun/CheckResult"""
    with open(result.manifest_path, encoding='utf-8') as fh:
        manifest = fh.read()
    config = result.spec.config
    if run is None:
        run = ExperimentRun(name=result.spec.name, output_dir=result.spec.output_dir,
                            config_hash=config.config_hash, master_seed=config.seed, replicas=config.replicas)
    run.status = 'passed' if result.passed else 'failed'
    run.wall_time = result.wall_time
    run.manifest = manifest
    run.save()
    CheckResult.objects.bulk_create([
        CheckResult(run=run, tag=check.tag, passed=check.passed, measured=check.measured)
        for check in result.checks
    ])
    return run


def start_run(spec: ExperimentSpec):
    """Запись со статусом running до начала вычислений"""
    config = spec.config
    return ExperimentRun.objects.create(
        name=spec.name, output_dir=spec.output_dir, config_hash=config.config_hash,
        master_seed=config.seed, replicas=config.replicas, status='running',
    )


def mark_error(run, message: Optional[str] = None) -> None:
    run.status = 'error'
    if message:
        run.manifest = f'error={message}\n'
    run.save(update_fields=['status', 'manifest'])
