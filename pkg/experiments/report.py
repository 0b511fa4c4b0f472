"""
Сводный отчёт по каталогу прогонов: одна строка на каждую встроенную проверку
"""

import json
import logging
import os
from typing import List

import pandas as pd

from core.exceptions import LabConfigError

from .runner import MANIFEST_NAME, checks_from_manifest, exit_status, read_manifest

logger = logging.getLogger(__name__)

SUMMARY_NAME = 'summary.txt'

SUMMARY_COLUMNS = ['run', 'experiment', 'check', 'status', 'measured']


def find_manifests(directory) -> List[str]:
    """Все manifest.txt под каталогом в лексикографическом порядке путей"""
    found = []
    for root, dirs, files in os.walk(directory):
        dirs.sort()
        if MANIFEST_NAME in files:
            found.append(os.path.join(root, MANIFEST_NAME))
    return sorted(found)


def summary_table(directory) -> pd.DataFrame:
    rows = []
    for manifest in find_manifests(directory):
        items = read_manifest(manifest)
        run = os.path.relpath(os.path.dirname(manifest), directory)
        for check in checks_from_manifest(items):
            rows.append({
                'run': run,
                'experiment': items.get('experiment', ''),
                'check': check.tag,
                'status': 'pass' if check.passed else 'fail',
                'measured': json.dumps(check.measured, sort_keys=True),
            })
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def emit_report(directory) -> str:
    """
    Запись summary.txt в каталог. Время выполнения в отчёт не попадает,
    поэтому повторный вызов на тех же манифестах даёт тот же файл.
    """
    manifests = find_manifests(directory)
    if not manifests:
        raise LabConfigError(f"В каталоге {directory} нет файлов {MANIFEST_NAME}")
    table = summary_table(directory)
    failed = int((table['status'] == 'fail').sum())
    overall = 'pass' if failed == 0 else 'fail'
    header = [
        f'overall={overall}',
        f'runs={len(manifests)}',
        f'checks={len(table)}',
        f'failed={failed}',
    ]
    body = table.to_string(index=False) if len(table) else '(нет проверок)'
    target = os.path.join(str(directory), SUMMARY_NAME)
    with open(target, 'w', encoding='utf-8') as fh:
        fh.write('\n'.join(header) + '\n\n' + body + '\n')
    logger.info(f"Отчёт {target}: {len(manifests)} прогонов, {len(table)} проверок, не пройдено {failed}")
    return target


def report_status(directory) -> int:
    """Код выхода по всем манифестам каталога"""
    checks = []
    for manifest in find_manifests(directory):
        checks += checks_from_manifest(read_manifest(manifest))
    return exit_status(checks)
