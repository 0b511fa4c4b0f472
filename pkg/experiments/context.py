"""
Контекст выполнения эксперимента: встроенные проверки, артефакты и записи манифеста
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List

from observables.bounds import BoundCheck

from .export_utils import ResultExportService

logger = logging.getLogger(__name__)


def _plain(value):
    """Значение для JSON: numpy-числа в float, нефинитные в строку"""
    if isinstance(value, (bool, int, str)) or value is None:
        return value
    number = float(value)
    return number if math.isfinite(number) else str(number)


@dataclass(frozen=True)
class Check:
    """Результат встроенной проверки с измеренными значениями"""
    tag: str
    passed: bool
    measured: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_bound(cls, tag: str, bound: BoundCheck, **extra) -> 'Check':
        measured = bound.as_measured()
        measured['applicable'] = bound.applicable
        measured.update(extra)
        return cls(tag=tag, passed=bool(bound.passed), measured={k: _plain(v) for k, v in measured.items()})

    def as_dict(self) -> Dict[str, Any]:
        return {'tag': self.tag, 'passed': self.passed, 'measured': self.measured}


class ExperimentContext:
    """
    Передаётся в каждый набор экспериментов: конфигурация, число потоков,
    сервис экспорта и накопленные проверки.
    """

    def __init__(self, spec, export: ResultExportService):
        self.spec = spec
        self.config = spec.config
        self.threads = spec.threads
        self.export = export
        self.checks: List[Check] = []
        self.records: Dict[str, Any] = {}

    def option(self, key: str, default=None):
        return self.config.option(key, default)

    def add_check(self, tag: str, passed: bool, **measured) -> Check:
        check = Check(tag=tag, passed=bool(passed), measured={k: _plain(v) for k, v in measured.items()})
        return self._append(check)

    def add_bound(self, tag: str, bound: BoundCheck, **extra) -> Check:
        return self._append(Check.from_bound(tag, bound, **extra))

    def record(self, key: str, value) -> None:
        """Дополнительная строка манифеста (сиды, размеры, исключённые реплики)"""
        self.records[key] = value

    def _append(self, check: Check) -> Check:
        self.checks.append(check)
        if check.passed:
            logger.info(f"[{self.spec.name}] {check.tag}: pass")
        else:
            logger.error(f"[{self.spec.name}] {check.tag}: FAIL {check.measured}")
        return check
