"""
Радиальные веса коммуникации φ̄(r) и их константы φ_m, φ_M, [φ]_Lip
"""

import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict

import numpy as np

from .exceptions import LabConfigError, LabDomainError

logger = logging.getLogger(__name__)


def _constant_profile(r, phi0):
    return np.full_like(r, phi0, dtype=float)


def _rational_profile(r, phi_m, phi_M):
    return phi_m + (phi_M - phi_m) / (1.0 + r * r)


def _classical_profile(r, phi_M, beta):
    return phi_M * np.power(1.0 + r * r, -0.5 * beta)


@dataclass(frozen=True)
class CommWeight:
    """
    Вес коммуникации: невозрастающий, ограниченный, липшицев профиль.

    Значение в нуле совпадает с phi_M, нижняя граница phi_m может быть нулевой
    (классический профиль), тогда оценки скорости флокинга не применимы.
    """
    name: str
    profile: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    phi_m: float
    phi_M: float
    lip: float
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def is_constant(self) -> bool:
        return self.phi_m == self.phi_M

    def __call__(self, r):
        return comm_weight_eval(self, r)

    def describe(self) -> str:
        extra = ','.join(f'{k}={v:g}' for k, v in sorted(self.params.items()))
        return f'{self.name}({extra})'


def comm_weight_eval(w: CommWeight, r):
    """Значение φ̄(r); для скалярного r возвращает float"""
    values = np.asarray(r, dtype=float)
    if np.any(values < 0) or np.any(np.isnan(values)):
        raise LabDomainError(f"Расстояние должно быть неотрицательным: {r!r}")
    out = w.profile(values)
    if out.ndim == 0:
        return float(out)
    return out


def constant_weight(phi0: float = 1.0) -> CommWeight:
    if phi0 < 0:
        raise LabConfigError(f"phi0 должен быть неотрицательным, получено {phi0}")
    return CommWeight(
        name='constant',
        profile=partial(_constant_profile, phi0=float(phi0)),
        phi_m=float(phi0),
        phi_M=float(phi0),
        lip=0.0,
        params={'phi0': float(phi0)},
    )


def rational_weight(phi_m: float = 0.1, phi_M: float = 1.0) -> CommWeight:
    """φ̄(r) = φ_m + (φ_M − φ_m)/(1 + r²)"""
    if not 0 <= phi_m <= phi_M:
        raise LabConfigError(f"Требуется 0 <= phi_m <= phi_M, получено phi_m={phi_m}, phi_M={phi_M}")
    # max |d/dr (1+r²)^-1| = 3√3/8 при r = 1/√3
    lip = (phi_M - phi_m) * 3.0 * math.sqrt(3.0) / 8.0
    return CommWeight(
        name='rational',
        profile=partial(_rational_profile, phi_m=float(phi_m), phi_M=float(phi_M)),
        phi_m=float(phi_m),
        phi_M=float(phi_M),
        lip=lip,
        params={'phi_m': float(phi_m), 'phi_M': float(phi_M)},
    )


def classical_weight(beta: float = 0.5, phi_M: float = 1.0) -> CommWeight:
    """φ̄(r) = φ_M (1 + r²)^(-β/2); inf φ = 0, только для исследовательских прогонов"""
    if beta < 0 or phi_M < 0:
        raise LabConfigError(f"Требуется beta >= 0 и phi_M >= 0, получено beta={beta}, phi_M={phi_M}")
    r_star = 1.0 / math.sqrt(beta + 1.0)
    lip = phi_M * beta * r_star * (1.0 + r_star ** 2) ** (-(beta + 2.0) / 2.0)
    return CommWeight(
        name='classical',
        profile=partial(_classical_profile, phi_M=float(phi_M), beta=float(beta)),
        phi_m=0.0,
        phi_M=float(phi_M),
        lip=lip,
        params={'beta': float(beta), 'phi_M': float(phi_M)},
    )


PROFILES = {
    'constant': constant_weight,
    'rational': rational_weight,
    'classical': classical_weight,
}


def build_weight(name: str, **params) -> CommWeight:
    """Фабрика профилей по имени из конфигурации"""
    try:
        factory = PROFILES[name]
    except KeyError:
        raise LabConfigError(
            f"Неизвестный профиль веса '{name}', доступны: {', '.join(sorted(PROFILES))}"
        ) from None
    try:
        return factory(**params)
    except TypeError as e:
        raise LabConfigError(f"Неверные параметры профиля '{name}': {e}") from e
