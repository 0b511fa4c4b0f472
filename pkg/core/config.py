"""
Конфигурация прогонов: SimConfig, разбор key=value файлов, сиды реплик
"""

import dataclasses
import hashlib
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from decouple import Csv, RepositoryEnv
from decouple import config as env_config

from .exceptions import LabConfigError
from .weights import CommWeight, build_weight

logger = logging.getLogger(__name__)

NOISE_MODES = ('none', 'common', 'independent')

REQUIRED_KEYS = ('d', 'N', 'T', 'dt', 'sigma', 'weight', 'noise_mode', 'seed', 'replicas')

WEIGHT_KEYS = {
    'constant': ('phi0',),
    'rational': ('phi_m', 'phi_M'),
    'classical': ('beta', 'phi_M'),
}

# необязательные ключи экспериментов и их приведение типов
OPTIONAL_KEYS = {
    'snapshot_every': int,
    'n_list': Csv(cast=int),
    'eps_list': Csv(cast=float),
    'nx': int,
    'nv': int,
    'x_range': Csv(cast=float),
    'v_range': Csv(cast=float),
    'x_half': float,
    'v_half': float,
    'mollify_eps': float,
    'tol': float,
    'max_iter': int,
    'mode': str,
    'paths': int,
    'perturbation': float,
    'window': Csv(cast=float),
    'n_particles': int,
}


@dataclass(frozen=True)
class SimConfig:
    """Параметры одного прогона; неизменяемы после создания"""
    d: int
    N: int
    T: float
    dt: float
    sigma: float
    weight: CommWeight
    noise_mode: str = 'common'
    seed: int = 0
    replicas: int = 1
    snapshot_every: int = 1
    extras: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        errors = []
        if self.d < 1:
            errors.append(f"d={self.d} < 1")
        if self.N < 1:
            errors.append(f"N={self.N} < 1")
        if not self.dt > 0:
            errors.append(f"dt={self.dt} <= 0")
        if self.T < 0:
            errors.append(f"T={self.T} < 0")
        if self.sigma < 0:
            errors.append(f"sigma={self.sigma} < 0")
        if self.replicas < 1:
            errors.append(f"replicas={self.replicas} < 1")
        if self.snapshot_every < 1:
            errors.append(f"snapshot_every={self.snapshot_every} < 1")
        if self.noise_mode not in NOISE_MODES:
            errors.append(f"noise_mode='{self.noise_mode}' не из {NOISE_MODES}")
        if errors:
            raise LabConfigError("Некорректная конфигурация: " + '; '.join(errors))

    @property
    def n_steps(self) -> int:
        if self.T == 0:
            return 0
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    @property
    def dt_eff(self) -> float:
        return self.T / self.n_steps if self.n_steps else self.dt

    @property
    def config_hash(self) -> str:
        canonical = '|'.join([
            f'd={self.d}', f'N={self.N}', f'T={self.T!r}', f'dt={self.dt!r}',
            f'sigma={self.sigma!r}', f'weight={self.weight.describe()}',
            f'noise_mode={self.noise_mode}', f'seed={self.seed}',
            f'replicas={self.replicas}', f'snapshot_every={self.snapshot_every}',
        ])
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]

    def option(self, key: str, default=None):
        return self.extras.get(key, default)

    def replace(self, **changes) -> 'SimConfig':
        return dataclasses.replace(self, **changes)

    def as_items(self) -> Dict[str, Any]:
        """Плоское представление для манифеста"""
        items = {
            'd': self.d, 'N': self.N, 'T': self.T, 'dt': self.dt, 'sigma': self.sigma,
            'weight': self.weight.describe(), 'noise_mode': self.noise_mode,
            'seed': self.seed, 'replicas': self.replicas,
            'snapshot_every': self.snapshot_every, 'config_hash': self.config_hash,
        }
        for key in sorted(self.extras):
            value = self.extras[key]
            items[key] = ','.join(str(v) for v in value) if isinstance(value, (list, tuple)) else value
        return items


def replica_seed(master_seed: int, index: int) -> int:
    """Детерминированный сид реплики из пары (master_seed, index)"""
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def rng_for(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def _env_seed() -> Optional[int]:
    raw = env_config('FLOCK_SEED', default='')
    if raw in (None, ''):
        return None
    try:
        return int(raw)
    except ValueError:
        raise LabConfigError(f"FLOCK_SEED должен быть целым числом, получено '{raw}'") from None


def _cast(key: str, raw: str, caster):
    try:
        return caster(raw)
    except ValueError as e:
        raise LabConfigError(f"Не удалось разобрать ключ '{key}'='{raw}': {e}") from e


def load_config(path, seed: Optional[int] = None, overrides: Optional[Dict[str, Any]] = None) -> SimConfig:
    """
    Чтение конфигурации эксперимента из текстового файла key=value.

    Приоритет сида: аргумент seed (флаг --seed), затем переменная FLOCK_SEED,
    затем ключ seed из файла. overrides заменяют значения файла (флаги CLI).
    """
    if not os.path.isfile(path):
        raise LabConfigError(f"Файл конфигурации не найден: {path}")

    data = dict(RepositoryEnv(str(path)).data)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    missing = [key for key in REQUIRED_KEYS if key not in data]
    weight_name = data.get('weight')
    if weight_name is not None:
        if weight_name not in WEIGHT_KEYS:
            raise LabConfigError(
                f"Неизвестный профиль веса '{weight_name}', доступны: {', '.join(sorted(WEIGHT_KEYS))}"
            )
        missing += [key for key in WEIGHT_KEYS[weight_name] if key not in data]
    if missing:
        raise LabConfigError(
            f"В конфигурации {path} отсутствуют ключи: {', '.join(sorted(missing))}",
            missing_keys=missing,
        )

    weight_params = {key: _cast(key, data[key], float) for key in WEIGHT_KEYS[weight_name]}
    weight = build_weight(weight_name, **weight_params)

    master_seed = seed if seed is not None else _env_seed()
    if master_seed is None:
        master_seed = _cast('seed', data['seed'], int)

    known = set(REQUIRED_KEYS) | set(WEIGHT_KEYS[weight_name]) | set(OPTIONAL_KEYS)
    unknown = sorted(set(data) - known - {'phi0', 'phi_m', 'phi_M', 'beta'})
    if unknown:
        logger.warning(f"Неизвестные ключи конфигурации проигнорированы: {', '.join(unknown)}")

    extras = {}
    for key, caster in OPTIONAL_KEYS.items():
        if key in data and key != 'snapshot_every':
            value = data[key]
            extras[key] = value if not isinstance(value, str) else _cast(key, value, caster)

    def _get(key, caster):
        value = data[key]
        return value if not isinstance(value, str) else _cast(key, value, caster)

    sim = SimConfig(
        d=_get('d', int),
        N=_get('N', int),
        T=_get('T', float),
        dt=_get('dt', float),
        sigma=_get('sigma', float),
        weight=weight,
        noise_mode=_get('noise_mode', str),
        seed=int(master_seed),
        replicas=_get('replicas', int),
        snapshot_every=_get('snapshot_every', int) if 'snapshot_every' in data else 1,
        extras=extras,
    )
    logger.info(f"Загружена конфигурация {path}: hash={sim.config_hash}, seed={sim.seed}")
    return sim
