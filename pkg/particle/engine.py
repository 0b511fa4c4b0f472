"""
Прогон системы частиц: одиночные траектории, регуляризация Вонга–Закаи и реплики Монте-Карло
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from django.conf import settings

from core.config import SimConfig, replica_seed, rng_for
from core.exceptions import LabConfigError, NumericalBlowupError
from core.paths import WienerPath, mollify_path, wiener_sample
from observables.moments import MomentSeries, moment_series

from .ensemble import ParticleEnsemble, initial_ensemble
from .forces import alignment_forces
from .steppers import step_ito, step_stratonovich

logger = logging.getLogger(__name__)

SCHEMES = ('stratonovich', 'ito', 'ito-exact')

# прогон прерывается, когда max|v| превышает начальный масштаб в столько раз
BLOWUP_FACTOR = 1e6


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Снимки одного прогона и ряд наблюдаемых; config_hash связывает запись с конфигурацией"""
    times: np.ndarray
    series: MomentSeries
    path: Optional[WienerPath]
    config_hash: str
    replica: int = 0
    scheme: str = 'stratonovich'
    states: Optional[List[ParticleEnsemble]] = field(default=None, repr=False)

    @property
    def final(self) -> ParticleEnsemble:
        if not self.states:
            raise LabConfigError("Запись не хранит состояния частиц")
        return self.states[-1]

    def to_frame(self) -> pd.DataFrame:
        """Длинная таблица (t, i, x…, v…) по всем снимкам"""
        if not self.states:
            raise LabConfigError("Запись не хранит состояния частиц")
        frames = []
        for ens in self.states:
            block = pd.DataFrame(
                np.hstack([ens.x, ens.v]),
                columns=[f'x{j}' for j in range(ens.d)] + [f'v{j}' for j in range(ens.d)],
            )
            block.insert(0, 'i', np.arange(ens.N))
            block.insert(0, 't', ens.t)
            frames.append(block)
        return pd.concat(frames, ignore_index=True)

    def export_csv(self, filename) -> None:
        self.to_frame().to_csv(filename, index=False, float_format='%.17g')

    def save_observables(self, filename) -> None:
        np.savez_compressed(
            filename,
            t=self.series.t_grid, m0=self.series.m0, m1=self.series.m1, m2=self.series.m2,
            e_t=self.series.e_t, supp_x=self.series.supp_x, supp_v=self.series.supp_v,
            config_hash=np.array(self.config_hash),
        )


def path_for(config: SimConfig, replica: int = 0) -> WienerPath:
    """Общий путь реплики"""
    return wiener_sample(replica_seed(config.seed, replica), config.T, config.dt)


def initial_for(config: SimConfig, replica: int = 0) -> ParticleEnsemble:
    """Начальные данные реплики по умолчанию"""
    rng = rng_for(replica_seed(replica_seed(config.seed, replica), 1))
    return initial_ensemble(config.N, config.d, rng, noise_mode=config.noise_mode)


def independent_noise(config: SimConfig, replica: int, path: WienerPath) -> np.ndarray:
    """N независимых приращений на каждом шаге сетки пути"""
    rng = rng_for(replica_seed(replica_seed(config.seed, replica), 2))
    return rng.normal(0.0, math.sqrt(path.dt), size=(path.K, config.N))


def _guard(ens: ParticleEnsemble, scale: float, step: int, replica: int) -> None:
    if np.max(np.abs(ens.v)) > BLOWUP_FACTOR * scale:
        raise NumericalBlowupError(
            f"Скорости превысили начальный масштаб в {BLOWUP_FACTOR:g} раз", step=step, replica=replica
        )


def _snapshot_steps(K: int, every: int) -> set:
    steps = set(range(0, K + 1, every))
    steps.add(K)
    return steps


def _record(config, times, states, path, replica, scheme, keep_states):
    series = moment_series(times, states, path=path)
    return TrajectoryRecord(
        times=np.asarray(times),
        series=series,
        path=path,
        config_hash=config.config_hash,
        replica=replica,
        scheme=scheme,
        states=list(states) if keep_states else None,
    )


def run(config: SimConfig, path: Optional[WienerPath] = None, ens0: Optional[ParticleEnsemble] = None,
        replica: int = 0, scheme: str = 'stratonovich', keep_states: bool = True,
        noise: Optional[np.ndarray] = None) -> TrajectoryRecord:
    """
    Полный прогон со снимками каждые snapshot_every шагов (и в момент T).

    Без явных path/ens0 путь и начальные данные выводятся из (seed, replica).
    """
    if scheme not in SCHEMES:
        raise LabConfigError(f"Неизвестная схема '{scheme}', доступны: {', '.join(SCHEMES)}")
    path = path if path is not None else path_for(config, replica)
    ens = ens0 if ens0 is not None else initial_for(config, replica)
    if ens.noise_mode != config.noise_mode:
        ens = ParticleEnsemble(x=ens.x, v=ens.v, t=ens.t, noise_mode=config.noise_mode)

    if config.noise_mode == 'independent' and noise is None:
        noise = independent_noise(config, replica, path)
    sigma = config.sigma if config.noise_mode != 'none' else 0.0
    scale = float(np.max(np.abs(ens.v))) or 1.0
    keep = _snapshot_steps(path.K, config.snapshot_every)

    times, states = [path.t_grid[0]], [ens]
    for k in range(path.K):
        dt = path.t_grid[k + 1] - path.t_grid[k]
        dW = noise[k] if config.noise_mode == 'independent' else path.values[k + 1] - path.values[k]
        try:
            if scheme == 'stratonovich':
                ens = step_stratonovich(ens, config.weight, sigma, dW, dt)
            else:
                ens = step_ito(ens, config.weight, sigma, dW, dt, exact_correction=scheme == 'ito-exact')
        except NumericalBlowupError as e:
            raise NumericalBlowupError(str(e), step=k + 1, replica=replica) from e
        _guard(ens, scale, k + 1, replica)
        if k + 1 in keep:
            times.append(path.t_grid[k + 1])
            states.append(ens)

    return _record(config, times, states, path, replica, scheme, keep_states)


def _rk4_rhs(x, v, rate, w, sigma):
    return v, alignment_forces(x, v, w) + sigma * (v.mean(axis=0) - v) * rate


def run_wong_zakai(config: SimConfig, path: WienerPath, eps: float, ens0: Optional[ParticleEnsemble] = None,
                   replica: int = 0, keep_states: bool = True) -> TrajectoryRecord:
    """
    Классический RK4 для обыкновенной системы, управляемой dW^eps/dt сглаженного пути.

    Подшаг h <= eps/4 и делит шаг сетки пути.
    """
    smooth = mollify_path(path, eps)
    ens = ens0 if ens0 is not None else initial_for(config, replica)
    sigma = config.sigma if config.noise_mode != 'none' else 0.0
    scale = float(np.max(np.abs(ens.v))) or 1.0
    keep = _snapshot_steps(path.K, config.snapshot_every)

    sub = max(1, math.ceil(4.0 * path.dt / eps - 1e-9))
    # скорости сглаженного пути во всех узлах RK4: t_k + j·h/2
    offsets = np.arange(2 * sub + 1) * (0.5 * path.dt / sub)
    rates = smooth.rate_at(path.t_grid[:-1, None] + offsets[None, :]) if path.K else np.zeros((0, 1))

    x, v = ens.x, ens.v
    times, states = [path.t_grid[0]], [ens]
    for k in range(path.K):
        h = (path.t_grid[k + 1] - path.t_grid[k]) / sub
        for j in range(sub):
            r0, r_half, r1 = rates[k, 2 * j], rates[k, 2 * j + 1], rates[k, 2 * j + 2]
            k1x, k1v = _rk4_rhs(x, v, r0, config.weight, sigma)
            k2x, k2v = _rk4_rhs(x + 0.5 * h * k1x, v + 0.5 * h * k1v, r_half, config.weight, sigma)
            k3x, k3v = _rk4_rhs(x + 0.5 * h * k2x, v + 0.5 * h * k2v, r_half, config.weight, sigma)
            k4x, k4v = _rk4_rhs(x + h * k3x, v + h * k3v, r1, config.weight, sigma)
            x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise NumericalBlowupError("Нефинитное состояние RK4", step=k + 1, replica=replica)
        ens = ens.evolve(x, v, path.t_grid[k + 1])
        _guard(ens, scale, k + 1, replica)
        if k + 1 in keep:
            times.append(path.t_grid[k + 1])
            states.append(ens)

    logger.debug(f"Вонг–Закаи: eps={eps}, подшагов на шаг {sub}")
    return _record(config, times, states, path, replica, 'wong-zakai', keep_states)


@dataclass
class ReplicaBatch:
    """Реплики в порядке индексов; прерванные исключены и перечислены отдельно"""
    records: List[TrajectoryRecord]
    excluded: List[dict]
    scheme: str

    @property
    def series_list(self) -> List[MomentSeries]:
        return [record.series for record in self.records]

    @property
    def n_excluded(self) -> int:
        return len(self.excluded)

    def terminal(self, field_name: str = 'm2') -> np.ndarray:
        return np.array([record.series.values(field_name)[-1] for record in self.records])


def run_replicas(config: SimConfig, threads: Optional[int] = None, scheme: str = 'stratonovich',
                 replicas: Optional[int] = None, keep_states: bool = False) -> ReplicaBatch:
    """
    Реплики в пуле потоков. Сиды выводятся из (seed, индекс), сборка результатов
    идёт в порядке индексов, поэтому итог не зависит от числа потоков.
    """
    count = replicas if replicas is not None else config.replicas
    threads = threads or int(getattr(settings, 'FLOCK_THREADS', 1))

    def job(index):
        try:
            return run(config, replica=index, scheme=scheme, keep_states=keep_states)
        except NumericalBlowupError as e:
            return e

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(job, range(count)))
    else:
        outcomes = [job(index) for index in range(count)]

    records, excluded = [], []
    for index, outcome in enumerate(outcomes):
        if isinstance(outcome, NumericalBlowupError):
            logger.warning(f"Реплика {index} исключена: {outcome}")
            excluded.append({'replica': index, 'step': outcome.step, 'message': str(outcome)})
        else:
            records.append(outcome)

    logger.info(
        f"Реплики {scheme}: {len(records)} завершено, {len(excluded)} исключено (N={config.N}, T={config.T})"
    )
    return ReplicaBatch(records=records, excluded=excluded, scheme=scheme)
