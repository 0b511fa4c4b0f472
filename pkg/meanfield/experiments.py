"""
Устойчивость по начальным данным и распространение хаоса при общем шуме
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from core.config import SimConfig
from core.exceptions import GridShapeError, LabConfigError
from core.paths import WienerPath
from particle.engine import initial_for, path_for, run
from particle.ensemble import ParticleEnsemble, center_velocities

from .wasserstein import pairwise_wasserstein2

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ChaosResult:
    """Таблица (N, W2) до ансамбля наибольшего размера и sup|W| пути"""
    table: pd.DataFrame
    path_sup: float
    seed: int

    def strictly_decreasing(self) -> bool:
        column = self.table['W2'].to_numpy()[:-1]
        return bool(np.all(np.diff(column) < 0))


@dataclass(frozen=True, eq=False)
class StabilityResult:
    table: pd.DataFrame
    max_ratio: float
    path_sup: float
    extra: dict = field(default_factory=dict)

    def distances(self) -> np.ndarray:
        return self.table['W2'].to_numpy()


def _terminal_run(config: SimConfig, path: WienerPath, ens0: ParticleEnsemble):
    # хранятся только начальный и конечный снимки
    cfg = config.replace(N=ens0.N, snapshot_every=max(path.K, 1))
    return run(cfg, path=path, ens0=ens0).final


def chaos_experiment(config: SimConfig, n_list: Sequence[int], path: Optional[WienerPath] = None,
                     master: Optional[ParticleEnsemble] = None, threads: Optional[int] = None) -> ChaosResult:
    """
    W2(μ^N_T, μ^{N_max}_T) по вложенным выборкам: N-ансамбль состоит из первых N атомов
    мастер-выборки размера N_max (скорости центрируются), все прогоны на одном пути.
    """
    n_list = sorted(int(n) for n in n_list)
    if not n_list or n_list[0] < 1:
        raise LabConfigError(f"Список размеров должен быть непустым и положительным: {n_list}")
    n_max = n_list[-1]
    path = path if path is not None else path_for(config)
    if master is None:
        master = initial_for(config.replace(N=n_max))
    if master.N < n_max:
        raise GridShapeError(f"Мастер-выборка из {master.N} частиц меньше N_max={n_max}")

    finals = {n: _terminal_run(config, path, center_velocities(master.head(n))) for n in n_list}
    reference = finals[n_max]
    distances = pairwise_wasserstein2(((finals[n], reference) for n in n_list), threads=threads)
    table = pd.DataFrame({'N': n_list, 'W2': distances})
    logger.info(f"Хаос: N={n_list}, seed={config.seed}, W2={', '.join(f'{d:.4g}' for d in distances)}")
    return ChaosResult(table=table, path_sup=path.sup_abs, seed=config.seed)


def chaos_trend(config: SimConfig, n_list: Sequence[int], master_seeds: Sequence[int],
                threads: Optional[int] = None):
    """Повтор по мастер-сидам: длинная таблица (seed, N, W2, path_sup) и доля строго убывающих столбцов"""
    frames, decreasing = [], 0
    for seed in master_seeds:
        result = chaos_experiment(config.replace(seed=int(seed)), n_list, threads=threads)
        frame = result.table.copy()
        frame.insert(0, 'seed', int(seed))
        frame['path_sup'] = result.path_sup
        frames.append(frame)
        decreasing += result.strictly_decreasing()
    fraction = decreasing / len(master_seeds) if master_seeds else 0.0
    return pd.concat(frames, ignore_index=True), fraction


def perturb(ens: ParticleEnsemble, eps: float, target: str = 'velocity') -> ParticleEnsemble:
    """Сдвиг всех скоростей (или положений) на +eps"""
    if target == 'velocity':
        return ens.evolve(ens.x, ens.v + eps, ens.t)
    if target == 'position':
        return ens.evolve(ens.x + eps, ens.v, ens.t)
    raise LabConfigError(f"Возмущение '{target}' не поддерживается: velocity или position")


def stability_experiment(config: SimConfig, init_a: ParticleEnsemble, init_b: ParticleEnsemble,
                         path: Optional[WienerPath] = None, threads: Optional[int] = None) -> StabilityResult:
    """Ряд W2(μ_t, μ̃_t) по снимкам двух прогонов на одном пути и max_t W2(t)/W2(0)"""
    if init_a.N != init_b.N:
        raise GridShapeError(f"Размеры ансамблей различаются: {init_a.N} и {init_b.N}")
    path = path if path is not None else path_for(config)
    cfg = config.replace(N=init_a.N)
    run_a = run(cfg, path=path, ens0=init_a)
    run_b = run(cfg, path=path, ens0=init_b)
    distances = np.array(pairwise_wasserstein2(zip(run_a.states, run_b.states), threads=threads))

    w0 = distances[0]
    if w0 > 0:
        max_ratio = float(np.max(distances / w0))
    else:
        max_ratio = 0.0 if np.all(distances == 0) else float('inf')
    table = pd.DataFrame({'t': run_a.times, 'W2': distances})
    logger.info(f"Устойчивость: W2(0)={w0:.4g}, max W2(t)/W2(0)={max_ratio:.4g}, sup|W|={path.sup_abs:.4g}")
    return StabilityResult(table=table, max_ratio=max_ratio, path_sup=path.sup_abs)


def linear_response(config: SimConfig, eps: float, path: Optional[WienerPath] = None,
                    init: Optional[ParticleEnsemble] = None, target: str = 'velocity') -> StabilityResult:
    """
    Отношение W2 при возмущениях eps/2 и eps на одном пути; для липшицевой
    зависимости от начальных данных оно близко к 1/2 во всех моментах.
    """
    path = path if path is not None else path_for(config)
    init = init if init is not None else initial_for(config)
    full = stability_experiment(config, init, perturb(init, eps, target), path)
    half = stability_experiment(config, init, perturb(init, 0.5 * eps, target), path)
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(full.distances() > 0, half.distances() / full.distances(), np.nan)
    table = pd.DataFrame({'t': full.table['t'], 'W2_eps': full.distances(), 'W2_half': half.distances(), 'ratio': ratio})
    return StabilityResult(table=table, max_ratio=full.max_ratio, path_sup=path.sup_abs,
                           extra={'ratio_min': float(np.nanmin(ratio)), 'ratio_max': float(np.nanmax(ratio))})
