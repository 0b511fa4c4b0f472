"""
Расстояние Вассерштейна W2 между эмпирическими мерами в фазовом пространстве R^{2d}
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np
import ot
from django.conf import settings
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from core.exceptions import GridShapeError, LabConfigError, LabDomainError

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 8


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Атомы (x, v) с равными весами 1/N"""
    atoms: np.ndarray

    @classmethod
    def from_ensemble(cls, ens) -> 'EmpiricalMeasure':
        return cls(atoms=np.hstack([ens.x, ens.v]))

    @property
    def N(self) -> int:
        return self.atoms.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.N, 1.0 / self.N)


def _as_measure(m) -> EmpiricalMeasure:
    if isinstance(m, EmpiricalMeasure):
        return m
    if hasattr(m, 'x') and hasattr(m, 'v'):
        return EmpiricalMeasure.from_ensemble(m)
    return EmpiricalMeasure(atoms=np.atleast_2d(np.asarray(m, dtype=float)))


def _cost(a: EmpiricalMeasure, b: EmpiricalMeasure) -> np.ndarray:
    if a.N == 0 or b.N == 0:
        raise LabDomainError("W2 не определено для пустой меры")
    if a.atoms.shape[1] != b.atoms.shape[1]:
        raise GridShapeError(f"Меры в разных размерностях: {a.atoms.shape[1]} и {b.atoms.shape[1]}")
    return cdist(a.atoms, b.atoms, 'sqeuclidean')


def exact_matching_limit() -> int:
    return int(getattr(settings, 'FLOCK_EXACT_MATCHING_LIMIT', 2048))


def wasserstein2(a, b) -> float:
    """
    W2 между мерами равного размера: минимальное паросочетание по квадратам расстояний.

    Выше порога FLOCK_EXACT_MATCHING_LIMIT используется энтропийная регуляризация
    (оценка сверху). Меры разного размера решаются задачей ЛП.
    """
    a, b = _as_measure(a), _as_measure(b)
    cost = _cost(a, b)
    if a.N != b.N:
        value = ot.emd2(a.weights, b.weights, cost)
        return math.sqrt(max(float(value), 0.0))
    if a.N > exact_matching_limit():
        reg = float(getattr(settings, 'FLOCK_ENTROPIC_REG', 0.01)) * float(cost.max() or 1.0)
        logger.warning(
            f"N={a.N} больше порога точного паросочетания {exact_matching_limit()}: "
            f"энтропийная оценка W2 сверху, reg={reg:.3g}"
        )
        value = ot.sinkhorn2(a.weights, b.weights, cost, reg, method='sinkhorn_log')
        return math.sqrt(max(float(value), 0.0))
    rows, cols = linear_sum_assignment(cost)
    return math.sqrt(math.fsum(cost[rows, cols]) / a.N)


def brute_force_wasserstein2(a, b) -> float:
    """Минимум по всем N! перестановкам; только для N <= 8"""
    a, b = _as_measure(a), _as_measure(b)
    if a.N != b.N:
        raise GridShapeError(f"Перебор требует равных размеров, получено {a.N} и {b.N}")
    if a.N > BRUTE_FORCE_LIMIT:
        raise LabConfigError(f"Перебор перестановок ограничен N <= {BRUTE_FORCE_LIMIT}, получено {a.N}")
    cost = _cost(a, b)
    idx = np.arange(a.N)
    best = min(math.fsum(cost[idx, list(p)]) for p in itertools.permutations(range(a.N)))
    return math.sqrt(best / a.N)


def pairwise_wasserstein2(pairs: Iterable[Tuple[object, object]], threads: Optional[int] = None) -> List[float]:
    """Независимые пары считаются в пуле потоков, результат в порядке пар"""
    pairs = list(pairs)
    threads = threads or int(getattr(settings, 'FLOCK_THREADS', 1))
    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda pair: wasserstein2(*pair), pairs))
    return [wasserstein2(a, b) for a, b in pairs]
