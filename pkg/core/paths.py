"""
Траектории винеровского процесса: выборка, измельчение мостом и сглаживание
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from .exceptions import GridShapeError, LabConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class WienerPath:
    """
    Одна скалярная траектория W на равномерной сетке 0 = t_0 < ... < t_K = T.

    lineage хранит цепочку коэффициентов измельчения, так что любая
    производная траектория однозначно восстанавливается по seed.
    """
    t_grid: np.ndarray
    values: np.ndarray
    seed: int
    dt: float
    lineage: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def K(self) -> int:
        return len(self.t_grid) - 1

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def at(self, t):
        """Линейная интерполяция пути (вне [0, T] значение замораживается)"""
        return np.interp(t, self.t_grid, self.values)

    def coarsen(self, factor: int) -> 'WienerPath':
        """Прореживание: каждое factor-е значение"""
        if factor < 1 or self.K % factor:
            raise GridShapeError(f"Сетка из {self.K} шагов не делится на {factor}")
        return WienerPath(
            t_grid=self.t_grid[::factor].copy(),
            values=self.values[::factor].copy(),
            seed=self.seed,
            dt=self.dt * factor,
            lineage=self.lineage + (-factor,),
        )

    def same_grid(self, t_grid) -> bool:
        t_grid = np.asarray(t_grid)
        return t_grid.shape == self.t_grid.shape and np.allclose(t_grid, self.t_grid, rtol=0, atol=1e-12)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'t': self.t_grid, 'W': self.values})

    def export_csv(self, filename) -> None:
        self.to_frame().to_csv(filename, index=False, float_format='%.17g')


def _step_count(T: float, dt: float) -> int:
    if T == 0:
        return 0
    return max(1, math.ceil(T / dt - 1e-9))


def wiener_sample(seed: int, T: float, dt: float) -> WienerPath:
    """
    Выборка пути с W_0 = 0 и K = ceil(T/dt) шагами.

    Фактический шаг T/K совпадает с dt, когда T кратно dt.
    """
    if dt <= 0:
        raise LabConfigError(f"Шаг по времени должен быть положительным, получено dt={dt}")
    if T < 0:
        raise LabConfigError(f"Горизонт должен быть неотрицательным, получено T={T}")

    K = _step_count(T, dt)
    dt_eff = T / K if K else float(dt)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    values = np.zeros(K + 1)
    if K:
        values[1:] = np.cumsum(rng.normal(0.0, math.sqrt(dt_eff), size=K))
    return WienerPath(
        t_grid=np.linspace(0.0, T, K + 1),
        values=values,
        seed=int(seed),
        dt=dt_eff,
    )


def wiener_refine(path: WienerPath, factor: int) -> WienerPath:
    """
    Измельчение шага в factor раз условной выборкой броуновского моста.

    Значения в узлах исходной сетки копируются без изменений.
    """
    if int(factor) != factor or factor < 2:
        raise LabConfigError(f"Коэффициент измельчения должен быть целым >= 2, получено {factor}")
    factor = int(factor)

    K = path.K
    h = path.dt / factor
    lineage = path.lineage + (factor,)
    rng = np.random.default_rng(np.random.SeedSequence([path.seed, *[abs(x) for x in lineage], factor]))

    fine = np.empty((K, factor + 1))
    fine[:, 0] = path.values[:-1]
    fine[:, -1] = path.values[1:]
    # последовательный мост, векторизованный по интервалам
    for j in range(1, factor):
        remaining = (factor - j + 1) * h
        prev = fine[:, j - 1]
        mean = prev + (fine[:, -1] - prev) * (h / remaining)
        std = math.sqrt(h * (remaining - h) / remaining)
        fine[:, j] = mean + std * rng.standard_normal(K)

    values = np.empty(K * factor + 1)
    if K:
        values[:-1] = fine[:, :-1].reshape(-1)
    values[::factor] = path.values

    t_grid = np.linspace(0.0, path.T, K * factor + 1)
    t_grid[::factor] = path.t_grid
    return WienerPath(t_grid=t_grid, values=values, seed=path.seed, dt=h, lineage=lineage)


def _ramp_smooth(y: np.ndarray, a: float) -> np.ndarray:
    """Свёртка max(y, 0) с треугольным ядром полуширины a, в виде поправки к самому max(y, 0)"""
    gap = np.clip(a - np.abs(y), 0.0, None)
    return gap ** 3 / (6.0 * a * a)


def _ramp_smooth_rate(y: np.ndarray, a: float) -> np.ndarray:
    inner = np.clip(y, -a, a)
    left = (a + inner) ** 2 / (2.0 * a * a)
    right = 1.0 - (a - inner) ** 2 / (2.0 * a * a)
    return np.where(y <= -a, 0.0, np.where(y >= a, 1.0, np.where(inner <= 0, left, right)))


@dataclass(frozen=True, eq=False)
class SmoothPath:
    """
    Сглаженный путь W^eps: кусочно-линейная интерполяция базового пути,
    усреднённая треугольным окном полуширины eps.

    Вычисляется в замкнутой форме, поэтому доступна в любой момент t
    вместе с производной dW^eps/dt.
    """
    base: WienerPath
    eps: float
    t_grid: np.ndarray
    values: np.ndarray
    kinks: np.ndarray = field(repr=False)

    def _band_sum(self, t: np.ndarray, kernel) -> Tuple[np.ndarray, np.ndarray]:
        """Σ kernel(t − t_k)·kinks_k по узлам t_k ∈ (t − eps, t + eps) и индекс первого узла полосы"""
        nodes = self.base.t_grid
        lo = np.searchsorted(nodes, t - self.eps, side='right')
        hi = np.searchsorted(nodes, t + self.eps, side='left')
        total = np.zeros(t.shape)
        width = int(np.max(hi - lo, initial=0))
        for offset in range(width):
            idx = lo + offset
            inside = idx < hi
            k = np.where(inside, idx, 0)
            total += np.where(inside, kernel(t - nodes[k], self.eps) * self.kinks[k], 0.0)
        return total, lo

    def value_at(self, t):
        t = np.asarray(t, dtype=float)
        correction, _ = self._band_sum(t.reshape(-1), _ramp_smooth)
        return self.base.at(t) + correction.reshape(t.shape)

    def rate_at(self, t):
        # узлы левее полосы дают полный излом
        t = np.asarray(t, dtype=float)
        band, lo = self._band_sum(t.reshape(-1), _ramp_smooth_rate)
        settled = np.concatenate([[0.0], np.cumsum(self.kinks)])[lo]
        return (band + settled).reshape(t.shape)

    def sup_distance(self) -> float:
        """sup |W^eps − W_lin| по точкам мелкой сетки (узлы базовой сетки входят в неё)"""
        return float(np.max(np.abs(self.values - self.base.at(self.t_grid))))


def mollify_path(path: WienerPath, eps: float, resolution: int = 4) -> SmoothPath:
    """Треугольное сглаживание пути; за пределами [0, T] путь продолжается константой"""
    if eps <= 0:
        raise LabConfigError(f"Ширина сглаживания должна быть положительной, получено eps={eps}")

    slopes = path.increments / path.dt if path.K else np.zeros(0)
    padded = np.concatenate([[0.0], slopes, [0.0]])
    kinks = np.diff(padded)

    t_fine = np.linspace(0.0, path.T, path.K * resolution + 1)
    smooth = SmoothPath(base=path, eps=float(eps), t_grid=t_fine, values=np.zeros(0), kinks=kinks)
    values = smooth.value_at(t_fine)
    logger.debug(f"Сглаживание пути seed={path.seed}: eps={eps}, узлов {len(t_fine)}")
    return SmoothPath(base=path, eps=float(eps), t_grid=t_fine, values=values, kinks=kinks)
