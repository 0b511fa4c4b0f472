"""
Статистика Монте-Карло: средние с доверительными интервалами и подгонка скорости затухания
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from core.exceptions import GridShapeError, LabDomainError

logger = logging.getLogger(__name__)

Z95 = 1.96


def mc_expectation(samples) -> Tuple[float, float]:
    """Выборочное среднее и полуширина 95% интервала 1.96·s/√n"""
    data = np.asarray(samples, dtype=float).ravel()
    if data.size < 2:
        raise LabDomainError(f"Для оценки нужно хотя бы 2 значения, получено {data.size}")
    mean = math.fsum(data) / data.size
    return mean, Z95 * float(np.std(data, ddof=1)) / math.sqrt(data.size)


@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    r_squared: float
    window: Tuple[float, float]
    ci_halfwidth: float = float('nan')
    points: int = 0

    def as_record(self) -> str:
        """Однострочная запись key=value"""
        return (
            f"rate={self.rate:.10g} intercept={self.intercept:.10g} r_squared={self.r_squared:.6g} "
            f"window={self.window[0]:g},{self.window[1]:g} ci={self.ci_halfwidth:.6g} points={self.points}"
        )


@dataclass(frozen=True, eq=False)
class MeanSeries:
    """Среднее по репликам с поточечными 95% интервалами"""
    t_grid: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    e_t: np.ndarray
    supp_x: np.ndarray
    supp_v: np.ndarray
    m2_ci: np.ndarray
    e_t_ci: np.ndarray
    n_replicas: int
    path: Optional[object] = field(default=None, repr=False)

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    def values(self, field_name: str) -> np.ndarray:
        try:
            return np.asarray(getattr(self, field_name), dtype=float)
        except AttributeError:
            raise LabDomainError(f"Неизвестная наблюдаемая '{field_name}'") from None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            't': self.t_grid, 'M2': self.m2, 'M2_ci': self.m2_ci,
            'E': self.e_t, 'E_ci': self.e_t_ci, 'suppX': self.supp_x, 'suppV': self.supp_v,
        })


def mean_series(series_list: Sequence) -> MeanSeries:
    """Поточечное среднее рядов реплик (порядок суммирования фиксирован порядком списка)"""
    if len(series_list) < 2:
        raise LabDomainError(f"Для усреднения нужно хотя бы 2 реплики, получено {len(series_list)}")
    t_grid = series_list[0].t_grid
    for series in series_list[1:]:
        if series.t_grid.shape != t_grid.shape or not np.allclose(series.t_grid, t_grid):
            raise GridShapeError("Ряды реплик заданы на разных сетках")

    def stack(name):
        return np.stack([np.asarray(getattr(s, name), dtype=float) for s in series_list])

    n = len(series_list)
    m2, e_t = stack('m2'), stack('e_t')
    ci = lambda block: Z95 * block.std(axis=0, ddof=1) / math.sqrt(n)
    return MeanSeries(
        t_grid=t_grid,
        m0=stack('m0').mean(axis=0),
        m1=stack('m1').mean(axis=0),
        m2=m2.mean(axis=0),
        e_t=e_t.mean(axis=0),
        supp_x=stack('supp_x').mean(axis=0),
        supp_v=stack('supp_v').mean(axis=0),
        m2_ci=ci(m2),
        e_t_ci=ci(e_t),
        n_replicas=n,
        path=series_list[0].path,
    )


def _window_mask(t_grid, window, T):
    lo, hi = window if window is not None else (0.2 * T, 0.9 * T)
    mask = (t_grid >= lo - 1e-12) & (t_grid <= hi + 1e-12)
    if mask.sum() < 2:
        raise LabDomainError(f"В окне [{lo:g}, {hi:g}] меньше двух точек")
    return mask, (float(lo), float(hi))


def _fit_log(t, y, window_bounds) -> RateFit:
    bad = t[~(y > 0)]
    if bad.size:
        listed = ', '.join(f'{v:g}' for v in bad[:10])
        raise LabDomainError(f"Неположительные значения в окне подгонки при t = {listed}")
    result = stats.linregress(t, np.log(y))
    r_squared = float(result.rvalue) ** 2 if np.isfinite(result.rvalue) else 0.0
    return RateFit(
        rate=float(result.slope),
        intercept=float(result.intercept),
        r_squared=min(max(r_squared, 0.0), 1.0),
        window=window_bounds,
        points=int(t.size),
    )


def fit_decay_rate(series, field_name: str = 'm2', window: Optional[Tuple[float, float]] = None) -> RateFit:
    """
    Наклон МНК log(field) по t в окне; окно по умолчанию [0.2T, 0.9T].
    """
    t = np.asarray(series.t_grid, dtype=float)
    mask, bounds = _window_mask(t, window, float(t[-1]))
    return _fit_log(t[mask], series.values(field_name)[mask], bounds)


def bootstrap_rate(
    series_list: Sequence,
    field_name: str = 'm2',
    window: Optional[Tuple[float, float]] = None,
    n_boot: int = 200,
    seed: int = 0,
) -> RateFit:
    """Скорость по среднему реплик; полуширина интервала из бутстрепа по репликам"""
    mean = mean_series(series_list)
    base = fit_decay_rate(mean, field_name, window)
    t = np.asarray(mean.t_grid)
    mask, bounds = _window_mask(t, window, float(t[-1]))
    block = np.stack([np.asarray(getattr(s, field_name), dtype=float)[mask] for s in series_list])

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), len(series_list)]))
    rates = np.empty(n_boot)
    for b in range(n_boot):
        pick = rng.integers(0, len(series_list), len(series_list))
        rates[b] = _fit_log(t[mask], block[pick].mean(axis=0), bounds).rate
    ci = Z95 * float(np.std(rates, ddof=1))
    logger.debug(f"Бутстреп скорости {field_name}: {n_boot} выборок, ci={ci:.4g}")
    return RateFit(
        rate=base.rate, intercept=base.intercept, r_squared=base.r_squared,
        window=bounds, ci_halfwidth=ci, points=base.points,
    )
