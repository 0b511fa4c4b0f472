"""
Проверки теоретических оценок затухания по измеренным рядам
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy.integrate import cumulative_trapezoid

from core.config import replica_seed
from core.exceptions import GridShapeError
from core.paths import wiener_sample
from core.weights import CommWeight

from .statistics import Z95

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundCheck:
    """Результат проверки: флаг, максимальное относительное превышение и момент худшего случая"""
    passed: bool
    max_violation: float
    worst_time: float
    applicable: bool = True
    details: Dict[str, float] = field(default_factory=dict)

    def as_measured(self) -> Dict[str, float]:
        measured = {'max_violation': self.max_violation, 'worst_time': self.worst_time}
        measured.update(self.details)
        return measured


def _path_values(series, path) -> np.ndarray:
    """Значения пути в моментах ряда; моменты должны быть узлами сетки пути"""
    t = np.asarray(series.t_grid, dtype=float)
    idx = np.searchsorted(path.t_grid, t - 1e-9)
    idx = np.clip(idx, 0, path.K)
    if np.any(np.abs(path.t_grid[idx] - t) > 1e-9):
        raise GridShapeError("Моменты ряда не совпадают с узлами сетки пути")
    return path.values[idx]


def _upper_check(measured, bound, t) -> BoundCheck:
    excess = measured / np.where(bound > 0, bound, np.inf) - 1.0
    excess = np.where(bound > 0, excess, np.where(measured > 0, np.inf, 0.0))
    worst = int(np.argmax(excess)) if excess.size else 0
    return BoundCheck(
        passed=bool(np.all(measured <= bound)),
        max_violation=float(max(excess[worst], 0.0)) if excess.size else 0.0,
        worst_time=float(t[worst]) if len(t) else 0.0,
    )


def pathwise_bound_check(series, phi_m: float, sigma: float, path) -> BoundCheck:
    """M2(t) <= M2(0)·exp(−2φ_m t − 2σW_t)·(1 + 10·dt) во всех точках ряда"""
    t = np.asarray(series.t_grid, dtype=float)
    W = _path_values(series, path)
    m2 = series.values('m2')
    tol = 10.0 * path.dt
    bound = m2[0] * np.exp(-2.0 * phi_m * t - 2.0 * sigma * W) * (1.0 + tol)
    return _upper_check(m2, bound, t)


def dissipation_bound_check(series, weight: CommWeight, sigma: float, path) -> BoundCheck:
    """Точная форма: M2(t) <= M2(0)·exp(−2∫φ̄(2X(s))ds − 2σW_t)"""
    t = np.asarray(series.t_grid, dtype=float)
    W = _path_values(series, path)
    m2 = series.values('m2')
    rate = weight(2.0 * series.values('supp_x'))
    integral = cumulative_trapezoid(rate, t, initial=0.0) if len(t) > 1 else np.zeros(1)
    bound = m2[0] * np.exp(-2.0 * integral - 2.0 * sigma * W) * (1.0 + 10.0 * path.dt)
    return _upper_check(m2, bound, t)


def velocity_support_check(series, weight: CommWeight, sigma: float, path, d: int) -> BoundCheck:
    """max|v_i| <= √2 (V_0 + φ_M √(d·M2(0)) t) exp(−φ_m t − σW_t) (1 + 10·dt)"""
    t = np.asarray(series.t_grid, dtype=float)
    W = _path_values(series, path)
    supp_v = series.values('supp_v')
    m2_0 = series.values('m2')[0]
    growth = supp_v[0] + weight.phi_M * math.sqrt(d * m2_0) * t
    bound = math.sqrt(2.0) * growth * np.exp(-weight.phi_m * t - sigma * W) * (1.0 + 10.0 * path.dt)
    return _upper_check(supp_v, bound, t)


def expectation_band_check(mean, weight: CommWeight, sigma: float, dt: float) -> BoundCheck:
    """
    E[M2](t) внутри [M2(0)e^{−2(φ_M−σ²)t}, M2(0)e^{−2(φ_m−σ²)t}] с допуском CI + 10·dt.

    Применимо только при φ_m > σ².
    """
    t = np.asarray(mean.t_grid, dtype=float)
    if not weight.phi_m > sigma ** 2:
        return BoundCheck(passed=True, max_violation=0.0, worst_time=0.0, applicable=False)
    m2, ci = mean.values('m2'), np.asarray(mean.m2_ci, dtype=float)
    s2 = sigma ** 2
    lower = m2[0] * np.exp(-2.0 * (weight.phi_M - s2) * t) * (1.0 - 10.0 * dt)
    upper = m2[0] * np.exp(-2.0 * (weight.phi_m - s2) * t) * (1.0 + 10.0 * dt)
    above = (m2 - ci) / upper - 1.0
    below = 1.0 - (m2 + ci) / np.where(lower > 0, lower, np.inf)
    excess = np.maximum(above, below)
    worst = int(np.argmax(excess))
    return BoundCheck(
        passed=bool(np.all(excess <= 0)),
        max_violation=float(max(excess[worst], 0.0)),
        worst_time=float(t[worst]),
        details={'lower_rate': -2.0 * (weight.phi_M - s2), 'upper_rate': -2.0 * (weight.phi_m - s2)},
    )


def growth_bound_check(mean, sigma: float, dt: float) -> BoundCheck:
    """E[M2](t) <= M2(0)·e^{2σ²t}·(1 + 10·dt) с учётом интервала среднего"""
    t = np.asarray(mean.t_grid, dtype=float)
    m2, ci = mean.values('m2'), np.asarray(mean.m2_ci, dtype=float)
    bound = m2[0] * np.exp(2.0 * sigma ** 2 * t) * (1.0 + 10.0 * dt)
    check = _upper_check(m2 - ci, bound, t)
    return BoundCheck(
        passed=check.passed, max_violation=check.max_violation, worst_time=check.worst_time,
        details={'bound_rate': 2.0 * sigma ** 2},
    )


def exponential_martingale_check(sigma: float, T: float, dt: float, paths: int, seed: int) -> BoundCheck:
    """
    Проверка генератора: E[exp(−2σW_T)] = exp(2σ²T) в пределах 95% интервала,
    до запуска экспериментов со скоростями.
    """
    terminal = np.array([
        wiener_sample(replica_seed(seed, k), T, dt).values[-1] for k in range(paths)
    ])
    factors = np.exp(-2.0 * sigma * terminal)
    mean = float(factors.mean())
    ci = Z95 * float(factors.std(ddof=1)) / math.sqrt(paths)
    exact = math.exp(2.0 * sigma ** 2 * T)
    gap = abs(mean - exact)
    logger.info(f"Экспоненциальный мартингал: среднее {mean:.6g}, точное {exact:.6g}, ci {ci:.3g}")
    return BoundCheck(
        passed=gap <= ci,
        max_violation=gap / exact,
        worst_time=float(T),
        details={'mean': mean, 'exact': exact, 'ci': ci},
    )
