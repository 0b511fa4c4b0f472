"""
Фазовая сетка (x, v) для d = 1, сеточная плотность и огибающие носителя
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from core.exceptions import GridShapeError, LabConfigError, LabDomainError
from observables.moments import MomentSeries, moment_series, supports

logger = logging.getLogger(__name__)

MIN_NODES = 8


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    return weights


@dataclass(frozen=True)
class PhaseGrid:
    """Равномерная сетка узлов на прямоугольнике x_range × v_range"""
    x_range: Tuple[float, float]
    v_range: Tuple[float, float]
    nx: int
    nv: int

    def __post_init__(self):
        bounds = (*self.x_range, *self.v_range)
        if not all(math.isfinite(b) for b in bounds):
            raise GridShapeError(f"Границы сетки должны быть конечными: {bounds}")
        if not (self.x_range[0] < self.x_range[1] and self.v_range[0] < self.v_range[1]):
            raise GridShapeError(f"Пустой прямоугольник сетки: {self.x_range} × {self.v_range}")
        if self.nx < MIN_NODES or self.nv < MIN_NODES:
            raise GridShapeError(f"Нужно не меньше {MIN_NODES} узлов по каждой оси, получено {self.nx}×{self.nv}")

    @property
    def hx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / (self.nx - 1)

    @property
    def hv(self) -> float:
        return (self.v_range[1] - self.v_range[0]) / (self.nv - 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.nx, self.nv

    @cached_property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(self.x_range[0], self.x_range[1], self.nx)

    @cached_property
    def v_nodes(self) -> np.ndarray:
        return np.linspace(self.v_range[0], self.v_range[1], self.nv)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x_nodes, self.v_nodes, indexing='ij')

    @cached_property
    def x_weights(self) -> np.ndarray:
        return _trapezoid_weights(self.nx, self.hx)

    @cached_property
    def v_weights(self) -> np.ndarray:
        return _trapezoid_weights(self.nv, self.hv)

    def quadrature_weights(self) -> np.ndarray:
        return np.outer(self.x_weights, self.v_weights)

    def integrate(self, values: np.ndarray) -> float:
        """Квадратура трапеций по обеим осям"""
        return float(self.x_weights @ np.asarray(values) @ self.v_weights)

    def contains(self, x, v) -> np.ndarray:
        x, v = np.asarray(x), np.asarray(v)
        eps = 1e-12
        return ((x >= self.x_range[0] - eps) & (x <= self.x_range[1] + eps)
                & (v >= self.v_range[0] - eps) & (v <= self.v_range[1] + eps))

    def half_widths(self) -> Tuple[float, float]:
        return (max(abs(self.x_range[0]), abs(self.x_range[1])),
                max(abs(self.v_range[0]), abs(self.v_range[1])))

    def inner_radius(self) -> Tuple[float, float]:
        """Радиусы наибольшего центрированного прямоугольника внутри сетки"""
        return (min(-self.x_range[0], self.x_range[1]), min(-self.v_range[0], self.v_range[1]))


@dataclass(frozen=True, eq=False)
class KineticState:
    """Плотность f в узлах сетки в момент t"""
    grid: PhaseGrid
    f: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.f.shape != self.grid.shape:
            raise GridShapeError(f"Плотность {self.f.shape} не согласована с сеткой {self.grid.shape}")
        if np.any(self.f < 0):
            raise LabDomainError(f"Плотность отрицательна в {int(np.sum(self.f < 0))} узлах")

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.f)

    @property
    def sup_norm(self) -> float:
        return float(np.max(self.f))

    def with_density(self, f, t=None) -> 'KineticState':
        return KineticState(grid=self.grid, f=f, t=self.t if t is None else float(t))

    def to_frame(self) -> pd.DataFrame:
        X, V = self.grid.mesh()
        return pd.DataFrame({'x': X.ravel(), 'v': V.ravel(), 'f': self.f.ravel()})

    def export_csv(self, filename) -> None:
        self.to_frame().to_csv(filename, index=False, float_format='%.17g')


@dataclass(frozen=True, eq=False)
class KineticTrajectory:
    """Плотности во всех узлах сетки пути"""
    times: np.ndarray
    states: List[KineticState]
    path: Optional[object] = field(default=None, repr=False)

    @property
    def final(self) -> KineticState:
        return self.states[-1]

    @cached_property
    def series(self) -> MomentSeries:
        return moment_series(self.times, self.states, path=self.path)

    def stack(self) -> np.ndarray:
        return np.stack([state.f for state in self.states])

    def sup_norms(self) -> np.ndarray:
        return np.array([state.sup_norm for state in self.states])

    def save_npz(self, filename) -> None:
        grid = self.states[0].grid
        np.savez_compressed(
            filename, t=self.times, f=self.stack(), x=grid.x_nodes, v=grid.v_nodes,
        )


def indicator_density(grid: PhaseGrid, x_half: float, v_half: float, t: float = 0.0) -> KineticState:
    """Индикатор |x| <= x_half, |v| <= v_half, нормированный квадратурой к массе 1"""
    X, V = grid.mesh()
    f = ((np.abs(X) <= x_half + 1e-12) & (np.abs(V) <= v_half + 1e-12)).astype(float)
    mass = grid.integrate(f)
    if mass <= 0:
        raise LabConfigError(f"Индикатор {x_half}×{v_half} не содержит узлов сетки")
    return KineticState(grid=grid, f=f / mass, t=t)


def datum_radius(state: KineticState) -> float:
    """Радиус R носителя данных: max(X(0), V(0))"""
    supp_x, supp_v = supports(state)
    return max(supp_x, supp_v)


def _velocity_envelope_core(path, radius, m2_0, phi_M, sigma):
    t, W = path.t_grid, path.values
    gamma = max(m2_0, phi_M)
    K_t = m2_0 * np.maximum.accumulate(np.exp(-phi_M * t + 2.0 * sigma * W))
    integrand = (gamma + K_t) * np.exp(gamma * t)
    inner = cumulative_trapezoid(integrand, t, initial=0.0) if path.K else np.zeros(1)
    return radius ** 2 + phi_M * inner


def support_envelopes(path, radius: float, m2_0: float, phi_M: float, sigma: float):
    """
    Огибающие носителя (X∞(t), V∞(t)) вдоль пути:
    V∞² = {R² + φ_M ∫(γ+K_s)e^{γs}ds}·exp(φ_M t − 2σW_t),
    X∞² = 2(R² + t ∫ {R² + φ_M ∫(γ+K)e^{γτ}dτ}·exp(φ_M s − 2σW_s) ds),
    γ = max(M2(0), φ_M), K_t = M2(0)·sup_{s<=t} exp(−φ_M s + 2σW_s).
    """
    t, W = path.t_grid, path.values
    core = _velocity_envelope_core(path, radius, m2_0, phi_M, sigma)
    v_sq = core * np.exp(phi_M * t - 2.0 * sigma * W)
    outer = cumulative_trapezoid(v_sq, t, initial=0.0) if path.K else np.zeros(1)
    x_sq = 2.0 * (radius ** 2 + t * outer)
    return np.sqrt(x_sq), np.sqrt(v_sq)


def moment_bound(path, m2_0: float, phi_M: float, sigma: float) -> np.ndarray:
    """Оценка второго момента итераций: (γ + K_t)·exp((γ + φ_M)t − 2σW_t)"""
    t, W = path.t_grid, path.values
    gamma = max(m2_0, phi_M)
    K_t = m2_0 * np.maximum.accumulate(np.exp(-phi_M * t + 2.0 * sigma * W))
    return (gamma + K_t) * np.exp((gamma + phi_M) * t - 2.0 * sigma * W)


def validate_grid(grid: PhaseGrid, path, radius: float, m2_0: float, phi_M: float, sigma: float) -> None:
    """Отказ, если сетка не покрывает огибающие носителя на всём горизонте"""
    x_env, v_env = support_envelopes(path, radius, m2_0, phi_M, sigma)
    x_need, v_need = float(np.max(x_env)), float(np.max(v_env))
    x_have, v_have = grid.inner_radius()
    if x_need > x_have or v_need > v_have:
        raise LabConfigError(
            f"Сетка {grid.x_range}×{grid.v_range} меньше огибающих носителя: "
            f"нужно |x| <= {x_need:.3g}, |v| <= {v_need:.3g}"
        )
    logger.debug(f"Сетка покрывает огибающие: X∞ <= {x_need:.3g}, V∞ <= {v_need:.3g}")
