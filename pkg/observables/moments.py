"""
Моменты, энергия флуктуаций и функционалы носителя для частиц и сеточной плотности
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from django.conf import settings

from core.exceptions import GridShapeError, LabDomainError

logger = logging.getLogger(__name__)


def _is_kinetic(state) -> bool:
    return hasattr(state, 'f') and hasattr(state, 'grid')


def _velocities(state) -> np.ndarray:
    v = np.asarray(state.v, dtype=float)
    if v.size == 0:
        raise LabDomainError("Пустой ансамбль частиц")
    return v.reshape(len(v), -1)


def moments(state):
    """
    (M0, M1, M2): для частиц M0 = 1, M1 = среднее v, M2 = среднее |v|²;
    для сеточной плотности те же интегралы квадратурой трапеций.
    """
    if _is_kinetic(state):
        grid, f = state.grid, state.f
        if f.size == 0:
            raise LabDomainError("Пустая сеточная плотность")
        V = grid.v_nodes[None, :]
        m0 = grid.integrate(f)
        m1 = np.array([grid.integrate(V * f)])
        m2 = grid.integrate(V * V * f)
        return float(m0), m1, float(m2)

    v = _velocities(state)
    return 1.0, v.mean(axis=0), float(np.mean(np.sum(v * v, axis=1)))


def fluctuation_energy(state, vbar0) -> float:
    """E_t = ∫|v̄_0 − v|² dμ_t"""
    vbar0 = np.atleast_1d(np.asarray(vbar0, dtype=float))
    if _is_kinetic(state):
        grid = state.grid
        gap = (grid.v_nodes[None, :] - vbar0[0]) ** 2
        return float(grid.integrate(gap * state.f))
    v = _velocities(state)
    return float(np.mean(np.sum((v - vbar0) ** 2, axis=1)))


def support_threshold() -> float:
    return float(getattr(settings, 'FLOCK_SUPPORT_THRESHOLD', 1e-12))


def supports(state, threshold: Optional[float] = None):
    """
    (X, V): для частиц max|x_i| и max|v_i|; для плотности радиусы наименьшего
    центрированного прямоугольника, содержащего узлы с f > threshold·max f.
    """
    if _is_kinetic(state):
        f = state.f
        peak = float(np.max(f)) if f.size else 0.0
        if peak <= 0:
            return 0.0, 0.0
        level = (support_threshold() if threshold is None else threshold) * peak
        ix, iv = np.nonzero(f > level)
        grid = state.grid
        return float(np.max(np.abs(grid.x_nodes[ix]))), float(np.max(np.abs(grid.v_nodes[iv])))

    x = np.asarray(state.x, dtype=float).reshape(len(state.x), -1)
    v = _velocities(state)
    return float(np.max(np.linalg.norm(x, axis=1))), float(np.max(np.linalg.norm(v, axis=1)))


@dataclass(frozen=True, eq=False)
class MomentSeries:
    """Временной ряд наблюдаемых вместе с управляющим путём"""
    t_grid: np.ndarray
    m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    e_t: np.ndarray
    supp_x: np.ndarray
    supp_v: np.ndarray
    path: Optional[object] = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.t_grid)
        for name in ('m0', 'm1', 'm2', 'e_t', 'supp_x', 'supp_v'):
            if len(getattr(self, name)) != n:
                raise GridShapeError(f"Ряд '{name}' не согласован с сеткой из {n} точек")

    @property
    def T(self) -> float:
        return float(self.t_grid[-1])

    def values(self, field_name: str) -> np.ndarray:
        try:
            return np.asarray(getattr(self, field_name), dtype=float)
        except AttributeError:
            raise LabDomainError(f"Неизвестная наблюдаемая '{field_name}'") from None

    def to_frame(self) -> pd.DataFrame:
        m1 = np.asarray(self.m1).reshape(len(self.t_grid), -1)
        frame = pd.DataFrame({'t': self.t_grid, 'M0': self.m0})
        for j in range(m1.shape[1]):
            frame[f'M1_{j}'] = m1[:, j]
        frame['M2'] = self.m2
        frame['E'] = self.e_t
        frame['suppX'] = self.supp_x
        frame['suppV'] = self.supp_v
        return frame

    def export_csv(self, filename) -> None:
        self.to_frame().to_csv(filename, index=False, float_format='%.17g')


def moment_series(times: Sequence[float], states: Sequence, path=None, vbar0=None) -> MomentSeries:
    """Ряд наблюдаемых по последовательности состояний; v̄_0 берётся из первого состояния"""
    if not len(states):
        raise LabDomainError("Пустая последовательность состояний")
    if vbar0 is None:
        vbar0 = moments(states[0])[1]
    rows = [moments(state) for state in states]
    supp = np.array([supports(state) for state in states])
    return MomentSeries(
        t_grid=np.asarray(times, dtype=float),
        m0=np.array([row[0] for row in rows]),
        m1=np.array([row[1] for row in rows]),
        m2=np.array([row[2] for row in rows]),
        e_t=np.array([fluctuation_energy(state, vbar0) for state in states]),
        supp_x=supp[:, 0],
        supp_v=supp[:, 1],
        path=path,
    )
