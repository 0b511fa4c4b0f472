"""
Ансамбль частиц Кукера–Смейла и начальные данные
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.config import NOISE_MODES
from core.exceptions import GridShapeError, LabConfigError, NumericalBlowupError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """Положения x и скорости v (N×d) в момент t; после создания не изменяется"""
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0
    noise_mode: str = 'common'

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape != self.v.shape:
            raise GridShapeError(f"Несогласованные размеры x{self.x.shape} и v{self.v.shape}")
        if self.noise_mode not in NOISE_MODES:
            raise LabConfigError(f"Неизвестный режим шума '{self.noise_mode}'")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))):
            raise NumericalBlowupError(f"Нефинитное состояние ансамбля при t={self.t:g}")

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def vbar(self) -> np.ndarray:
        return self.v.mean(axis=0)

    def evolve(self, x, v, t) -> 'ParticleEnsemble':
        return ParticleEnsemble(x=x, v=v, t=float(t), noise_mode=self.noise_mode)

    def permuted(self, order) -> 'ParticleEnsemble':
        return self.evolve(self.x[order], self.v[order], self.t)

    def head(self, n: int) -> 'ParticleEnsemble':
        """Первые n частиц (вложенные выборки из одной мастер-выборки)"""
        return self.evolve(self.x[:n].copy(), self.v[:n].copy(), self.t)


def initial_ensemble(N: int, d: int, rng: np.random.Generator, noise_mode: str = 'common',
                     center: bool = True) -> ParticleEnsemble:
    """Равномерно на [−1,1]^d × [−1,1]^d; скорости сдвинуты так, что Σ v_i = 0"""
    x = rng.uniform(-1.0, 1.0, size=(N, d))
    v = rng.uniform(-1.0, 1.0, size=(N, d))
    if center:
        v = v - v.mean(axis=0)
    return ParticleEnsemble(x=x, v=v, t=0.0, noise_mode=noise_mode)


def center_velocities(ens: ParticleEnsemble) -> ParticleEnsemble:
    return ens.evolve(ens.x, ens.v - ens.vbar, ens.t)


def sample_from_density(state, N: int, rng: np.random.Generator, noise_mode: str = 'common',
                        center: bool = True) -> ParticleEnsemble:
    """
    Выборка N частиц (d = 1) из сеточной плотности: ячейка выбирается по весу
    квадратуры, внутри ячейки точка равномерна.
    """
    grid = state.grid
    weights = grid.quadrature_weights() * np.clip(state.f, 0.0, None)
    total = weights.sum()
    if not total > 0:
        raise LabConfigError("Плотность с нулевой массой нельзя использовать для выборки")
    cells = rng.choice(weights.size, size=N, p=(weights / total).ravel())
    ix, iv = np.unravel_index(cells, weights.shape)
    x = grid.x_nodes[ix] + rng.uniform(-0.5, 0.5, N) * grid.hx
    v = grid.v_nodes[iv] + rng.uniform(-0.5, 0.5, N) * grid.hv
    x = np.clip(x, grid.x_range[0], grid.x_range[1])
    v = np.clip(v, grid.v_range[0], grid.v_range[1])
    ens = ParticleEnsemble(x=x[:, None], v=v[:, None], t=float(state.t), noise_mode=noise_mode)
    return center_velocities(ens) if center else ens
