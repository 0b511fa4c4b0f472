"""
Аналитические оракулы для скалярного аффинного уравнения
dX = (a_t + b_t X) dt + c X dW (в форме Ито) и принцип сравнения
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from core.exceptions import GridShapeError
from core.paths import WienerPath

logger = logging.getLogger(__name__)

Coefficient = Union[float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Значения процесса в узлах сетки пути"""
    t_grid: np.ndarray
    states: np.ndarray
    path_seed: Optional[int] = None

    def __post_init__(self):
        if len(self.states) != len(self.t_grid):
            raise GridShapeError(
                f"Длина траектории {len(self.states)} не совпадает с сеткой {len(self.t_grid)}"
            )

    @property
    def terminal(self):
        return self.states[-1]

    def to_frame(self) -> pd.DataFrame:
        flat = self.states.reshape(len(self.t_grid), -1)
        columns = ['value'] if flat.shape[1] == 1 else [f'value_{j}' for j in range(flat.shape[1])]
        frame = pd.DataFrame(flat, columns=columns)
        frame.insert(0, 't', self.t_grid)
        return frame

    def export_csv(self, filename) -> None:
        self.to_frame().to_csv(filename, index=False, float_format='%.17g')


@dataclass(frozen=True, eq=False)
class AffineGbmSpec:
    """Коэффициенты a_t, b_t на сетке пути и постоянный c"""
    x0: float
    a: np.ndarray
    b: np.ndarray
    c: float
    t_grid: np.ndarray = field(repr=False)

    def check_grid(self, path: WienerPath) -> None:
        if self.a.shape != path.t_grid.shape or self.b.shape != path.t_grid.shape:
            raise GridShapeError(
                f"Коэффициенты заданы на {self.a.shape}/{self.b.shape} узлах, путь имеет {path.t_grid.shape}"
            )
        if not path.same_grid(self.t_grid):
            raise GridShapeError("Сетка коэффициентов не совпадает с сеткой пути")


def sample_coefficient(coef: Coefficient, t_grid: np.ndarray) -> np.ndarray:
    """Коэффициент-число или функция времени, вычисленный в узлах"""
    if callable(coef):
        return np.asarray(coef(t_grid), dtype=float) * np.ones_like(t_grid)
    return np.full_like(t_grid, float(coef), dtype=float)


def affine_spec_on(path: WienerPath, x0: float, a: Coefficient, b: Coefficient, c: float) -> AffineGbmSpec:
    """Выборка коэффициентов (чисел или функций времени) на сетке пути"""
    return AffineGbmSpec(
        x0=float(x0),
        a=sample_coefficient(a, path.t_grid),
        b=sample_coefficient(b, path.t_grid),
        c=float(c),
        t_grid=path.t_grid,
    )


def gbm_affine_closed_form(spec: AffineGbmSpec, path: WienerPath) -> Trajectory:
    """
    Явное решение через вариацию постоянных:
    X_t = E_t [x + ∫ a_s / E_s ds],  E_t = exp(∫(b − c²/2) ds + c W_t).

    Интегралы по времени берутся по формуле трапеций на сетке пути.
    """
    spec.check_grid(path)
    t = path.t_grid
    if path.K == 0:
        return Trajectory(t_grid=t, states=np.array([spec.x0]), path_seed=path.seed)

    exponent = cumulative_trapezoid(spec.b - 0.5 * spec.c ** 2, t, initial=0.0) + spec.c * path.values
    growth = np.exp(exponent)
    forcing = cumulative_trapezoid(spec.a / growth, t, initial=0.0)
    return Trajectory(t_grid=t, states=growth * (spec.x0 + forcing), path_seed=path.seed)


def comparison_check(x_traj: Trajectory, y_traj: Trajectory) -> Tuple[bool, Optional[int]]:
    """
    Проверка X_t <= Y_t + tol во всех узлах, tol = 1e-9·max|Y|.

    Возвращает (True, None) или (False, индекс первого нарушения).
    """
    if x_traj.states.shape != y_traj.states.shape or not np.allclose(
        x_traj.t_grid, y_traj.t_grid, rtol=0, atol=1e-12
    ):
        raise GridShapeError("Траектории заданы на разных сетках")

    tol = 1e-9 * float(np.max(np.abs(y_traj.states))) if y_traj.states.size else 0.0
    excess = (x_traj.states - y_traj.states).reshape(len(x_traj.t_grid), -1).max(axis=1)
    bad = np.flatnonzero(excess > tol)
    if bad.size:
        return False, int(bad[0])
    return True, None
