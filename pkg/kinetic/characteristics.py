"""
Стохастические характеристики dX = V dt, dV = F_a dt + σ(v_c − V)∘dW при v_c = 0
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .fields import FrozenField
from .grid import PhaseGrid

logger = logging.getLogger(__name__)


@dataclass
class ExtendedHull:
    """Сетка, расширенная на margin полуширин с каждой стороны; считает выходы за её пределы"""
    grid: PhaseGrid
    margin: float = 1.0
    clamped: int = field(default=0)
    flagged: int = field(default=0)

    @property
    def x_bounds(self):
        lo, hi = self.grid.x_range
        pad = 0.5 * (hi - lo) * self.margin
        return lo - pad, hi + pad

    @property
    def v_bounds(self):
        lo, hi = self.grid.v_range
        pad = 0.5 * (hi - lo) * self.margin
        return lo - pad, hi + pad

    def axis(self) -> np.ndarray:
        """Узлы оси x для вычисления замороженного поля: шаг сетки, покрывающие оболочку"""
        lo, hi = self.x_bounds
        count = int(np.ceil((hi - lo) / self.grid.hx)) + 1
        return np.linspace(lo, hi, count)

    def outside(self, x, v) -> np.ndarray:
        (xl, xh), (vl, vh) = self.x_bounds, self.v_bounds
        return (x < xl) | (x > xh) | (v < vl) | (v > vh)

    def flag(self, x, v) -> np.ndarray:
        """Маска точек вне оболочки; в них плотность считается нулевой"""
        out = self.outside(x, v)
        self.flagged += int(np.count_nonzero(out))
        return out

    def clip(self, x, v):
        return np.clip(x, *self.x_bounds), np.clip(v, *self.v_bounds)

    def clamp(self, x, v):
        out = self.outside(x, v)
        hits = int(np.count_nonzero(out))
        if hits:
            self.clamped += hits
            logger.warning(f"Характеристики вышли за расширенную оболочку: {hits} точек, всего {self.clamped}")
            x, v = self.clip(x, v)
        return x, v


def characteristics_step(x, v, frozen_field: FrozenField, sigma: float, dW: float, dt: float,
                         next_field: FrozenField = None, hull: ExtendedHull = None):
    """
    Шаг Хойна; next_field задаёт поле в конце шага (по умолчанию то же).
    Отрицательные dt и dW дают шаг назад по времени вдоль того же пути.
    """
    next_field = next_field if next_field is not None else frozen_field
    f0 = frozen_field.force(x, v)
    x_guess = x + v * dt
    v_guess = v + f0 * dt - sigma * v * dW
    f1 = next_field.force(x_guess, v_guess)
    x_next = x + 0.5 * (v + v_guess) * dt
    v_next = v + 0.5 * (f0 + f1) * dt - 0.5 * sigma * (v + v_guess) * dW
    if hull is not None:
        x_next, v_next = hull.clamp(x_next, v_next)
    return x_next, v_next


def backward_step(x, v, field_end: FrozenField, field_start: FrozenField, sigma: float, dW: float, dt: float):
    """Обратный шаг с t_{k+1} на t_k: предиктор по полю в конце интервала, корректор по полю в начале"""
    return characteristics_step(x, v, field_end, sigma, -dW, -dt, next_field=field_start)
