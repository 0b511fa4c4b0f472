"""
Нелокальное поле выравнивания F_a[f](x, v) = A(x) − v·B(x) для d = 1:
A(x) = ∫∫ φ̄(|x*−x|) v* f dv* dx*,  B(x) = ∫∫ φ̄(|x*−x|) f dv* dx*
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.exceptions import OutOfGridError
from core.weights import CommWeight

from .grid import KineticState

logger = logging.getLogger(__name__)


def _marginals(state: KineticState):
    """Плотность ρ(x*) и поток j(x*) с весами квадратуры по x"""
    grid = state.grid
    rho = state.f @ grid.v_weights
    flux = state.f @ (grid.v_weights * grid.v_nodes)
    return grid.x_weights * rho, grid.x_weights * flux


def _coefficients(state: KineticState, w: CommWeight, x):
    x = np.asarray(x, dtype=float)
    rho_w, flux_w = _marginals(state)
    if w.is_constant:
        A = np.full_like(x, w.phi_M * flux_w.sum())
        B = np.full_like(x, w.phi_M * rho_w.sum())
        return A, B
    kernel = w(np.abs(x[..., None] - state.grid.x_nodes))
    return kernel @ flux_w, kernel @ rho_w


def _check_inside(state, x, v=None):
    grid = state.grid
    x = np.asarray(x, dtype=float)
    inside = (x >= grid.x_range[0] - 1e-12) & (x <= grid.x_range[1] + 1e-12)
    if v is not None:
        v = np.asarray(v, dtype=float)
        inside &= (v >= grid.v_range[0] - 1e-12) & (v <= grid.v_range[1] + 1e-12)
    if not np.all(inside):
        raise OutOfGridError(f"Точка запроса вне сетки {grid.x_range}×{grid.v_range}")


def field_Fa(state: KineticState, w: CommWeight, x, v):
    """Квадратура трапеций ∫∫ φ̄(|x*−x|)(v* − v) f dv* dx*"""
    _check_inside(state, x, v)
    A, B = _coefficients(state, w, x)
    out = A - np.asarray(v, dtype=float) * B
    return float(out) if np.ndim(out) == 0 else out


def div_v_Fa(state: KineticState, w: CommWeight, x):
    """∇_v·F_a = −∫∫ φ̄(|x*−x|) f dv* dx*"""
    _check_inside(state, x)
    _, B = _coefficients(state, w, x)
    out = -B
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class FrozenField:
    """
    Поле F_a, замороженное на одной плотности: коэффициенты A, B в узлах
    расширенной оси x, между узлами линейная интерполяция.
    """
    x_eval: np.ndarray
    A: np.ndarray
    B: np.ndarray

    @classmethod
    def from_state(cls, state: KineticState, w: CommWeight, x_eval: np.ndarray) -> 'FrozenField':
        A, B = _coefficients(state, w, x_eval)
        return cls(x_eval=x_eval, A=A, B=B)

    @classmethod
    def constant(cls, a: float, b: float, x_eval: np.ndarray) -> 'FrozenField':
        return cls(x_eval=x_eval, A=np.full_like(x_eval, a), B=np.full_like(x_eval, b))

    def coefficients(self, x):
        return np.interp(x, self.x_eval, self.A), np.interp(x, self.x_eval, self.B)

    def force(self, x, v):
        A, B = self.coefficients(x)
        return A - v * B

    def divergence(self, x):
        return -np.interp(x, self.x_eval, self.B)
