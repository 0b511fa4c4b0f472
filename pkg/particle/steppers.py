"""
Один шаг по времени системы частиц: Хойн (Стратонович) и Эйлер–Маруяма (Ито)
"""

import logging

import numpy as np

from core.exceptions import GridShapeError, NumericalBlowupError
from core.weights import CommWeight
from sde.integrators import ito_drift_correction

from .ensemble import ParticleEnsemble
from .forces import alignment_forces

logger = logging.getLogger(__name__)


def _increments(ens: ParticleEnsemble, dW):
    """Приращение шума в форме, пригодной для умножения на (N, d)"""
    dW = np.asarray(dW, dtype=float)
    if ens.noise_mode == 'independent':
        if dW.shape != (ens.N,):
            raise GridShapeError(f"Независимый шум требует {ens.N} приращений, получено {dW.shape}")
        return dW[:, None]
    if dW.ndim != 0:
        raise GridShapeError(f"Общий шум требует скалярного приращения, получено {dW.shape}")
    return dW if ens.noise_mode == 'common' else np.zeros(())


def _alignment_noise(v, sigma):
    return sigma * (v.mean(axis=0) - v)


def _finish(ens, x, v, t):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise NumericalBlowupError(f"Нефинитное состояние при t={t:g}")
    return ens.evolve(x, v, t)


def step_stratonovich(ens: ParticleEnsemble, w: CommWeight, sigma: float, dW, dt: float) -> ParticleEnsemble:
    """
    Шаг Хойна для dx = v dt, dv = F_a dt + σ(v̄ − v)∘dW.

    В режиме common все частицы получают одно приращение dW, в режиме
    independent dW содержит N независимых приращений.
    """
    noise = _increments(ens, dW)
    x, v = ens.x, ens.v

    f0 = alignment_forces(x, v, w)
    g0 = _alignment_noise(v, sigma)
    x_guess = x + v * dt
    v_guess = v + f0 * dt + g0 * noise

    f1 = alignment_forces(x_guess, v_guess, w)
    g1 = _alignment_noise(v_guess, sigma)
    x_next = x + 0.5 * (v + v_guess) * dt
    v_next = v + 0.5 * (f0 + f1) * dt + 0.5 * (g0 + g1) * noise
    return _finish(ens, x_next, v_next, ens.t + dt)


def step_ito(ens: ParticleEnsemble, w: CommWeight, sigma: float, dW, dt: float,
             exact_correction: bool = False) -> ParticleEnsemble:
    """
    Шаг Эйлера–Маруямы для dv = [F_a − ½σ²(v̄ − v)] dt + σ(v̄ − v) dW.

    exact_correction учитывает вклад ∂v̄/∂v_i: при общем шуме он сокращается,
    при независимом поправка умножается на (1 − 1/N).
    """
    noise = _increments(ens, dW)
    x, v = ens.x, ens.v
    vbar = v.mean(axis=0)

    correction = ito_drift_correction(sigma if ens.noise_mode != 'none' else 0.0)(v, vbar)
    if exact_correction and ens.noise_mode == 'independent':
        correction = correction * (1.0 - 1.0 / ens.N)

    drift = alignment_forces(x, v, w) + correction
    v_next = v + drift * dt + _alignment_noise(v, sigma) * noise
    x_next = x + v * dt
    return _finish(ens, x_next, v_next, ens.t + dt)
