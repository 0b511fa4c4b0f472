"""
Интеграторы СДУ с одним скалярным шумом: Эйлер–Маруяма (Ито) и Хойн (Стратонович)
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import pandas as pd

from core.exceptions import LabConfigError, NumericalBlowupError
from core.paths import WienerPath, wiener_refine

from .oracles import Coefficient, Trajectory, affine_spec_on, gbm_affine_closed_form, sample_coefficient

logger = logging.getLogger(__name__)

StateFunction = Callable[[np.ndarray, float], np.ndarray]


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise NumericalBlowupError("Нефинитное состояние интегратора", step=step)


def integrate_ito(drift: StateFunction, diffusion: StateFunction, x0, path: WienerPath) -> Trajectory:
    """X_{k+1} = X_k + drift·dt + diffusion·ΔW_k"""
    t = path.t_grid
    x = np.asarray(x0, dtype=float)
    states = np.empty((path.K + 1,) + x.shape)
    states[0] = x
    for k, dW in enumerate(path.increments):
        dt = t[k + 1] - t[k]
        x = x + drift(x, t[k]) * dt + diffusion(x, t[k]) * dW
        _check_finite(x, k + 1)
        states[k + 1] = x
    return Trajectory(t_grid=t, states=states, path_seed=path.seed)


def integrate_stratonovich(drift: StateFunction, diffusion: StateFunction, x0, path: WienerPath) -> Trajectory:
    """Схема Хойна: предиктор Эйлера, корректор усредняет коэффициенты на концах шага"""
    t = path.t_grid
    x = np.asarray(x0, dtype=float)
    states = np.empty((path.K + 1,) + x.shape)
    states[0] = x
    for k, dW in enumerate(path.increments):
        dt = t[k + 1] - t[k]
        f0, g0 = drift(x, t[k]), diffusion(x, t[k])
        guess = x + f0 * dt + g0 * dW
        f1, g1 = drift(guess, t[k + 1]), diffusion(guess, t[k + 1])
        x = x + 0.5 * (f0 + f1) * dt + 0.5 * (g0 + g1) * dW
        _check_finite(x, k + 1)
        states[k + 1] = x
    return Trajectory(t_grid=t, states=states, path_seed=path.seed)


def ito_drift_correction(sigma: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """
    Поправка сноса −½σ²(v̄ − v), переводящая стратоновичеву систему
    с общим шумом в форму Ито.
    """
    if sigma < 0:
        raise LabConfigError(f"sigma должна быть неотрицательной, получено {sigma}")
    half = 0.5 * sigma * sigma

    def correction(v, vbar):
        return -half * (np.asarray(vbar) - np.asarray(v))

    return correction


@dataclass(frozen=True)
class AffineCoefficients:
    """Аффинная задача dX = (a_t + b_t X) dt + c X dW для исследования сходимости"""
    x0: float
    a: Coefficient
    b: Coefficient
    c: float

    def ito_drift(self, x, t):
        t = np.asarray(t, dtype=float)
        return sample_coefficient(self.a, t) + sample_coefficient(self.b, t) * x

    def stratonovich_drift(self, x, t):
        return self.ito_drift(x, t) - 0.5 * self.c ** 2 * x

    def diffusion(self, x, t):
        return self.c * x


def default_convergence_problem() -> AffineCoefficients:
    """
    Задача с доминирующей ошибкой сноса: гладкая быстро меняющаяся вынуждающая сила, малый шум.

    При c = 0.01 сильная ошибка Эйлера–Маруямы определяется сносом и имеет
    первый порядок: при dt/2 ошибка делится пополам.
    Вклад шума c²X(ΔW² − dt) остаётся ниже ошибки сноса на шагах 2^-8…2^-10.
    При c порядка 0.2–0.5 он доминирует, порядок падает до ½ и отношение
    ошибок стремится к 1/√2.
    """
    return AffineCoefficients(
        x0=1.0,
        a=lambda t: 1.0 + 2.0 * np.sin(6.0 * np.pi * t),
        b=-1.0,
        c=0.01,
    )


SCHEMES = ('ito', 'stratonovich')


def strong_convergence_study(
    problem: AffineCoefficients,
    paths: Iterable[WienerPath],
    dts: Sequence[float],
    scheme: str = 'ito',
    oracle_factor: int = 32,
) -> pd.DataFrame:
    """
    Максимальная по сетке ошибка интегратора относительно явного решения.

    Каждый путь измельчается мостом до шага min(dts)/oracle_factor; оракул
    считается на мелкой сетке и сравнивается в узлах грубых сеток,
    полученных прореживанием того же пути.
    """
    if scheme not in SCHEMES:
        raise LabConfigError(f"Неизвестная схема '{scheme}', доступны: {', '.join(SCHEMES)}")
    dts = sorted(dts, reverse=True)
    rows = []
    for index, path in enumerate(paths):
        factor = int(round(path.dt / min(dts))) * oracle_factor
        fine = wiener_refine(path, factor) if factor >= 2 else path
        oracle = gbm_affine_closed_form(
            affine_spec_on(fine, problem.x0, problem.a, problem.b, problem.c), fine
        ).states
        for dt in dts:
            stride = int(round(dt / fine.dt))
            coarse = fine.coarsen(stride)
            if scheme == 'ito':
                traj = integrate_ito(problem.ito_drift, problem.diffusion, problem.x0, coarse)
            else:
                traj = integrate_stratonovich(problem.stratonovich_drift, problem.diffusion, problem.x0, coarse)
            error = float(np.max(np.abs(traj.states - oracle[::stride])))
            rows.append({'path': index, 'seed': path.seed, 'dt': coarse.dt, 'max_error': error})

    table = pd.DataFrame(rows, columns=['path', 'seed', 'dt', 'max_error'])
    logger.info(
        f"Исследование сходимости ({scheme}): {table['path'].nunique() if len(table) else 0} путей, "
        f"шаги {', '.join(f'{dt:g}' for dt in dts)}"
    )
    return table


def convergence_summary(table: pd.DataFrame) -> pd.DataFrame:
    """Для каждой пары соседних шагов: доля путей с уменьшением ошибки и медианное отношение ошибок"""
    wide = table.pivot(index='path', columns='dt', values='max_error')
    dts = sorted(wide.columns, reverse=True)
    rows = []
    for coarse_dt, fine_dt in zip(dts[:-1], dts[1:]):
        ratio = wide[fine_dt] / wide[coarse_dt]
        rows.append({
            'dt_coarse': coarse_dt,
            'dt_fine': fine_dt,
            'fraction_decreasing': float((ratio < 1.0).mean()),
            'median_ratio': float(ratio.median()),
            'mean_error_fine': float(wide[fine_dt].mean()),
        })
    return pd.DataFrame(rows)


def observed_order(table: pd.DataFrame) -> float:
    """Наклон log(средней ошибки) по log(dt)"""
    means = table.groupby('dt')['max_error'].mean()
    slope = np.polyfit(np.log(means.index.values), np.log(means.values), 1)[0]
    return float(slope) if math.isfinite(slope) else float('nan')
