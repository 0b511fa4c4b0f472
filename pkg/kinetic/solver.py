"""
Кинетический решатель вдоль общего винеровского пути (d = 1).

Два режима:
- fixed-point: последовательные приближения f^n, каждое по формуле представления
  через обратные стохастические характеристики в поле F_a[f^{n−1}];
- semi-lagrangian: пошаговая схема с полем, замороженным в текущий момент.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from core.config import replica_seed
from core.exceptions import GridShapeError, LabConfigError, NumericalBlowupError
from core.paths import WienerPath, wiener_sample
from core.weights import CommWeight
from observables.bounds import BoundCheck
from observables.moments import moments, supports
from observables.statistics import mc_expectation

from .characteristics import ExtendedHull, backward_step
from .fields import FrozenField
from .grid import (
    KineticState, KineticTrajectory, PhaseGrid, datum_radius, moment_bound, support_envelopes, validate_grid,
)

logger = logging.getLogger(__name__)

MODES = ('fixed-point', 'semi-lagrangian')

# зазоры итераций ниже этой доли ‖f‖∞ считаются шумом округления
NOISE_FLOOR = 1e-13


def _interpolator(state: KineticState) -> RegularGridInterpolator:
    grid = state.grid
    return RegularGridInterpolator(
        (grid.x_nodes, grid.v_nodes), state.f, method='linear', bounds_error=False, fill_value=0.0,
    )


def _bump_stencil(grid: PhaseGrid, eps: float) -> np.ndarray:
    """Дискретная шапочка exp(−1/(1−r²)) радиуса eps, сумма весов 1"""
    i = np.arange(-int(eps // grid.hx), int(eps // grid.hx) + 1) * grid.hx / eps
    j = np.arange(-int(eps // grid.hv), int(eps // grid.hv) + 1) * grid.hv / eps
    r2 = i[:, None] ** 2 + j[None, :] ** 2
    kernel = np.zeros_like(r2)
    inside = r2 < 1.0
    kernel[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return kernel / kernel.sum()


def mollify_initial(f_raw: KineticState, eps: float) -> KineticState:
    """
    Свёртка с шапочкой радиуса eps, нормировка массы к 1 и сдвиг средней скорости в 0.
    Носитель растёт не больше чем на eps с каждой стороны.
    """
    if not eps > 0:
        raise LabConfigError(f"Радиус сглаживания должен быть положительным, получено {eps}")
    grid = f_raw.grid
    supp_x, supp_v = supports(f_raw)
    inner_x, inner_v = grid.inner_radius()
    if supp_x + eps > inner_x or supp_v + eps > inner_v:
        raise LabConfigError(
            f"Сглаженный носитель ({supp_x + eps:.3g}, {supp_v + eps:.3g}) выходит за сетку ({inner_x:.3g}, {inner_v:.3g})"
        )

    f = ndimage.convolve(f_raw.f, _bump_stencil(grid, eps), mode='constant', cval=0.0)
    f = f / grid.integrate(f)
    m1 = grid.integrate(grid.v_nodes[None, :] * f)
    if abs(m1) > 1e-14:
        f = ndimage.shift(f, (0.0, -m1 / grid.hv), order=1, mode='constant', cval=0.0)
        f = np.maximum(f, 0.0) / grid.integrate(np.maximum(f, 0.0))
        logger.debug(f"Средняя скорость {m1:.3e} сдвинута в 0")
    return f_raw.with_density(f)


def static_trajectory(f_in: KineticState, path: WienerPath) -> KineticTrajectory:
    """Нулевое приближение: f^0(t) = f^in во всех узлах пути"""
    return KineticTrajectory(
        times=path.t_grid.copy(),
        states=[f_in.with_density(f_in.f, t=t) for t in path.t_grid],
        path=path,
    )


@dataclass(frozen=True, eq=False)
class Pullback:
    """Итерация f^n и основания обратных характеристик для каждого момента и узла"""
    trajectory: KineticTrajectory
    feet_x: np.ndarray
    feet_v: np.ndarray
    flagged: int


def successive_step(f_prev: KineticTrajectory, f_in: KineticState, w: CommWeight, sigma: float,
                    path: WienerPath, hull: Optional[ExtendedHull] = None) -> Pullback:
    """
    f^n(t_m, x, v) = f^in(X_0, V_0)·exp(∫_0^{t_m} B[f^{n−1}](X_s) ds + σW_{t_m}),
    где (X_s, V_s) идёт назад от (t_m, x, v) обращённым шагом Хойна по тому же пути.

    Все моменты t_m обрабатываются одновременно: на шаге k назад сдвигаются строки m > k.
    """
    if len(f_prev.states) != path.K + 1:
        raise GridShapeError(f"Предыдущая итерация задана в {len(f_prev.states)} моментах, путь в {path.K + 1}")
    grid = f_in.grid
    hull = hull if hull is not None else ExtendedHull(grid)
    axis = hull.axis()
    fields = [FrozenField.from_state(state, w, axis) for state in f_prev.states]

    X0, V0 = grid.mesh()
    K = path.K
    X = np.tile(X0.ravel(), (K + 1, 1))
    V = np.tile(V0.ravel(), (K + 1, 1))
    S = np.zeros_like(X)
    outside = np.zeros(X.shape, dtype=bool)
    flagged_before = hull.flagged

    for k in range(K - 1, -1, -1):
        rows = slice(k + 1, K + 1)
        dt = path.t_grid[k + 1] - path.t_grid[k]
        dW = path.values[k + 1] - path.values[k]
        b_end = fields[k + 1].coefficients(X[rows])[1]
        x_new, v_new = backward_step(X[rows], V[rows], fields[k + 1], fields[k], sigma, dW, dt)
        outside[rows] |= hull.flag(x_new, v_new)
        x_new, v_new = hull.clip(x_new, v_new)
        S[rows] += 0.5 * (b_end + fields[k].coefficients(x_new)[1]) * dt
        X[rows], V[rows] = x_new, v_new

    pulled = _interpolator(f_in)(np.stack([X, V], axis=-1))
    values = np.where(outside, 0.0, pulled * np.exp(S + sigma * path.values[:, None]))
    if not np.all(np.isfinite(values)):
        raise NumericalBlowupError("Нефинитная плотность в формуле представления")
    values[0] = f_in.f.ravel()

    flagged = hull.flagged - flagged_before
    if flagged:
        logger.warning(f"Обратные характеристики покинули оболочку в {flagged} случаях, значения обнулены")
    states = [
        KineticState(grid=grid, f=values[m].reshape(grid.shape), t=float(path.t_grid[m])) for m in range(K + 1)
    ]
    return Pullback(
        trajectory=KineticTrajectory(times=path.t_grid.copy(), states=states, path=path),
        feet_x=X, feet_v=V, flagged=flagged,
    )


@dataclass
class IterationDiagnostics:
    """
    Зазоры последовательных приближений: gaps[n−1] = max_t ‖f^n − f^{n−1}‖∞,
    flow_gaps[n−1] = max_t ‖φ^n − φ^{n−1}‖∞ по основаниям характеристик (φ^0 тождественно).
    """
    tol: float
    T: float
    sup_in: float
    gaps: List[float] = field(default_factory=list)
    flow_gaps: List[float] = field(default_factory=list)
    m2: List[np.ndarray] = field(default_factory=list)
    converged: bool = False
    converged_at: Optional[int] = None
    flagged: int = 0

    @property
    def iterations(self) -> int:
        return len(self.gaps)

    def ratios(self) -> np.ndarray:
        gaps = np.asarray(self.gaps, dtype=float)
        if gaps.size < 2:
            return np.zeros(0)
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(gaps[:-1] > 0, gaps[1:] / gaps[:-1], 0.0)

    def contraction_constants(self) -> np.ndarray:
        """K̂_n = Δ_{n+1}·(n+1) / (T·Δ_n); при факториальном сжатии ряд ограничен"""
        ratios = self.ratios()
        n = np.arange(1, ratios.size + 1)
        return ratios * (n + 1) / self.T if self.T > 0 else np.zeros_like(ratios)

    def factorial_signature(self, first: int = 1, last: int = 5, slack: float = 0.1) -> BoundCheck:
        """Отношения Δ_{n+1}/Δ_n не растут по n (с допуском slack), зазоры у шума округления не учитываются"""
        floor = NOISE_FLOOR * self.sup_in
        gaps = np.asarray(self.gaps, dtype=float)
        usable = []
        for n in range(first, last + 1):
            if n < gaps.size and gaps[n - 1] > floor and gaps[n] > floor:
                usable.append((n, gaps[n] / gaps[n - 1]))
        worst, worst_n = 0.0, 0
        for (n, r), (_, r_next) in zip(usable, usable[1:]):
            excess = r_next / r - (1.0 + slack)
            if excess > worst:
                worst, worst_n = excess, n + 1
        constants = self.contraction_constants()
        return BoundCheck(
            passed=len(usable) >= 2 and worst <= 0.0,
            max_violation=float(worst),
            worst_time=float(worst_n),
            details={
                'usable_ratios': float(len(usable)),
                'k_hat_max': float(constants.max()) if constants.size else 0.0,
                'k_hat_min': float(constants.min()) if constants.size else 0.0,
            },
        )

    def to_frame(self) -> pd.DataFrame:
        n = np.arange(1, self.iterations + 1)
        ratio = np.append(self.ratios(), np.nan) if self.iterations else np.zeros(0)
        return pd.DataFrame({'n': n, 'gap': self.gaps, 'flow_gap': self.flow_gaps, 'ratio': ratio})

    def export_csv(self, filename) -> None:
        self.to_frame().to_csv(filename, index=False, float_format='%.17g')


def _prevalidate(f_in: KineticState, w: CommWeight, sigma: float, path: WienerPath) -> None:
    m2_0 = moments(f_in)[2]
    validate_grid(f_in.grid, path, datum_radius(f_in), m2_0, w.phi_M, sigma)


def solve_fixed_point(f_in: KineticState, w: CommWeight, sigma: float, path: WienerPath, tol: float,
                      max_iter: int = 20, hull: Optional[ExtendedHull] = None, validate: bool = True):
    """
    Последовательные приближения от f^0 = f^in до max_t ‖f^n − f^{n−1}‖∞ < tol.

    Возвращает (траектория, диагностика). Без сходимости возвращается итерация
    с наименьшим зазором и converged = False.
    """
    if not tol > 0:
        raise LabConfigError(f"tol должен быть положительным, получено {tol}")
    if max_iter < 1:
        raise LabConfigError(f"max_iter должен быть не меньше 1, получено {max_iter}")
    if validate:
        _prevalidate(f_in, w, sigma, path)
    hull = hull if hull is not None else ExtendedHull(f_in.grid)

    X0, V0 = f_in.grid.mesh()
    prev = static_trajectory(f_in, path)
    prev_stack = prev.stack()
    prev_feet = (np.tile(X0.ravel(), (path.K + 1, 1)), np.tile(V0.ravel(), (path.K + 1, 1)))
    diagnostics = IterationDiagnostics(tol=tol, T=path.T, sup_in=f_in.sup_norm)
    best_gap, best = math.inf, prev

    logger.info(f"Последовательные приближения: сетка {f_in.grid.nx}×{f_in.grid.nv}, {path.K} шагов, tol={tol:g}")
    for n in range(1, max_iter + 1):
        pull = successive_step(prev, f_in, w, sigma, path, hull)
        stack = pull.trajectory.stack()
        gap = float(np.max(np.abs(stack - prev_stack)))
        flow_gap = float(max(np.max(np.abs(pull.feet_x - prev_feet[0])), np.max(np.abs(pull.feet_v - prev_feet[1]))))
        diagnostics.gaps.append(gap)
        diagnostics.flow_gaps.append(flow_gap)
        diagnostics.m2.append(pull.trajectory.series.m2)
        diagnostics.flagged += pull.flagged
        logger.debug(f"Итерация {n}: Δ={gap:.3e}, зазор потоков {flow_gap:.3e}")

        if gap <= best_gap:
            best_gap, best = gap, pull.trajectory
        prev, prev_stack, prev_feet = pull.trajectory, stack, (pull.feet_x, pull.feet_v)
        if gap < tol:
            diagnostics.converged = True
            diagnostics.converged_at = n - 1
            logger.info(f"Сходимость за {n - 1} итераций (Δ_{n}={gap:.3e})")
            return pull.trajectory, diagnostics

    logger.warning(f"Нет сходимости за {max_iter} итераций: наименьший зазор {best_gap:.3e} > tol={tol:g}")
    return best, diagnostics


def semi_lagrangian_evolve(state: KineticState, w: CommWeight, sigma: float, path: WienerPath, dt: float,
                           hull: Optional[ExtendedHull] = None) -> KineticState:
    """Один шаг: обратная характеристика в поле текущего момента и множитель exp(∫B dt + σΔW)"""
    grid = state.grid
    hull = hull if hull is not None else ExtendedHull(grid)
    dW = float(path.at(state.t + dt) - path.at(state.t))
    frozen = FrozenField.from_state(state, w, hull.axis())
    X, V = grid.mesh()
    x_foot, v_foot = backward_step(X, V, frozen, frozen, sigma, dW, dt)
    outside = hull.flag(x_foot, v_foot)
    x_foot, v_foot = hull.clip(x_foot, v_foot)
    pulled = _interpolator(state)(np.stack([x_foot, v_foot], axis=-1))
    rate = 0.5 * (frozen.coefficients(X)[1] + frozen.coefficients(x_foot)[1])
    f = np.where(outside, 0.0, pulled * np.exp(rate * dt + sigma * dW))
    if not np.all(np.isfinite(f)):
        raise NumericalBlowupError("Нефинитная плотность в полулагранжевом шаге")
    return state.with_density(f, t=state.t + dt)


def evolve_semi_lagrangian(f_in: KineticState, w: CommWeight, sigma: float, path: WienerPath,
                           hull: Optional[ExtendedHull] = None, validate: bool = True) -> KineticTrajectory:
    """Полная траектория пошагового режима во всех узлах пути"""
    if validate:
        _prevalidate(f_in, w, sigma, path)
    hull = hull if hull is not None else ExtendedHull(f_in.grid)
    state = f_in.with_density(f_in.f, t=path.t_grid[0])
    states = [state]
    for k in range(path.K):
        dt = path.t_grid[k + 1] - path.t_grid[k]
        try:
            state = semi_lagrangian_evolve(state, w, sigma, path, dt, hull)
        except NumericalBlowupError as e:
            raise NumericalBlowupError(str(e), step=k + 1) from e
        state = state.with_density(state.f, t=path.t_grid[k + 1])
        states.append(state)
    if hull.flagged:
        logger.warning(f"Полулагранжева схема: {hull.flagged} оснований вне оболочки")
    return KineticTrajectory(times=path.t_grid.copy(), states=states, path=path)


def solve(f_in: KineticState, w: CommWeight, sigma: float, path: WienerPath, mode: str = 'fixed-point',
          tol: float = 1e-6, max_iter: int = 20, validate: bool = True):
    """Точка входа для экспериментов: (траектория, диагностика или None)"""
    if mode == 'fixed-point':
        return solve_fixed_point(f_in, w, sigma, path, tol * f_in.sup_norm, max_iter, validate=validate)
    if mode == 'semi-lagrangian':
        return evolve_semi_lagrangian(f_in, w, sigma, path, validate=validate), None
    raise LabConfigError(f"Неизвестный режим '{mode}', доступны: {', '.join(MODES)}")


def sup_gap(a: KineticTrajectory, b: KineticTrajectory) -> float:
    """max_t ‖f_a − f_b‖∞ по общим моментам"""
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise GridShapeError("Траектории заданы на разных сетках времени")
    return float(np.max(np.abs(a.stack() - b.stack())))


def iterate_moment_check(diagnostics: IterationDiagnostics, path: WienerPath, m2_0: float, phi_M: float,
                         sigma: float) -> BoundCheck:
    """M2 каждой итерации не выше (γ + K_t)·exp((γ + φ_M)t − 2σW_t)"""
    bound = moment_bound(path, m2_0, phi_M, sigma)
    worst, worst_time = 0.0, 0.0
    for m2 in diagnostics.m2:
        excess = m2 / bound - 1.0
        k = int(np.argmax(excess))
        if excess[k] > worst:
            worst, worst_time = float(excess[k]), float(path.t_grid[k])
    return BoundCheck(passed=worst <= 0.0, max_violation=worst, worst_time=worst_time,
                      details={'iterates': float(len(diagnostics.m2))})


def pathwise_supnorm_check(trajectory: KineticTrajectory, phi_M: float, sigma: float, slack: float = 0.05) -> BoundCheck:
    """‖f_t‖∞ <= ‖f^in‖∞·exp(φ_M t + σW_t)·(1 + slack)"""
    path = trajectory.path
    norms = trajectory.sup_norms()
    bound = norms[0] * np.exp(phi_M * trajectory.times + sigma * path.values) * (1.0 + slack)
    excess = norms / bound - 1.0
    k = int(np.argmax(excess))
    return BoundCheck(passed=bool(np.all(excess <= 0)), max_violation=float(max(excess[k], 0.0)),
                      worst_time=float(trajectory.times[k]))


def support_envelope_check(trajectory: KineticTrajectory, radius: float, phi_M: float, sigma: float,
                           slack: float = 0.05) -> BoundCheck:
    """
    Носители X(t), V(t) внутри огибающих (X∞, V∞)·(1 + slack).

    Носитель на сетке определяется по узлам, поэтому допускается запас в одну ячейку.
    """
    series = trajectory.series
    x_env, v_env = support_envelopes(trajectory.path, radius, float(series.m2[0]), phi_M, sigma)
    grid = trajectory.final.grid
    cell = max(grid.hx, grid.hv)
    x_excess = (series.supp_x - cell) / ((1.0 + slack) * x_env) - 1.0
    v_excess = (series.supp_v - cell) / ((1.0 + slack) * v_env) - 1.0
    excess = np.maximum(x_excess, v_excess)
    k = int(np.argmax(excess))
    return BoundCheck(
        passed=bool(np.all(excess <= 0)),
        max_violation=float(max(excess[k], 0.0)),
        worst_time=float(trajectory.times[k]),
        details={'x_excess': float(np.max(x_excess)), 'v_excess': float(np.max(v_excess)), 'cell': cell},
    )


def expected_supnorm_check(f_in: KineticState, w: CommWeight, sigma: float, T: float, dt: float, paths: int,
                           seed: int, mode: str = 'semi-lagrangian', tol: float = 1e-6,
                           max_iter: int = 20) -> BoundCheck:
    """
    E‖f_t‖∞ <= ‖f^in‖∞·exp((φ_M + σ²/2)t) по нескольким путям:
    нижняя граница 95% интервала среднего не выше оценки с допуском 10·dt.
    """
    if paths < 2:
        raise LabConfigError("Для среднего по путям нужно хотя бы 2 пути")
    norms = []
    for k in range(paths):
        path = wiener_sample(replica_seed(seed, k), T, dt)
        trajectory, _ = solve(f_in, w, sigma, path, mode=mode, tol=tol, max_iter=max_iter, validate=False)
        norms.append(trajectory.sup_norms())
    norms = np.array(norms)
    t = path.t_grid
    estimates = [mc_expectation(norms[:, m]) for m in range(norms.shape[1])]
    mean = np.array([e[0] for e in estimates])
    ci = np.array([e[1] for e in estimates])
    bound = f_in.sup_norm * np.exp((w.phi_M + 0.5 * sigma ** 2) * t) * (1.0 + 10.0 * dt)
    excess = (mean - ci) / bound - 1.0
    m = int(np.argmax(excess))
    logger.info(f"Средняя sup-норма по {paths} путям: при t=T {mean[-1]:.4g} ± {ci[-1]:.2g}, оценка {bound[-1]:.4g}")
    return BoundCheck(passed=bool(np.all(excess <= 0)), max_violation=float(max(excess[m], 0.0)),
                      worst_time=float(t[m]), details={'mean_T': float(mean[-1]), 'bound_T': float(bound[-1])})
