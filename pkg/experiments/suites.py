"""
Именованные эксперименты лаборатории.

Каждый набор получает ExperimentContext, пишет таблицы и графики через
сервис экспорта и регистрирует встроенные проверки; код выхода зависит
только от этих проверок.
"""

import logging
import math
from typing import Callable, Dict

import numpy as np
import pandas as pd

from core.config import replica_seed, rng_for
from core.exceptions import LabConfigError
from core.paths import wiener_sample
from core.weights import constant_weight, rational_weight
from kinetic.grid import PhaseGrid, datum_radius, indicator_density
from kinetic.solver import (
    MODES, evolve_semi_lagrangian, expected_supnorm_check, iterate_moment_check, mollify_initial,
    pathwise_supnorm_check, solve, solve_fixed_point, sup_gap, support_envelope_check,
)
from meanfield.experiments import chaos_trend, linear_response, perturb, stability_experiment
from meanfield.wasserstein import BRUTE_FORCE_LIMIT, brute_force_wasserstein2, wasserstein2
from observables.bounds import (
    dissipation_bound_check, expectation_band_check, exponential_martingale_check, growth_bound_check,
    pathwise_bound_check, velocity_support_check,
)
from observables.moments import moments
from observables.statistics import bootstrap_rate, mc_expectation, mean_series
from particle.engine import initial_for, path_for, run, run_replicas, run_wong_zakai
from particle.ensemble import ParticleEnsemble, sample_from_density
from sde.integrators import (
    SCHEMES as SDE_SCHEMES, convergence_summary, default_convergence_problem, observed_order,
    strong_convergence_study,
)
from sde.oracles import affine_spec_on, comparison_check, gbm_affine_closed_form

from .context import ExperimentContext

logger = logging.getLogger(__name__)

ORACLE_DTS = (2.0 ** -8, 2.0 ** -9, 2.0 ** -10)
DEFAULT_EPS_LIST = (0.2, 0.1, 0.05)
DEFAULT_ITO_N_LIST = (4, 16, 64)
DEFAULT_CHAOS_N_LIST = (32, 128, 512, 2048)
FIXED_POINT_LIMIT = 8
SIGNATURE_ITERATIONS = 6
ENVELOPE_SLACK = 0.05


# --- вспомогательные функции ---

def _pair_ensemble() -> ParticleEnsemble:
    """Симметричная пара d = 1: x = (−0.5, 0.5), v = (1, −1)"""
    return ParticleEnsemble(x=np.array([[-0.5], [0.5]]), v=np.array([[1.0], [-1.0]]))


def _pair_config(config):
    phi0 = config.weight.phi_M
    return config.replace(N=2, d=1, weight=constant_weight(phi0), noise_mode='common', snapshot_every=1), phi0


def _terminal_distance(a: ParticleEnsemble, b: ParticleEnsemble) -> float:
    return float(max(np.max(np.abs(a.x - b.x)), np.max(np.abs(a.v - b.v))))


def _terminal_only(config, path):
    return config.replace(snapshot_every=max(path.K, 1))


def _kinetic_datum(ctx: ExperimentContext):
    if ctx.config.d != 1:
        raise LabConfigError(f"Кинетический решатель работает только при d = 1, получено d={ctx.config.d}")
    nx = int(ctx.option('nx', 64))
    nv = int(ctx.option('nv', nx))
    x_range = tuple(ctx.option('x_range', (-3.0, 3.0)))
    v_range = tuple(ctx.option('v_range', (-3.0, 3.0)))
    grid = PhaseGrid(x_range, v_range, nx, nv)
    raw = indicator_density(grid, float(ctx.option('x_half', 0.5)), float(ctx.option('v_half', 0.5)))
    datum = mollify_initial(raw, float(ctx.option('mollify_eps', 0.3)))
    ctx.record('kinetic.grid', f'{nx}x{nv} {x_range}x{v_range}')
    return datum


def _kinetic_mode(ctx: ExperimentContext) -> str:
    mode = ctx.option('mode', 'fixed-point')
    if mode not in MODES:
        raise LabConfigError(f"Неизвестный режим '{mode}', доступны: {', '.join(MODES)}")
    return mode


def _kinetic_invariants(ctx: ExperimentContext, trajectory, datum, prefix: str = 'kinetic') -> None:
    """Масса, импульс, положительность, огибающие носителя и рост sup-нормы"""
    config = ctx.config
    series = trajectory.series
    m2_0 = float(series.m2[0])
    mass_drift = float(np.max(np.abs(series.m0 - 1.0)))
    ctx.add_check(f'{prefix}-mass', mass_drift <= 0.01, max_drift=mass_drift)
    momentum = float(np.max(np.abs(series.m1)))
    ctx.add_check(f'{prefix}-momentum', momentum <= 0.01 * math.sqrt(m2_0), max_abs_m1=momentum,
                  limit=0.01 * math.sqrt(m2_0))
    minimum = float(min(np.min(state.f) for state in trajectory.states))
    ctx.add_check(f'{prefix}-positivity', minimum >= 0.0, min_f=minimum)

    ctx.add_bound(f'{prefix}-support-envelopes', support_envelope_check(
        trajectory, datum_radius(datum), config.weight.phi_M, config.sigma, slack=ENVELOPE_SLACK))
    ctx.add_bound(f'{prefix}-supnorm-pathwise', pathwise_supnorm_check(trajectory, config.weight.phi_M, config.sigma))


# --- наборы ---

def oracle_suite(ctx: ExperimentContext) -> None:
    """Явное решение аффинного уравнения, сходимость интеграторов и принцип сравнения"""
    config = ctx.config
    count = int(ctx.option('paths', 100))
    paths = [wiener_sample(replica_seed(config.seed, k), 1.0, ORACLE_DTS[0]) for k in range(count)]
    c = config.sigma if config.sigma > 0 else 0.5

    # геометрическое броуновское движение: сравнение с прямой формулой
    path = paths[0]
    mu, x0 = 0.3, 2.0
    gbm = gbm_affine_closed_form(affine_spec_on(path, x0, 0.0, mu, c), path)
    direct = x0 * np.exp((mu - 0.5 * c * c) * path.t_grid + c * path.values)
    gbm_error = float(np.max(np.abs(gbm.states - direct) / direct))
    ctx.add_check('closed-form-gbm', gbm_error <= 1e-12, max_rel_error=gbm_error)

    forcing = gbm_affine_closed_form(affine_spec_on(path, x0, 1.0, 0.0, 0.0), path)
    forcing_error = float(np.max(np.abs(forcing.states - (x0 + path.t_grid))))
    ctx.add_check('closed-form-forcing', forcing_error <= path.dt ** 2 * path.T, max_error=forcing_error)

    problem = default_convergence_problem()
    frames = []
    for scheme in SDE_SCHEMES:
        table = strong_convergence_study(problem, paths, ORACLE_DTS, scheme)
        summary = convergence_summary(table)
        fraction = float(summary['fraction_decreasing'].min())
        ctx.add_check(f'strong-convergence-{scheme}', fraction >= 0.9, fraction_decreasing=fraction,
                      observed_order=observed_order(table))
        if scheme == 'ito':
            ratios = summary['median_ratio']
            ctx.add_check('euler-maruyama-halving', bool(ratios.between(0.35, 0.65).all()),
                          median_ratio_min=float(ratios.min()), median_ratio_max=float(ratios.max()))
        table.insert(0, 'scheme', scheme)
        frames.append(table)
    convergence = pd.concat(frames, ignore_index=True)
    ctx.export.export_table(convergence, 'convergence.csv')
    means = convergence.groupby(['scheme', 'dt'])['max_error'].mean().unstack(0).sort_index()
    ctx.export.plot_lines(
        'convergence.svg', means.index.values,
        [{'y': means[scheme].values, 'label': scheme} for scheme in means.columns],
        'dt', 'mean max error', title='Strong convergence', logy=True,
    )

    # принцип сравнения: X из (a − 0.5, b, c) не выше Y из (a, b, c)
    forcing_term = lambda t: 1.0 + 0.5 * np.sin(2.0 * np.pi * t)
    lowered = lambda t: forcing_term(t) - 0.5
    raised = lambda t: forcing_term(t) + 0.5
    held, detected, first_bad = 0, 0, []
    for path in paths:
        y = gbm_affine_closed_form(affine_spec_on(path, 1.0, forcing_term, -0.5, c), path)
        x_low = gbm_affine_closed_form(affine_spec_on(path, 1.0, lowered, -0.5, c), path)
        x_high = gbm_affine_closed_form(affine_spec_on(path, 1.0, raised, -0.5, c), path)
        ok, _ = comparison_check(x_low, y)
        held += ok
        high_ok, index = comparison_check(x_high, y)
        if not high_ok:
            detected += 1
            first_bad.append(index)
    ctx.add_check('comparison-principle', held == count, held=held, paths=count)
    ctx.add_check('comparison-control', detected == count, detected=detected, paths=count,
                  first_violation_max=max(first_bad) if first_bad else -1)

    ctx.add_bound('exponential-martingale', exponential_martingale_check(
        c, 1.0, ORACLE_DTS[0], paths=max(count, 2), seed=replica_seed(config.seed, count)))


def flock_rate(ctx: ExperimentContext) -> None:
    """Скорость затухания E[M2] по репликам с общим шумом и полоса оценок"""
    config = ctx.config
    w, sigma = config.weight, config.sigma
    window = ctx.option('window')
    window = tuple(window) if window else None

    ctx.add_bound('exponential-martingale', exponential_martingale_check(
        sigma, config.T, config.dt, paths=max(config.replicas, 2), seed=replica_seed(config.seed, config.replicas)))

    batch = run_replicas(config, ctx.threads)
    ctx.record('replicas.completed', len(batch.records))
    ctx.record('replicas.excluded', batch.n_excluded)
    mean = mean_series(batch.series_list)
    ctx.export.export_table(mean.to_frame(), 'mean_series.csv')

    s2 = sigma ** 2
    lower, upper = -2.0 * (w.phi_M - s2), -2.0 * (w.phi_m - s2)
    rows, records = [], []
    for field_name in ('m2', 'e_t'):
        fit = bootstrap_rate(batch.series_list, field_name, window, seed=config.seed)
        rows.append({
            'field': field_name, 'rate': fit.rate, 'ci': fit.ci_halfwidth, 'r_squared': fit.r_squared,
            'window_lo': fit.window[0], 'window_hi': fit.window[1], 'points': fit.points,
            'band_lower': lower, 'band_upper': upper,
        })
        records.append(f'field={field_name} {fit.as_record()}')
        if field_name == 'm2':
            tol = fit.ci_halfwidth + 10.0 * config.dt
            ctx.add_check('rate-band', lower - tol <= fit.rate <= upper + tol, rate=fit.rate,
                          ci=fit.ci_halfwidth, band_lower=lower, band_upper=upper, tolerance=tol)
            if w.is_constant and s2 > w.phi_M:
                ctx.add_check('growth-sign', fit.rate > 0, rate=fit.rate)
    ctx.export.export_table(pd.DataFrame(rows), 'rates.csv')
    ctx.export.export_text('rates.txt', '\n'.join(records) + '\n')

    ctx.add_bound('expectation-band', expectation_band_check(mean, w, sigma, config.dt))
    ctx.add_bound('growth-bound', growth_bound_check(mean, sigma, config.dt))

    m2_0 = mean.m2[0]
    ctx.export.plot_lines(
        'decay.svg', mean.t_grid,
        [{'y': mean.m2, 'label': 'E[M2]'}, {'y': mean.e_t, 'label': 'E[E_t]', 'style': '--'}],
        't', 'E[M2]', title=f'{w.describe()}, sigma={sigma:g}', logy=True,
        band={'lower': m2_0 * np.exp(lower * mean.t_grid), 'upper': m2_0 * np.exp(upper * mean.t_grid),
              'label': 'band'},
    )


def pathwise_bounds(ctx: ExperimentContext) -> None:
    """Сохранение моментов и потраекторные оценки на каждой реплике"""
    config = ctx.config
    w, sigma, dt = config.weight, config.sigma, config.dt
    batch = run_replicas(config, ctx.threads)
    ctx.record('replicas.excluded', batch.n_excluded)

    rows = []
    for record in batch.records:
        series, path = record.series, record.path
        row = {'replica': record.replica, 'path_sup': path.sup_abs}
        row['m0_error'] = float(np.max(np.abs(series.m0 - 1.0)))
        if config.noise_mode != 'independent':
            drift = np.max(np.abs(np.asarray(series.m1) - np.asarray(series.m1)[0]))
            row['momentum_drift'] = float(drift)
            row['momentum_limit'] = 1e-10 * config.N * float(series.supp_v[0])
        row['phi_m_bound'] = pathwise_bound_check(series, w.phi_m, sigma, path).max_violation
        row['dissipation_bound'] = dissipation_bound_check(series, w, sigma, path).max_violation
        row['velocity_support'] = velocity_support_check(series, w, sigma, path, config.d).max_violation
        if w.is_constant:
            exact = series.m2[0] * np.exp(-2.0 * w.phi_M * series.t_grid - 2.0 * sigma * path.at(series.t_grid))
            row['exact_m2_rel_error'] = float(np.max(np.abs(series.m2 / exact - 1.0)))
        rows.append(row)
    table = pd.DataFrame(rows)
    ctx.export.export_table(table, 'pathwise.csv')

    ctx.add_check('mass-exact', bool((table['m0_error'] == 0).all()), max_error=table['m0_error'].max())
    if 'momentum_drift' in table:
        ok = bool((table['momentum_drift'] <= table['momentum_limit']).all())
        ctx.add_check('momentum-conservation', ok, max_drift=table['momentum_drift'].max())
    for column, tag in (('phi_m_bound', 'pathwise-bound'), ('dissipation_bound', 'dissipation-bound'),
                        ('velocity_support', 'velocity-support')):
        worst = float(table[column].max())
        ctx.add_check(tag, worst <= 0.0, max_violation=worst, replicas=len(table))
    if 'exact_m2_rel_error' in table:
        worst = float(table['exact_m2_rel_error'].max())
        ctx.add_check('exact-dissipation', worst <= 10.0 * dt, max_rel_error=worst, limit=10.0 * dt)

    # пара N = 2: w_t = w_0 exp(−φ0 t − σW_t)
    pair_cfg, phi0 = _pair_config(config)
    path = path_for(config)
    pair = run(pair_cfg, path=path, ens0=_pair_ensemble())
    relative = np.array([state.v[0, 0] - state.v[1, 0] for state in pair.states])
    closed = 2.0 * np.exp(-phi0 * pair.times - sigma * path.at(pair.times))
    pair_error = float(np.max(np.abs(relative / closed - 1.0)))
    ctx.add_check('pair-closed-form', pair_error <= 5.0 * dt, max_rel_error=pair_error, limit=5.0 * dt)
    if phi0 > 0:
        control = pathwise_bound_check(pair.series, 2.0 * phi0, sigma, path)
        ctx.add_check('falsification-control', not control.passed, max_violation=control.max_violation)
    ctx.export.export_table(
        pd.DataFrame({'t': pair.times, 'w': relative, 'closed_form': closed}), 'pair.csv'
    )


def wong_zakai(ctx: ExperimentContext) -> None:
    """Сглаженный шум (RK4) против решения Стратоновича на одном пути"""
    config = ctx.config.replace(noise_mode='common')
    path = path_for(config)
    terminal_cfg = _terminal_only(config, path)
    ens0 = initial_for(config)
    reference = run(terminal_cfg, path=path, ens0=ens0).final

    eps_list = sorted((float(e) for e in ctx.option('eps_list', DEFAULT_EPS_LIST)), reverse=True)
    distances = [
        _terminal_distance(run_wong_zakai(terminal_cfg, path, eps, ens0=ens0).final, reference)
        for eps in eps_list
    ]
    ctx.export.export_table(pd.DataFrame({'eps': eps_list, 'distance': distances}), 'wong_zakai.csv')
    monotone = all(b <= a + 1e-12 for a, b in zip(distances, distances[1:]))
    ctx.add_check('wong-zakai-monotone', monotone, **{f"eps_{e:g}": d for e, d in zip(eps_list, distances)})

    pair_cfg, phi0 = _pair_config(config)
    pair = run_wong_zakai(_terminal_only(pair_cfg, path), path, path.dt, ens0=_pair_ensemble()).final
    closed = 2.0 * math.exp(-phi0 * path.T - config.sigma * path.values[-1])
    pair_error = abs((pair.v[0, 0] - pair.v[1, 0]) / closed - 1.0)
    ctx.add_check('wong-zakai-pair', pair_error <= 0.10, rel_error=pair_error, eps=path.dt)

    quiet = terminal_cfg.replace(sigma=0.0)
    gap = _terminal_distance(run_wong_zakai(quiet, path, eps_list[-1], ens0=ens0).final,
                             run(quiet, path=path, ens0=ens0).final)
    scale = max(1.0, float(np.max(np.abs(ens0.v))))
    limit = 10.0 * path.dt ** 2 * path.T * scale
    ctx.add_check('wong-zakai-noise-free', gap <= limit, distance=gap, limit=limit)

    ctx.export.plot_lines('wong_zakai.svg', eps_list, [{'y': distances, 'label': 'terminal distance'}],
                          'eps', 'distance', logy=True)


def ito_vs_stratonovich(ctx: ExperimentContext) -> None:
    """
    Терминальное E[M2] для схем Стратоновича, Ито в записанной форме и Ито
    с точной поправкой; при независимом шуме разрыв форм измеряется по N.
    """
    config = ctx.config
    rows = []
    for n in ctx.option('n_list', DEFAULT_ITO_N_LIST):
        for mode in ('common', 'independent'):
            cfg = config.replace(N=int(n), noise_mode=mode)
            estimates = {}
            for scheme in ('stratonovich', 'ito', 'ito-exact'):
                batch = run_replicas(cfg, ctx.threads, scheme=scheme)
                estimates[scheme] = mc_expectation(batch.terminal('m2'))
            ref_mean, ref_ci = estimates['stratonovich']
            for scheme, (mean, ci) in estimates.items():
                rows.append({'N': int(n), 'mode': mode, 'scheme': scheme, 'mean_m2': mean, 'ci': ci,
                             'gap': mean - ref_mean, 'gap_ci': ci + ref_ci})
            if mode == 'common':
                mean, ci = estimates['ito']
                ctx.add_check(f'ito-stratonovich-N{int(n)}', abs(mean - ref_mean) <= ci + ref_ci,
                              gap=mean - ref_mean, ci_sum=ci + ref_ci)
    table = pd.DataFrame(rows)
    ctx.export.export_table(table, 'ito_vs_strat.csv')

    independent = table[(table['mode'] == 'independent') & (table['scheme'] != 'stratonovich')]
    curves = independent.pivot(index='N', columns='scheme', values='gap').abs().sort_index()
    ctx.export.plot_lines('ito_gap.svg', curves.index.values,
                          [{'y': curves[s].values, 'label': s} for s in curves.columns],
                          'N', '|E[M2] gap|', title='independent noise', logy=True)


def chaos(ctx: ExperimentContext) -> None:
    """Распространение хаоса: W2 до наибольшего ансамбля по мастер-сидам"""
    config = ctx.config.replace(noise_mode='common')
    n_list = [int(n) for n in ctx.option('n_list', DEFAULT_CHAOS_N_LIST)]
    seeds = [replica_seed(config.seed, k) for k in range(config.replicas)]
    ctx.record('chaos.master_seeds', ','.join(str(s) for s in seeds))
    table, fraction = chaos_trend(config, n_list, seeds, threads=ctx.threads)
    ctx.export.export_table(table, 'chaos.csv')
    ctx.add_check('chaos-decreasing', fraction >= 0.9, fraction=fraction, seeds=len(seeds))

    rng = rng_for(replica_seed(config.seed, len(seeds)))
    worst = 0.0
    for n in range(1, BRUTE_FORCE_LIMIT + 1):
        a, b = rng.normal(size=(n, 2 * config.d)), rng.normal(size=(n, 2 * config.d))
        worst = max(worst, abs(wasserstein2(a, b) - brute_force_wasserstein2(a, b)))
    ctx.add_check('matching-brute-force', worst == 0.0, max_gap=worst)

    mean = table[table['N'] < max(n_list)].groupby('N')['W2'].mean()
    ctx.export.plot_lines('chaos.svg', mean.index.values, [{'y': mean.values, 'label': 'mean W2'}],
                          'N', 'W2 to N_max', logy=True)


def stability(ctx: ExperimentContext) -> None:
    """Устойчивость по начальным данным в W2 на одном пути"""
    config = ctx.config.replace(noise_mode='common')
    path = path_for(config)
    init = initial_for(config)
    eps = float(ctx.option('perturbation', 1e-3))

    response = linear_response(config, eps, path, init, 'velocity')
    ctx.export.export_table(response.table, 'stability.csv')
    ctx.add_check('stability-ratio-finite', math.isfinite(response.max_ratio),
                  max_ratio=response.max_ratio, path_sup=response.path_sup)
    ratio_min, ratio_max = response.extra['ratio_min'], response.extra['ratio_max']
    ctx.add_check('linear-response', 0.3 <= ratio_min and ratio_max <= 0.7,
                  ratio_min=ratio_min, ratio_max=ratio_max)

    shifted = stability_experiment(config, init, perturb(init, eps, 'position'), path, threads=ctx.threads)
    ctx.export.export_table(shifted.table, 'stability_position.csv')
    ctx.add_check('position-perturbation-bounded', math.isfinite(shifted.max_ratio),
                  max_ratio=shifted.max_ratio, path_sup=shifted.path_sup)

    ctx.export.plot_lines('stability.svg', response.table['t'].values,
                          [{'y': response.table['W2_eps'].values, 'label': f'eps={eps:g}'},
                           {'y': response.table['W2_half'].values, 'label': f'eps={eps / 2:g}', 'style': '--'}],
                          't', 'W2', logy=True)


def kinetic_fixed_point(ctx: ExperimentContext) -> None:
    """Последовательные приближения: сходимость, факториальное сжатие, инварианты"""
    config = ctx.config
    w, sigma = config.weight, config.sigma
    datum = _kinetic_datum(ctx)
    path = path_for(config)
    tol = float(ctx.option('tol', 1e-6))
    max_iter = int(ctx.option('max_iter', 20))

    trajectory, diagnostics = solve(datum, w, sigma, path, 'fixed-point', tol, max_iter)
    ctx.export.export_table(diagnostics.to_frame(), 'iterations.csv')
    ctx.export.export_table(trajectory.series.to_frame(), 'kinetic_series.csv')
    ctx.export.export_table(trajectory.final.to_frame(), 'kinetic_final.csv')
    trajectory.save_npz(ctx.export.path('kinetic_trajectory.npz'))
    ctx.add_check('fixed-point-converged',
                  diagnostics.converged and diagnostics.converged_at <= FIXED_POINT_LIMIT,
                  iterations=diagnostics.iterations, converged_at=diagnostics.converged_at,
                  last_gap=diagnostics.gaps[-1], flagged=diagnostics.flagged)

    m2_0 = moments(datum)[2]
    ctx.add_bound('iterate-moments', iterate_moment_check(diagnostics, path, m2_0, w.phi_M, sigma))
    _kinetic_invariants(ctx, trajectory, datum)

    # постоянный вес делает отображение зависящим только от M0, M1: сжатие видно на рациональном профиле
    signature_weight = w if not w.is_constant else rational_weight(0.1 * w.phi_M, w.phi_M)
    if signature_weight is w and diagnostics.iterations >= SIGNATURE_ITERATIONS:
        signature = diagnostics
    else:
        _, signature = solve_fixed_point(datum, signature_weight, sigma, path, tol=1e-15 * datum.sup_norm,
                                         max_iter=SIGNATURE_ITERATIONS, validate=False)
    ctx.export.export_table(signature.to_frame(), 'contraction.csv')
    ctx.add_bound('factorial-contraction', signature.factorial_signature(),
                  weight=signature_weight.describe())

    semi = evolve_semi_lagrangian(datum, w, sigma, path, validate=False)
    gap = sup_gap(trajectory, semi)
    h = max(datum.grid.hx, datum.grid.hv)
    limit = 3.0 * (path.dt + h * h) * path.T * datum.sup_norm
    ctx.add_check('semi-lagrangian-agreement', gap <= limit, sup_gap=gap, limit=limit)

    n = np.arange(1, signature.iterations + 1)
    ctx.export.plot_lines('contraction.svg', n, [{'y': signature.gaps, 'label': 'gap'},
                                                 {'y': signature.flow_gaps, 'label': 'flow gap', 'style': '--'}],
                          'n', 'sup gap', logy=True)


def kinetic_vs_particle(ctx: ExperimentContext) -> None:
    """Кинетическое решение против ансамбля частиц из той же плотности на том же пути"""
    config = ctx.config
    w, sigma = config.weight, config.sigma
    datum = _kinetic_datum(ctx)
    path = path_for(config)
    mode = _kinetic_mode(ctx)
    trajectory, _ = solve(datum, w, sigma, path, mode, float(ctx.option('tol', 1e-6)),
                          int(ctx.option('max_iter', 20)))
    _kinetic_invariants(ctx, trajectory, datum)

    n = int(ctx.option('n_particles', 4096))
    ens0 = sample_from_density(datum, n, rng_for(replica_seed(config.seed, 3)))
    particles = run(config.replace(N=n, d=1, noise_mode='common'), path=path, ens0=ens0, keep_states=False)

    kinetic_m2 = trajectory.series.m2
    idx = np.searchsorted(path.t_grid, particles.times - 1e-9)
    table = pd.DataFrame({'t': particles.times, 'M2_kinetic': kinetic_m2[idx], 'M2_particle': particles.series.m2})
    ctx.export.export_table(table, 'kinetic_vs_particle.csv')
    m2_0 = float(kinetic_m2[0])
    gap = abs(float(kinetic_m2[-1]) - float(particles.series.m2[-1]))
    ctx.add_check('kinetic-particle-m2', gap <= 0.05 * m2_0, gap=gap, limit=0.05 * m2_0,
                  max_gap=float(np.max(np.abs(table['M2_kinetic'] - table['M2_particle']))), mode=mode)
    ctx.export.plot_lines('kinetic_vs_particle.svg', table['t'].values,
                          [{'y': table['M2_kinetic'].values, 'label': 'kinetic'},
                           {'y': table['M2_particle'].values, 'label': f'particles N={n}', 'style': '--'}],
                          't', 'M2', logy=True)


def kinetic_supnorm(ctx: ExperimentContext) -> None:
    """Средняя по путям sup-норма против exp((φ_M + σ²/2)t)"""
    config = ctx.config
    datum = _kinetic_datum(ctx)
    paths = int(ctx.option('paths', 8))
    check = expected_supnorm_check(datum, config.weight, config.sigma, config.T, config.dt, paths, config.seed,
                                   mode=_kinetic_mode(ctx), tol=float(ctx.option('tol', 1e-6)),
                                   max_iter=int(ctx.option('max_iter', 20)))
    ctx.add_bound('supnorm-expectation', check, paths=paths)


SUITES: Dict[str, Callable[[ExperimentContext], None]] = {
    'oracle-suite': oracle_suite,
    'flock-rate': flock_rate,
    'pathwise-bounds': pathwise_bounds,
    'wong-zakai': wong_zakai,
    'ito-vs-strat': ito_vs_stratonovich,
    'chaos': chaos,
    'stability': stability,
    'kinetic-fixed-point': kinetic_fixed_point,
    'kinetic-vs-particle': kinetic_vs_particle,
    'kinetic-supnorm': kinetic_supnorm,
}
