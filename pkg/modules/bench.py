"""
Module: Benchmarks
Experiment harness for the solver stack.

Every study returns a StudyResult (a DataFrame of per-run rows plus named
pass/fail assertions) and, given an output directory, writes
<study>.csv there. Wall-clock times go to a separate <study>_timings.csv so
the main reports are byte-identical across reruns with the same seeds.

Quantum query counts are always MODELED (cost formula x measured event
counts); iterations, classical operations and condition numbers are
MEASURED.
"""

import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.linear_model import LinearRegression

from .config import bench_workers, load_config
from .dense_la import SymmetricSystem, condition_number, exact_solve
from .errors import DivergingSolverError, QipmError, UnknownColumnError, UsageError
from .ipm import CG, EXACT, QUANTUM, ae_qipm_solve, exact_direction
from .lp_core import (InstanceSpec, dual_objective, dual_residual, dual_slack,
                      generate_instance, normalize_by_frobenius, scale_iterate)
from .qsim import (RESIDUAL_SPACE, SOLUTION_SPACE, CostLedger, NoiseModel, ledger_report,
                   refined_linear_solve)
from .refine import RefineConfig, ir_ae_qipm, project_dual
from .rounding import round_solution
from .telemetry import emit_telemetry, get_logger

logger = get_logger('bench')

BANNER = ('NOTE: qram_queries are MODELED (cost formula x measured event counts); '
          'iterations, classical_ops and cond_M are MEASURED.')


@dataclass(frozen=True)
class BenchConfig:
    n_list: Tuple[int, ...] = (32, 64, 128, 256)
    m_ratio: float = 0.5
    seeds: Tuple[int, ...] = (0, 1, 2)
    zeta: float = 1e-6
    zeta_tilde: float = 1e-2
    gap_reduction: float = 1e8
    samples: int = 100
    instances: int = 20
    degenerate_instances: int = 5
    condnum_n: int = 20
    condnum_gap: float = 1e-8
    workers: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'n_list', tuple(int(n) for n in self.n_list))
        object.__setattr__(self, 'seeds', tuple(int(s) for s in self.seeds))
        if not (0.0 < self.m_ratio <= 1.0):
            raise ValueError(f"m_ratio must be in (0, 1], got {self.m_ratio}")
        if not self.seeds:
            raise ValueError('at least one seed is required')
        if self.gap_reduction <= 1.0:
            raise ValueError('gap_reduction must exceed 1')

    def resolved_workers(self) -> int:
        return self.workers if self.workers else bench_workers()


@dataclass
class StudyResult:
    name: str
    frame: pd.DataFrame
    assertions: Dict[str, bool] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    timings: Optional[pd.DataFrame] = None

    @property
    def passed(self) -> bool:
        return all(self.assertions.values())

    def write(self, out_dir: Optional[str]) -> None:
        if not out_dir:
            return
        os.makedirs(out_dir, exist_ok=True)
        self.frame.to_csv(os.path.join(out_dir, f"{self.name}.csv"), index=False, float_format='%.12g')
        if self.timings is not None and not self.timings.empty:
            self.timings.to_csv(os.path.join(out_dir, f"{self.name}_timings.csv"), index=False,
                                float_format='%.6f')


# ---- helpers ----

def _configs(config: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    return config if config is not None else load_config()


def _m_for(n: int, ratio: float) -> int:
    return max(1, min(n, int(round(n * ratio))))


def _failure(e: QipmError) -> Dict[str, Any]:
    return {'failed': True, 'reason': e.reason, 'error': e.message}


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x); nan with fewer than two distinct x."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if np.unique(x).size < 2:
        return float('nan')
    model = LinearRegression().fit(np.log(x).reshape(-1, 1), np.log(y))
    return float(model.coef_[0])


def _study_slope(df: pd.DataFrame, column: str, exclude_smallest: bool = True) -> float:
    ok = df[~df['failed']] if 'failed' in df.columns else df
    if ok.empty:
        return float('nan')
    if exclude_smallest:
        ok = ok[ok['n'] > ok['n'].min()]
    return fit_loglog_slope(ok['n'], ok[column])


def _parallel(tasks: List[Tuple[Callable, tuple]], workers: int) -> List[Any]:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*args) for fn, args in tasks]
    return Parallel(n_jobs=workers)(delayed(fn)(*args) for fn, args in tasks)


def _timings(rows: List[Dict[str, Any]], keys: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame([{**{k: r[k] for k in keys}, 'seconds': r.pop('_seconds')} for r in rows])


# ---- scaling study ----

def _scaling_run(n: int, m: int, seed: int, solver: str, cfg: Dict[str, Any], zeta: float,
                 zeta_tilde: float) -> Dict[str, Any]:
    t0 = time.perf_counter()
    row: Dict[str, Any] = {'n': n, 'm': m, 'seed': seed, 'solver': solver, 'stages': 0,
                           'ipm_iterations': 0, 'inner_iterations': 0, 'qram_queries': 0.0,
                           'classical_ops': 0.0, 'final_gap': float('nan'),
                           'failed': False, 'reason': '', 'error': ''}
    try:
        inst, start, _ = generate_instance(InstanceSpec(n=n, m=m, seed=seed))
        inst, factor = normalize_by_frobenius(inst)
        start = scale_iterate(start, factor)
        ipm_cfg = replace(cfg['ipm'], solver=solver, theta=None, record_condition='never', check_every=0)
        refine_cfg = replace(cfg['refine'], zeta=zeta, zeta_tilde=zeta_tilde)
        ledger = CostLedger(cost=cfg['cost'])
        _, state = ir_ae_qipm(inst, start, ipm_cfg, replace(cfg['noise'], seed=seed), refine_cfg, ledger)
        report = ledger_report(state.ledger, n, kappa=1.0, frob_norm=1.0)
        row.update({
            'stages': state.stages,
            'ipm_iterations': sum(t.iterations for t in state.traces),
            'inner_iterations': int(sum(sum(t.column('inner_iterations')) for t in state.traces)),
            'qram_queries': report['reference_qram_queries'],
            'classical_ops': report['classical_ops'],
            'final_gap': state.gap_history[-1],
        })
    except QipmError as e:
        logger.warning('scaling run n=%d seed=%d solver=%s failed: %s', n, seed, solver, e.message)
        row.update(_failure(e))
    row['_seconds'] = time.perf_counter() - t0
    return row


def run_scaling_study(n_list: Sequence[int], m_ratio: float = 0.5, seeds: Sequence[int] = (0,),
                      config: Optional[Dict[str, Any]] = None, out_dir: Optional[str] = None) -> StudyResult:
    """
    Refined solves in quantum_emulated and cg_baseline mode for every
    (n, seed). Fits log-log slopes of iterations, modeled queries and CG
    classical operations against n, leaving out the smallest n.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 4 or n_list != sorted(n_list) or len(set(n_list)) != len(n_list):
        raise UsageError(f"scaling study needs at least 4 ascending sizes, got {n_list}")
    cfg = _configs(config)
    bench: BenchConfig = cfg['bench']
    tasks = [(_scaling_run, (n, _m_for(n, m_ratio), int(seed), solver, cfg, bench.zeta, bench.zeta_tilde))
             for n in n_list for seed in seeds for solver in (QUANTUM, CG)]
    rows = _parallel(tasks, bench.resolved_workers())
    rows.sort(key=lambda r: (r['n'], r['seed'], r['solver']))
    timings = _timings(rows, ('n', 'seed', 'solver'))
    df = pd.DataFrame(rows)

    quantum = df[df['solver'] == QUANTUM]
    classical = df[df['solver'] == CG]
    slopes = {
        'ipm_iterations': _study_slope(quantum, 'ipm_iterations'),
        'qram_queries': _study_slope(quantum, 'qram_queries'),
        'cg_classical_ops': _study_slope(classical, 'classical_ops'),
    }
    assertions = {
        'iterations_slope_sqrt_n': 0.4 <= slopes['ipm_iterations'] <= 0.6,
        'query_slope_1_5': abs(slopes['qram_queries'] - 1.5) <= 0.1,
        'cg_ops_slope_ge_2_3': slopes['cg_classical_ops'] >= 2.3,
        'no_failed_runs': not bool(df['failed'].any()),
    }
    comparison = pd.DataFrame([
        {'solver': QUANTUM, 'ipm_iterations_slope': slopes['ipm_iterations'],
         'cost': 'qram_queries (modeled)', 'cost_slope': slopes['qram_queries']},
        {'solver': CG, 'ipm_iterations_slope': _study_slope(classical, 'ipm_iterations'),
         'cost': 'classical_ops (measured)', 'cost_slope': slopes['cg_classical_ops']},
    ])
    summary = {'slopes': slopes, 'failed_runs': int(df['failed'].sum()), 'banner': BANNER,
               'comparison': comparison.to_dict('records')}
    result = StudyResult('scaling', df, assertions, summary, timings)
    result.write(out_dir)
    if out_dir:
        pd.DataFrame([{'quantity': k, 'slope': v} for k, v in slopes.items()]).to_csv(
            os.path.join(out_dir, 'scaling_slopes.csv'), index=False, float_format='%.6f')
        comparison.to_csv(os.path.join(out_dir, 'scaling_comparison.csv'), index=False, float_format='%.6f')
    emit_telemetry({'event': 'bench_scaling', **slopes})
    return result


# ---- iteration law ----

def _iteration_run(n: int, m: int, seed: int, cfg: Dict[str, Any], reduction: float) -> Dict[str, Any]:
    t0 = time.perf_counter()
    row: Dict[str, Any] = {'n': n, 'm': m, 'seed': seed, 'theta': 1.0 / (2.0 * math.sqrt(n)),
                           'iterations': 0, 'expected': 0, 'max_delta': float('nan'),
                           'failed': False, 'reason': '', 'error': ''}
    theta = row['theta']
    row['expected'] = math.ceil(math.log(reduction) / -math.log(1.0 - theta))
    try:
        inst, start, _ = generate_instance(InstanceSpec(n=n, m=m, seed=seed))
        ipm_cfg = replace(cfg['ipm'], solver=EXACT, theta=theta, mu_min=start.mu / reduction,
                          record_condition='never')
        _, trace = ae_qipm_solve(inst, start, ipm_cfg)
        row['iterations'] = trace.iterations
        row['max_delta'] = max(trace.delta_history + [trace.final_delta])
    except QipmError as e:
        row.update(_failure(e))
    row['_seconds'] = time.perf_counter() - t0
    return row


def run_iteration_study(n_list: Sequence[int] = (16, 32, 64, 128, 256), m_ratio: float = 0.5,
                        seeds: Sequence[int] = (0,), config: Optional[Dict[str, Any]] = None,
                        out_dir: Optional[str] = None) -> StudyResult:
    """Exact solves with theta = 1/(2 sqrt(n)) over a fixed mu reduction."""
    cfg = _configs(config)
    bench: BenchConfig = cfg['bench']
    tasks = [(_iteration_run, (int(n), _m_for(int(n), m_ratio), int(seed), cfg, bench.gap_reduction))
             for n in n_list for seed in seeds]
    rows = _parallel(tasks, bench.resolved_workers())
    rows.sort(key=lambda r: (r['n'], r['seed']))
    timings = _timings(rows, ('n', 'seed'))
    df = pd.DataFrame(rows)
    slope = _study_slope(df, 'iterations')
    assertions = {
        'delta_below_half': bool((df['max_delta'] < 0.5).all()),
        'iteration_count_exact': bool((df['iterations'] == df['expected']).all()),
        'slope_in_range': 0.4 <= slope <= 0.6,
    }
    result = StudyResult('iterations', df, assertions, {'slope': slope}, timings)
    result.write(out_dir)
    return result


# ---- centering ----

def run_centering_study(n_list: Sequence[int] = (8, 16, 32, 64), samples: int = 100, seed: int = 0,
                        config: Optional[Dict[str, Any]] = None, out_dir: Optional[str] = None) -> StudyResult:
    """
    One exact full Newton step at fixed mu from random interior iterates with
    delta in (0.05, 0.9); checks delta_after <= delta_before^2 + 1e-8.
    """
    rng = np.random.default_rng(seed)
    pool = []
    for i, n in enumerate(n_list):
        for j in range(3):
            inst, start, _ = generate_instance(InstanceSpec(n=int(n), m=_m_for(int(n), 0.5), seed=seed * 1000 + 10 * i + j))
            pool.append((inst, start))

    rows: List[Dict[str, Any]] = []
    attempts = 0
    while len(rows) < samples and attempts < 200 * samples:
        attempts += 1
        inst, start = pool[int(rng.integers(len(pool)))]
        direction = rng.standard_normal(inst.m)
        direction /= np.linalg.norm(direction)
        step = 10 ** rng.uniform(-3.0, 0.0) * float(start.s.min()) / max(1.0, float(np.abs(inst.A).max()))
        y = start.y + step * direction
        s = dual_slack(inst, y)
        if not np.all(s > 0):
            continue
        mu = start.mu * math.exp(rng.uniform(-0.3, 0.3))
        _, ds = exact_direction(inst, s, mu)
        before = float(np.linalg.norm(ds / s))
        if not (0.05 < before < 0.9):
            continue
        s_new = s + ds
        _, ds_new = exact_direction(inst, s_new, mu)
        after = float(np.linalg.norm(ds_new / s_new))
        rows.append({'sample': len(rows), 'instance': inst.name, 'n': inst.n, 'mu': mu,
                     'delta_before': before, 'delta_after': after,
                     'bound': before * before + 1e-8, 'ok': after <= before * before + 1e-8})
    df = pd.DataFrame(rows, columns=['sample', 'instance', 'n', 'mu', 'delta_before', 'delta_after', 'bound', 'ok'])
    assertions = {
        'enough_samples': len(rows) == samples,
        'quadratic_decrease': bool(df['ok'].all()) if len(df) else False,
    }
    result = StudyResult('centering', df, assertions, {'attempts': attempts})
    result.write(out_dir)
    return result


# ---- inner solver ----

def _random_augmented(rng: np.random.Generator, n: int, s_low: float) -> SymmetricSystem:
    m = max(1, n // 2)
    A = rng.standard_normal((m, n))
    s = rng.uniform(s_low, 2.0, size=n)
    return SymmetricSystem.augmented(A, s)


def run_inner_solver_study(systems: int = 100, seed: int = 0, eps: float = 0.1,
                           config: Optional[Dict[str, Any]] = None, out_dir: Optional[str] = None) -> StudyResult:
    """
    Per system: residual-space contraction at eps, zero-noise agreement with
    the direct solve, and a solution-space case with kappa * eps > 1 that
    must be rejected as diverging.
    """
    rng = np.random.default_rng(seed)
    rows: List[Dict[str, Any]] = []
    for i in range(systems):
        n = int(rng.integers(6, 13))
        sys = _random_augmented(rng, n, 0.5)
        sigma = rng.standard_normal(sys.order)
        sigma /= np.linalg.norm(sigma)

        noisy = NoiseModel(eps_tomo=eps, eps_norm=eps, mode=RESIDUAL_SPACE, seed=seed * 10000 + i)
        rep = refined_linear_solve(sys, sigma, tol=1e-10, noise=noisy, ledger=CostLedger())
        ratios = rep.contraction_ratios

        clean = NoiseModel(eps_tomo=0.0, eps_norm=0.0, seed=i)
        z = refined_linear_solve(sys, sigma, tol=1e-10, noise=clean, ledger=CostLedger()).solution
        z_ref = exact_solve(sys, sigma)
        zero_err = float(np.linalg.norm(z - z_ref) / np.linalg.norm(z_ref))

        bad_sys = _random_augmented(rng, n, 0.02)
        bad_noise = NoiseModel(eps_tomo=0.2, eps_norm=0.1, mode=SOLUTION_SPACE, seed=i)
        kappa = condition_number(bad_sys)
        kappa_eps = kappa * (bad_noise.eps_tomo + 2 * bad_noise.eps_norm)
        try:
            refined_linear_solve(bad_sys, sigma, tol=1e-10, noise=bad_noise, ledger=CostLedger())
            raised = False
        except DivergingSolverError:
            raised = True
        rows.append({'system': i, 'order': sys.order, 'max_ratio': max(ratios) if ratios else 0.0,
                     'iterations': rep.iterations, 'zero_noise_error': zero_err,
                     'bad_kappa_eps': kappa_eps, 'bad_raised': raised})
    df = pd.DataFrame(rows)
    bad = df[df['bad_kappa_eps'] > 1.0]
    assertions = {
        'contraction_ratio_le_0_11': bool((df['max_ratio'] <= eps + 0.01).all()),
        'iterations_le_11': bool((df['iterations'] <= 11).all()),
        'zero_noise_matches_exact': bool((df['zero_noise_error'] <= 1e-12).all()),
        'diverging_cases_raise': bool(bad['bad_raised'].all()) and len(bad) > 0,
    }
    result = StudyResult('inner_solver', df, assertions, {'bad_cases': int(len(bad))})
    result.write(out_dir)
    return result


# ---- refinement accuracy ----

def _refinement_run(n: int, seed: int, solver: str, cfg: Dict[str, Any]) -> Dict[str, Any]:
    t0 = time.perf_counter()
    row: Dict[str, Any] = {'n': n, 'seed': seed, 'solver': solver, 'stages': 0,
                           'objective_error': float('nan'), 'failed': False, 'reason': '', 'error': ''}
    try:
        inst, start, cert = generate_instance(InstanceSpec(n=n, m=_m_for(n, 0.5), seed=seed))
        ipm_cfg = replace(cfg['ipm'], solver=solver, record_condition='never', check_every=0)
        _, state = ir_ae_qipm(inst, start, ipm_cfg, replace(cfg['noise'], seed=seed), cfg['refine'],
                              certificate=cert)
        row['stages'] = state.stages
        row['objective_error'] = abs(dual_objective(inst, state.y_acc) - cert.opt_value)
    except QipmError as e:
        row.update(_failure(e))
    row['_seconds'] = time.perf_counter() - t0
    return row


def run_refinement_study(instances: int = 20, n_list: Sequence[int] = (16, 32, 48, 64),
                         config: Optional[Dict[str, Any]] = None, out_dir: Optional[str] = None) -> StudyResult:
    """Refined solves against planted certificates with the exact and the emulated quantum solver."""
    cfg = _configs(config)
    expected = cfg['refine'].stage_count
    tasks = [(_refinement_run, (int(n_list[i % len(n_list)]), i, solver, cfg))
             for i in range(instances) for solver in (EXACT, QUANTUM)]
    rows = _parallel(tasks, cfg['bench'].resolved_workers())
    rows.sort(key=lambda r: (r['seed'], r['solver']))
    timings = _timings(rows, ('n', 'seed', 'solver'))
    df = pd.DataFrame(rows)
    assertions = {
        'stage_count': bool((df['stages'] == expected).all()),
        'objective_within_1e_9': bool((df['objective_error'] <= 1e-9).all()),
    }
    result = StudyResult('refinement', df, assertions, {'expected_stages': expected}, timings)
    result.write(out_dir)
    return result


# ---- condition numbers ----

def _cond_rows(label: str, instance: str, traces: Iterable, stage_offset: int = 0) -> List[Dict[str, Any]]:
    rows = []
    for stage, trace in enumerate(traces, start=stage_offset):
        for r in trace.rows:
            rows.append({'instance': instance, 'run': label, 'stage': stage, 'iter': r['iter'],
                         'mu': r['mu'], 'cond_M': r['cond_M']})
    return rows


def run_condnum_study(degenerate_spec: Any, config: Optional[Dict[str, Any]] = None,
                      out_dir: Optional[str] = None, control: bool = True) -> StudyResult:
    """
    (a) one un-refined exact run to gap condnum_gap, (b) a refined run with
    per-stage accuracy zeta_tilde to the same gap; kappa(M) every iteration.
    Run (a) must grow kappa by 100x or more; in run (b) no later stage may
    exceed 10x the largest kappa of stage 0.
    With `control`, the same pair runs on the nondegenerate twin instance.
    """
    cfg = _configs(config)
    bench: BenchConfig = cfg['bench']
    spec = degenerate_spec if isinstance(degenerate_spec, InstanceSpec) else InstanceSpec(**dict(degenerate_spec))
    if not spec.degenerate:
        raise UsageError('condition-number study needs a degenerate instance spec')
    specs = [('degenerate', spec)]
    if control:
        specs.append(('control', replace(spec, degenerate=False)))

    ipm_cfg = replace(cfg['ipm'], solver=EXACT, record_condition='always', mu_min=1e-300, check_every=0)
    refine_cfg = RefineConfig(zeta=bench.condnum_gap, zeta_tilde=bench.zeta_tilde)
    rows: List[Dict[str, Any]] = []
    summary: Dict[str, Any] = {}
    for label, sp in specs:
        inst, start, _ = generate_instance(sp)
        single_failed = ''
        try:
            _, trace = ae_qipm_solve(inst, start, ipm_cfg, gap_target=bench.condnum_gap)
        except QipmError as e:
            single_failed = e.reason
            trace = e.trace
            logger.warning('single run on %s failed: %s', inst.name, e.message)
        single = [trace] if trace is not None else []
        rows.extend(_cond_rows('single', label, single))
        kappas = [k for t in single for k in t.kappa_history]
        growth = kappas[-1] / kappas[0] if len(kappas) >= 2 else float('nan')

        try:
            _, state = ir_ae_qipm(inst, start, ipm_cfg, cfg['noise'], refine_cfg)
            rows.extend(_cond_rows('refined', label, state.traces))
            kappa0, kappa_ref = state.kappa0, state.kappa_ref
            ratio = state.later_max_cond / kappa_ref
            refined_failed = ''
        except QipmError as e:
            kappa0, kappa_ref, ratio, refined_failed = float('nan'), float('nan'), float('nan'), e.reason
        summary[label] = {'single_growth': growth, 'single_failure': single_failed,
                          'refined_kappa0': kappa0, 'refined_kappa_ref': kappa_ref,
                          'refined_later_over_ref': ratio, 'refined_failure': refined_failed}

    df = pd.DataFrame(rows, columns=['instance', 'run', 'stage', 'iter', 'mu', 'cond_M'])
    deg = summary['degenerate']
    assertions = {
        'single_run_growth_ge_100': bool(not deg['single_failure'] and deg['single_growth'] >= 100.0),
        'refined_bounded_10x': bool(not deg['refined_failure'] and deg['refined_later_over_ref'] <= 10.0),
    }
    result = StudyResult(f"condnum_{spec.seed}", df, assertions, summary)
    result.write(out_dir)
    return result


# ---- drift and projection ----

def run_drift_study(n_list: Sequence[int] = (16, 32), seeds: Sequence[int] = (0, 1, 2),
                    config: Optional[Dict[str, Any]] = None, out_dir: Optional[str] = None) -> StudyResult:
    """Emulated quantum solves to gap zeta_tilde; drift, its projection and the perturbation diagnostic."""
    cfg = _configs(config)
    ipm_cfg = replace(cfg['ipm'], solver=QUANTUM, record_condition='never', check_every=1)
    rows: List[Dict[str, Any]] = []
    for n in n_list:
        for seed in seeds:
            inst, start, _ = generate_instance(InstanceSpec(n=int(n), m=_m_for(int(n), 0.5), seed=int(seed)))
            row: Dict[str, Any] = {'n': int(n), 'seed': int(seed), 'failed': False, 'reason': ''}
            try:
                final, trace = ae_qipm_solve(inst, start, ipm_cfg, replace(cfg['noise'], seed=int(seed)),
                                             gap_target=cfg['refine'].zeta_tilde)
                k = trace.iterations
                residual = float(np.linalg.norm(dual_residual(inst, final.y, final.s), np.inf))
                y_p, s_p = project_dual(inst, final.s)
                projected = float(np.linalg.norm(dual_residual(inst, y_p, s_p), np.inf))
                checked = [r for r in trace.rows if 'perturb_pass' in r]
                row.update({
                    'iterations': k, 'residual_inf': residual,
                    'drift_inf': float(np.linalg.norm(final.drift, np.inf)),
                    'bound': k * 1e-9, 'projected_residual': projected,
                    'perturb_checked': len(checked), 'perturb_passed': sum(bool(r['perturb_pass']) for r in checked),
                })
            except QipmError as e:
                row.update(_failure(e))
            rows.append(row)
    df = pd.DataFrame(rows)
    ok = df[~df['failed']]
    assertions = {
        'no_failed_runs': not bool(df['failed'].any()),
        'drift_within_k_1e_9': bool((ok['residual_inf'] <= ok['bound']).all()),
        'projection_1e_12': bool((ok['projected_residual'] <= 1e-12).all()),
        'perturbation_all_pass': bool((ok['perturb_passed'] == ok['perturb_checked']).all()),
    }
    result = StudyResult('drift', df, assertions)
    result.write(out_dir)
    return result


# ---- rounding ----

def run_rounding_study(instances: int = 20, n_list: Sequence[int] = (16, 32, 64), gap: float = 1e-8,
                       config: Optional[Dict[str, Any]] = None, out_dir: Optional[str] = None) -> StudyResult:
    """Exact solves to `gap`, then partition identification and crossover against certificates."""
    cfg = _configs(config)
    ipm_cfg = replace(cfg['ipm'], solver=EXACT, record_condition='never', mu_min=1e-300)
    rows: List[Dict[str, Any]] = []
    for i in range(instances):
        n = int(n_list[i % len(n_list)])
        inst, start, cert = generate_instance(InstanceSpec(n=n, m=_m_for(n, 0.5), seed=i))
        row: Dict[str, Any] = {'n': n, 'seed': i, 'failed': False, 'reason': ''}
        try:
            final, trace = ae_qipm_solve(inst, start, ipm_cfg, gap_target=gap)
            out = round_solution(inst, final, trace.primal)
            part = out['partition']
            kkt = out['kkt']
            row.update({
                'partition_exact': tuple(part.B) == tuple(cert.partition_B) and tuple(part.N) == tuple(cert.partition_N),
                'attempts': out['attempts'],
                'objective_error': abs(out['objective'] - cert.opt_value),
                'kkt_max': max(kkt['primal_residual'], kkt['dual_residual'], kkt['complementarity'],
                               -kkt['min_x'], -kkt['min_s']),
            })
        except QipmError as e:
            row.update(_failure(e))
        rows.append(row)
    df = pd.DataFrame(rows)
    ok = df[~df['failed']]
    assertions = {
        'no_failed_runs': not bool(df['failed'].any()),
        'partition_exact': bool(ok['partition_exact'].all()),
        'kkt_1e_10': bool((ok['kkt_max'] <= 1e-10).all()),
        'objective_1e_10': bool((ok['objective_error'] <= 1e-10).all()),
    }
    result = StudyResult('rounding', df, assertions)
    result.write(out_dir)
    return result


# ---- plots ----

PLOT_KINDS = ('line', 'loglog')


def emit_plot(csv_path: str, kind: str, x: str, y: str, series: Optional[str] = None,
              out_path: Optional[str] = None, title: Optional[str] = None) -> str:
    """
    Render `y` against `x` from a study CSV as SVG, one line per value of
    `series`. Output is byte-identical for identical input.
    """
    if kind not in PLOT_KINDS:
        raise UsageError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    df = pd.read_csv(csv_path)
    for col in (x, y) + ((series,) if series else ()):
        if col not in df.columns:
            raise UnknownColumnError(f"column {col!r} not in {csv_path}", {'columns': list(df.columns)})

    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    matplotlib.rcParams['svg.hashsalt'] = 'qipm'
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    groups = [(str(key), g) for key, g in df.groupby(series, sort=True)] if series else [(y, df)]
    for label, g in groups:
        g = g.dropna(subset=[x, y]).sort_values(x)
        ax.plot(g[x], g[y], marker='o', label=label)
    if kind == 'loglog' and not df.empty:
        ax.set_xscale('log')
        ax.set_yscale('log')
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    if title:
        ax.set_title(title)
    if len(groups) > 1:
        ax.legend()
    out_path = out_path or os.path.splitext(csv_path)[0] + f"_{y}.svg"
    fig.savefig(out_path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return out_path


# ---- acceptance registry ----

def _accept_centering(cfg, out_dir):
    return [run_centering_study(samples=cfg['bench'].samples, config=cfg, out_dir=out_dir)]


def _accept_iterations(cfg, out_dir):
    return [run_iteration_study(config=cfg, out_dir=out_dir)]


def _accept_inner(cfg, out_dir):
    return [run_inner_solver_study(systems=cfg['bench'].samples, config=cfg, out_dir=out_dir)]


def _accept_refinement(cfg, out_dir):
    refine = replace(cfg['refine'], zeta=1e-10, zeta_tilde=1e-2)
    return [run_refinement_study(instances=cfg['bench'].instances, config={**cfg, 'refine': refine}, out_dir=out_dir)]


def _accept_condnum(cfg, out_dir):
    bench: BenchConfig = cfg['bench']
    n = bench.condnum_n
    return [run_condnum_study(InstanceSpec(n=n, m=max(1, n // 3), degenerate=True, seed=seed), cfg, out_dir)
            for seed in range(bench.degenerate_instances)]


def _accept_drift(cfg, out_dir):
    return [run_drift_study(config=cfg, out_dir=out_dir)]


def _accept_scaling(cfg, out_dir):
    bench: BenchConfig = cfg['bench']
    return [run_scaling_study(bench.n_list, bench.m_ratio, bench.seeds, cfg, out_dir)]


def _accept_rounding(cfg, out_dir):
    return [run_rounding_study(instances=cfg['bench'].instances, config=cfg, out_dir=out_dir)]


ACCEPTANCE_TARGETS: Dict[str, Callable[[Dict[str, Any], Optional[str]], List[StudyResult]]] = {
    'centering': _accept_centering,
    'iterations': _accept_iterations,
    'inner_solver': _accept_inner,
    'refinement': _accept_refinement,
    'condnum': _accept_condnum,
    'drift': _accept_drift,
    'scaling': _accept_scaling,
    'rounding': _accept_rounding,
}


def run_acceptance(names: Optional[Sequence[str]] = None, config: Optional[Dict[str, Any]] = None,
                   out_dir: Optional[str] = None) -> Dict[str, Any]:
    """
    Run the named acceptance targets (all by default).

    Returns:
        {
            'passed': bool,
            'targets': {name: {'passed': bool, 'assertions': {...}, 'seconds': float}}
        }
    """
    cfg = _configs(config)
    names = list(names) if names else list(ACCEPTANCE_TARGETS)
    unknown = [n for n in names if n not in ACCEPTANCE_TARGETS]
    if unknown:
        raise UsageError(f"unknown acceptance targets {unknown}; known: {sorted(ACCEPTANCE_TARGETS)}")
    out: Dict[str, Any] = {'passed': True, 'targets': {}}
    for name in names:
        t0 = time.perf_counter()
        results = ACCEPTANCE_TARGETS[name](cfg, out_dir)
        assertions: Dict[str, bool] = {}
        for res in results:
            for key, val in res.assertions.items():
                assertions[f"{res.name}.{key}"] = bool(val)
        passed = all(assertions.values())
        out['targets'][name] = {'passed': passed, 'assertions': assertions,
                                'seconds': time.perf_counter() - t0}
        out['passed'] = out['passed'] and passed
        logger.info('acceptance %s: %s', name, 'PASS' if passed else 'FAIL')
    return out
