"""
Module: Almost-exact interior point method
Dual log-barrier path following with full Newton steps:

    maximize b^T y + mu * sum(log s)   s.t.  A^T y + s = c

Each iteration assembles M = [[S^2, A^T], [A, 0]] with right-hand side
sigma = [0; A S^-1 e - b/mu], solves for (ds_hat, dy), steps
y += dy, s += S^2 ds_hat and shrinks mu by (1 - theta). The step error
xi = ds + A^T dy is accumulated as drift, so the iterates stay exactly
feasible for the perturbed cost c + drift.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import cond_cap
from .dense_la import SymmetricSystem, cg_solve, condition_number, exact_solve
from .errors import CentralityLossError, InteriorViolationError, QipmError, SingularSystemError
from .lp_core import DualIterate, LpInstance, dual_residual, gap_bound, primal_estimate
from .qsim import CostLedger, CostModel, LinearSolveReport, NoiseModel, QuantumLinearSolver, SOLUTION_SPACE
from .telemetry import emit_telemetry, get_logger

logger = get_logger('ipm')

EXACT = 'exact'
QUANTUM = 'quantum_emulated'
CG = 'cg_baseline'
SOLVERS = (EXACT, QUANTUM, CG)

TRACE_COLUMNS = ['iter', 'mu', 'delta', 'drift_inf', 'cond_M', 'skipped', 'qram_queries', 'classical_ops']
PERTURBATION_FACTOR = 0.033


@dataclass(frozen=True)
class IpmConfig:
    theta: Optional[float] = None          # None -> 1/(2 sqrt(n))
    mu_min: float = 1e-8
    newton_tol: float = 1e-10
    skip_threshold: float = 1e-12
    solver: str = EXACT
    record_condition: str = 'auto'         # auto | always | never
    check_every: int = 1                   # perturbation diagnostic period, noisy solver only
    max_iterations: int = 100000
    cg_jacobi: bool = True
    inner_max_iterations: int = 100

    def __post_init__(self):
        if self.theta is not None and not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must be in (0, 1), got {self.theta}")
        if not self.mu_min > 0:
            raise ValueError(f"mu_min must be positive, got {self.mu_min}")
        if not self.newton_tol > 0:
            raise ValueError('newton_tol must be positive')
        if self.skip_threshold < 0:
            raise ValueError('skip_threshold must be nonnegative')
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if self.record_condition not in ('auto', 'always', 'never'):
            raise ValueError(f"record_condition must be auto, always or never, got {self.record_condition!r}")
        if self.check_every < 0:
            raise ValueError('check_every must be nonnegative')

    def theta_for(self, n: int) -> float:
        return self.theta if self.theta is not None else 1.0 / (2.0 * math.sqrt(n))


@dataclass(frozen=True, eq=False)
class NewtonSystem:
    system: SymmetricSystem
    sigma: np.ndarray
    s_snapshot: np.ndarray
    mu_snapshot: float

    @property
    def n(self) -> int:
        return self.s_snapshot.shape[0]

    @property
    def sigma_lower(self) -> np.ndarray:
        return self.sigma[self.n:]


@dataclass
class IpmTrace:
    rows: List[Dict[str, Any]] = field(default_factory=list)
    final: Optional[DualIterate] = None
    final_delta: float = float('nan')
    final_gap_bound: float = float('nan')
    final_step: Optional[np.ndarray] = None
    primal: Optional[np.ndarray] = None
    ledger: CostLedger = field(default_factory=CostLedger)
    solver: str = EXACT
    theta: float = float('nan')

    @property
    def iterations(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> List[Any]:
        return [r.get(name) for r in self.rows]

    @property
    def delta_history(self) -> List[float]:
        return self.column('delta')

    @property
    def kappa_history(self) -> List[float]:
        return [k for k in self.column('cond_M') if k is not None and not math.isnan(k)]

    @property
    def max_cond(self) -> float:
        ks = self.kappa_history
        return max(ks) if ks else float('nan')

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.rows)
        if df.empty:
            return pd.DataFrame(columns=TRACE_COLUMNS)
        extra = [c for c in df.columns if c not in TRACE_COLUMNS]
        return df[TRACE_COLUMNS + extra]

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format='%.12g')

    def summary(self) -> Dict[str, Any]:
        return {
            'iterations': self.iterations,
            'solver': self.solver,
            'theta': self.theta,
            'final_mu': self.final.mu if self.final is not None else None,
            'final_delta': self.final_delta,
            'final_gap_bound': self.final_gap_bound,
            'max_cond': self.max_cond,
            'skipped': int(sum(bool(s) for s in self.column('skipped'))),
            'qram_queries': self.ledger.qram_queries,
            'classical_ops': self.ledger.classical_ops,
        }


# ---- Newton system ----

def assemble_newton(inst: LpInstance, iterate: DualIterate) -> NewtonSystem:
    s = iterate.s
    if s.shape != (inst.n,):
        raise ValueError(f"slack has length {s.shape[0]}, instance has n={inst.n}")
    if not np.all(s > 0):
        raise InteriorViolationError('Newton system needs strictly positive slacks',
                                     {'min_s': float(s.min()), 'mu': iterate.mu})
    system = SymmetricSystem.augmented(inst.A, s)
    sigma = np.concatenate([np.zeros(inst.n), inst.A @ (1.0 / s) - inst.b / iterate.mu])
    return NewtonSystem(system, sigma, np.array(s), iterate.mu)


def exact_direction(inst: LpInstance, s: np.ndarray, mu: float) -> Tuple[np.ndarray, np.ndarray]:
    """(dy, ds) from the normal equations (A S^-2 A^T) dy = b/mu - A S^-1 e, ds = -A^T dy."""
    normal = SymmetricSystem.normal_equations(inst.A, s)
    dy = exact_solve(normal, inst.b / mu - inst.A @ (1.0 / s))
    return dy, -(inst.A.T @ dy)


def proximity(inst: LpInstance, iterate: DualIterate, ledger: Optional[CostLedger] = None) -> float:
    """delta = ||S^-1 ds|| for the exact Newton step at (s, mu)."""
    if not iterate.interior:
        raise InteriorViolationError('proximity needs strictly positive slacks', {'min_s': float(iterate.s.min())})
    _, ds = exact_direction(inst, iterate.s, iterate.mu)
    if ledger is not None:
        m, n = inst.A.shape
        ledger.credit_classical('proximity', ops=m * m * n + m ** 3 / 3.0, m=m, n=n)
    return float(np.linalg.norm(ds / iterate.s))


def check_perturbation_conditions(s0: np.ndarray, r: np.ndarray, xi: np.ndarray, delta_tilde: float) -> Dict[str, Any]:
    """
    Sufficient conditions for an inexact step to be a valid step of the
    problem perturbed by drift r.

    Returns:
        {
            'lhs1': max |d (1 - d)|,   d = s0 / (s0 + r)
            'lhs2': max |1 - d^2|,
            'lhs3': ||xi / (s0 + r)||_2,
            'rhs1', 'rhs2', 'rhs3': float,
            'pass1', 'pass2', 'pass3', 'pass': bool
        }
    """
    s0 = np.asarray(s0, dtype=float)
    s_tilde = s0 + np.asarray(r, dtype=float)
    if not np.all(s0 > 0) or not np.all(s_tilde > 0):
        raise InteriorViolationError('perturbed slack must be strictly positive',
                                     {'min_s0': float(s0.min()), 'min_s_tilde': float(s_tilde.min())})
    d = s0 / s_tilde
    lhs1 = float(np.max(np.abs(d * (1.0 - d)))) if d.size else 0.0
    lhs2 = float(np.max(np.abs(1.0 - d * d))) if d.size else 0.0
    lhs3 = float(np.linalg.norm(np.asarray(xi, dtype=float) / s_tilde))
    rhs1, rhs2, rhs3 = PERTURBATION_FACTOR * delta_tilde, PERTURBATION_FACTOR, PERTURBATION_FACTOR * delta_tilde
    out = {
        'lhs1': lhs1, 'lhs2': lhs2, 'lhs3': lhs3,
        'rhs1': rhs1, 'rhs2': rhs2, 'rhs3': rhs3,
        'pass1': lhs1 <= rhs1, 'pass2': lhs2 <= rhs2, 'pass3': lhs3 <= rhs3,
    }
    out['pass'] = out['pass1'] and out['pass2'] and out['pass3']
    return out


def _classical_solve_ops(dim: int) -> float:
    return dim ** 3 / 3.0 + 2.0 * dim ** 2


def _normal_equations_solve(A: np.ndarray, s: np.ndarray, sigma_lower: np.ndarray) -> np.ndarray:
    """[ds_hat; dy] of the augmented system via (A S^-2 A^T) dy = -sigma_lower, ds_hat = -S^-2 A^T dy."""
    dy = exact_solve(SymmetricSystem.normal_equations(A, s), -sigma_lower)
    ds_hat = -(A.T @ dy) / (s * s)
    return np.concatenate([ds_hat, dy])


def newton_step(inst: LpInstance, iterate: DualIterate, config: Optional[IpmConfig] = None,
                noise: Optional[NoiseModel] = None, ledger: Optional[CostLedger] = None,
                solver: Optional[QuantumLinearSolver] = None, kappa: Optional[float] = None,
                newton: Optional[NewtonSystem] = None) -> Tuple[np.ndarray, np.ndarray, LinearSolveReport]:
    """
    Solve the Newton system with the configured backend.

    Returns:
        (dy, ds, LinearSolveReport), ds = S^2 ds_hat
    """
    config = config or IpmConfig()
    ledger = ledger if ledger is not None else CostLedger()
    newton = newton or assemble_newton(inst, iterate)
    m, n = inst.A.shape
    s = iterate.s
    start = ledger.snapshot()
    try:
        if config.solver == EXACT:
            try:
                z = exact_solve(newton.system, newton.sigma)
                ledger.credit_classical('dense_factorization', ops=_classical_solve_ops(n + m), dim=n + m)
            except SingularSystemError as e:
                # tiny S^2 pivots; the normal equations stay solvable while A has full row rank
                logger.debug('augmented factorization rejected (%s), using normal equations', e.message)
                z = _normal_equations_solve(inst.A, s, newton.sigma_lower)
                ledger.credit_classical('dense_factorization', ops=m * m * n + _classical_solve_ops(m),
                                        dim=m, fallback=True)
            residual = float(np.linalg.norm(newton.system.M @ z - newton.sigma))
            report = LinearSolveReport(z, 1, [float(np.linalg.norm(newton.sigma)), residual], ledger.delta(start))
            ds_hat, dy = z[:n], z[n:]
            ds = s * s * ds_hat
        elif config.solver == QUANTUM:
            if solver is None:
                solver = QuantumLinearSolver(noise, ledger, tol=config.newton_tol,
                                             max_iterations=config.inner_max_iterations)
            ledger.credit_quantum('store_slack', dim=n)
            if kappa is None and solver.noise.mode == SOLUTION_SPACE:
                kappa = newton.system.kappa
            report = solver.solve(newton.system, newton.sigma, kappa=kappa if kappa is not None else 1.0,
                                  frob_norm=inst.frobenius_norm)
            z = report.solution
            ds_hat, dy = z[:n], z[n:]
            ds = s * s * ds_hat
        else:
            normal = SymmetricSystem.normal_equations(inst.A, s)
            rhs = -newton.sigma_lower
            dy, matvecs = cg_solve(normal, rhs, tol=config.newton_tol, jacobi=config.cg_jacobi)
            ledger.credit_classical('cg_matvec', ops=matvecs * (4.0 * m * n + n + 10.0 * m),
                                    count=matvecs, m=m, n=n)
            ds = -(inst.A.T @ dy)
            residual = float(np.linalg.norm(normal.M @ dy - rhs))
            report = LinearSolveReport(dy, matvecs, [float(np.linalg.norm(rhs)), residual], ledger.delta(start))
    except QipmError as e:
        e.details.setdefault('iterate', {'mu': iterate.mu, 'min_s': float(s.min()), 'solver': config.solver})
        raise
    return dy, ds, report


# ---- main loop ----

class AlmostExactIPM:
    """
    Full-step dual path following with a pluggable linear solver.

    One instance owns the noise stream and ledger of a run; call solve()
    once per (instance, start).
    """

    def __init__(self, config: Optional[IpmConfig] = None, noise: Optional[NoiseModel] = None,
                 ledger: Optional[CostLedger] = None, cost: Optional[CostModel] = None):
        self.config = config or IpmConfig()
        self.noise = noise or NoiseModel()
        self.ledger = ledger if ledger is not None else CostLedger(cost=cost or CostModel())
        self.quantum = None
        if self.config.solver == QUANTUM:
            self.quantum = QuantumLinearSolver(self.noise, self.ledger, tol=self.config.newton_tol,
                                               max_iterations=self.config.inner_max_iterations)

    def _record_kappa(self, newton: NewtonSystem, k: int) -> float:
        mode = self.config.record_condition
        if mode == 'never':
            return float('nan')
        cap = cond_cap()
        if mode == 'always' or newton.system.order <= cap:
            return condition_number(newton.system, cap=max(cap, newton.system.order))
        if k % 10 == 0:
            return condition_number(newton.system, cap=newton.system.order)
        return float('nan')

    def solve(self, inst: LpInstance, start: DualIterate,
              gap_target: Optional[float] = None) -> Tuple[DualIterate, IpmTrace]:
        cfg = self.config
        run_start = self.ledger.snapshot()
        trace = IpmTrace(solver=cfg.solver, theta=cfg.theta_for(inst.n))
        if not start.interior:
            raise InteriorViolationError('start iterate is not strictly interior', {'min_s': float(start.s.min())})
        try:
            final = self._run(inst, start, gap_target, trace)
        except QipmError as e:
            # every failure carries the iterations completed so far
            if e.trace is None:
                trace.ledger = self.ledger.delta(run_start)
                e.trace = trace
            raise
        trace.ledger = self.ledger.delta(run_start)
        emit_telemetry({'event': 'ipm_solve', 'instance': inst.name, **trace.summary()})
        logger.info('%s: %d iterations, mu=%.3e, gap bound %.3e (%s)',
                    inst.name, trace.iterations, final.mu, trace.final_gap_bound, cfg.solver)
        return final, trace

    def _run(self, inst: LpInstance, start: DualIterate, gap_target: Optional[float],
             trace: IpmTrace) -> DualIterate:
        cfg = self.config
        ledger = self.ledger
        run_start = ledger.snapshot()
        m, n = inst.A.shape
        theta = trace.theta
        y = np.array(start.y, dtype=float)
        s = np.array(start.s, dtype=float)
        drift = np.array(start.drift, dtype=float)
        mu0 = start.mu
        mu = mu0
        trace.final = start

        if cfg.solver == QUANTUM:
            ledger.credit_quantum('qram_load', entries=m * n + m + n, dim=n)

        last_kappa: Optional[float] = None
        k = 0
        while True:
            dy_exact, ds_exact = exact_direction(inst, s, mu)
            delta = float(np.linalg.norm(ds_exact / s))
            if delta >= 0.5:
                trace.ledger = ledger.delta(run_start)
                raise CentralityLossError(
                    f"proximity {delta:.4f} >= 1/2 at iteration {k} (mu={mu:.3e})", trace=trace,
                    details={'iteration': k, 'mu': mu, 'delta': delta})
            gap = gap_bound(n, mu, delta)
            if mu <= cfg.mu_min or (gap_target is not None and gap <= gap_target) or k >= cfg.max_iterations:
                break

            it_start = ledger.snapshot()
            it = DualIterate(y, s, mu, drift)
            newton = assemble_newton(inst, it)
            kappa = self._record_kappa(newton, k)
            if not math.isnan(kappa):
                last_kappa = kappa

            row: Dict[str, Any] = {'iter': k + 1, 'mu': mu, 'delta': delta, 'cond_M': kappa,
                                   'gap_bound': gap, 'inner_iterations': 0, 'step_error': 0.0}
            skipped = float(np.linalg.norm(newton.sigma_lower)) <= cfg.skip_threshold
            if not skipped:
                if cfg.solver == QUANTUM:
                    # right-hand side A S^-1 e is a quantum matvec
                    ledger.credit_quantum('matvec', dim=n, eps=self.noise.eps_matvec)
                else:
                    ledger.credit_classical('rhs_matvec', ops=2.0 * m * n + n, m=m, n=n)
                try:
                    dy, ds, report = newton_step(inst, it, cfg, self.noise, ledger, solver=self.quantum,
                                                 kappa=last_kappa, newton=newton)
                except QipmError:
                    trace.rows.append(row)
                    raise
                y_next, s_next = y + dy, s + ds
                # step error of the increments actually applied, rounding included
                xi = (s_next - s) + inst.A.T @ (y_next - y)
                if cfg.solver == QUANTUM and cfg.check_every and k % cfg.check_every == 0:
                    row.update(self._perturbation_row(inst, s, drift, xi, mu))
                y, s = y_next, s_next
                drift = drift + xi
                ledger.credit_classical('vector_update', ops=2.0 * (n + m), dim=n + m)
                row['inner_iterations'] = report.iterations
                row['step_error'] = float(np.linalg.norm(xi, np.inf))
                if not np.all(s > 0):
                    trace.rows.append(row)
                    raise InteriorViolationError(
                        f"full Newton step left the interior at iteration {k + 1}",
                        {'iteration': k + 1, 'mu': mu, 'min_s': float(s.min())})

            k += 1
            mu = mu0 * (1.0 - theta) ** k
            step_ledger = ledger.delta(it_start)
            row.update({
                'skipped': bool(skipped),
                'drift_inf': float(np.linalg.norm(drift, np.inf)),
                'residual_inf': float(np.linalg.norm(dual_residual(inst, y, s), np.inf)),
                'qram_queries': step_ledger.qram_queries,
                'classical_ops': step_ledger.classical_ops,
            })
            trace.rows.append(row)
            trace.final = DualIterate(y, s, mu, drift)
            logger.debug('it=%d mu=%.3e delta=%.4f skipped=%s cond=%.3e', k, row['mu'], delta, skipped, kappa)

        final = DualIterate(y, s, mu, drift)
        trace.final = final
        trace.final_delta = delta
        trace.final_gap_bound = gap
        trace.final_step = ds_exact
        trace.primal = primal_estimate(inst, final, ds_exact)
        return final

    @staticmethod
    def _perturbation_row(inst: LpInstance, s: np.ndarray, drift: np.ndarray, xi: np.ndarray,
                          mu: float) -> Dict[str, Any]:
        s_tilde = s + drift
        if not np.all(s_tilde > 0):
            return {'perturb_pass': False}
        _, ds_tilde = exact_direction(inst, s_tilde, mu)
        delta_tilde = float(np.linalg.norm(ds_tilde / s_tilde))
        res = check_perturbation_conditions(s, drift, xi, delta_tilde)
        return {'perturb_lhs1': res['lhs1'], 'perturb_lhs2': res['lhs2'], 'perturb_lhs3': res['lhs3'],
                'perturb_delta': delta_tilde, 'perturb_pass': res['pass']}


def ae_qipm_solve(inst: LpInstance, start: DualIterate, config: Optional[IpmConfig] = None,
                  noise: Optional[NoiseModel] = None, ledger: Optional[CostLedger] = None,
                  gap_target: Optional[float] = None) -> Tuple[DualIterate, IpmTrace]:
    """
    Run the method from `start` until mu <= config.mu_min, or until the gap
    bound mu (n + sqrt(n) delta) drops to `gap_target` when one is given.

    Raises CentralityLossError (carrying the trace) if the proximity reaches
    1/2, InteriorViolationError if a step leaves the interior.
    """
    return AlmostExactIPM(config, noise, ledger).solve(inst, start, gap_target=gap_target)
