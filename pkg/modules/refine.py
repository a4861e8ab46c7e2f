"""
Module: Outer iterative refinement
Solves the LP to a fixed low accuracy zeta_tilde per stage and refines:

    stage 0:  solve (A, b, c) to gap <= zeta_tilde
    stage k:  s_k = c - A^T y, solve (A, b, nabla * s_k) from y' = 0,
              y <- y + y_hat / nabla,  nabla = zeta_tilde^-k

until zeta_tilde^(k+1) <= zeta. The scale is kept as the integer exponent k.

Every stage runs in the coordinates of its own start slack (see
slack_scaled), so each stage's Newton system starts from S = I and its
condition number is of the same order as in stage 0.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .dense_la import SymmetricSystem, exact_solve
from .errors import (CannotRefineError, CenteringFailureError, QipmError, RankDeficientError,
                     SingularSystemError, StageFailureError)
from .ipm import AlmostExactIPM, IpmConfig, IpmTrace, exact_direction
from .lp_core import (Certificate, DualIterate, LpInstance, dual_objective, dual_slack, gap_bound)
from .qsim import CostLedger, NoiseModel
from .telemetry import emit_telemetry, get_logger

logger = get_logger('refine')

PROJECTION_TOL = 1e-12


@dataclass(frozen=True)
class RefineConfig:
    zeta: float = 1e-10
    zeta_tilde: float = 1e-2
    center_max_steps: int = 50
    center_target: float = 0.1
    projection_tol: float = PROJECTION_TOL
    use_primal_hint: bool = True

    def __post_init__(self):
        if not (0.0 < self.zeta_tilde < 1.0):
            raise ValueError(f"zeta_tilde must be in (0, 1), got {self.zeta_tilde}")
        if not (0.0 < self.zeta <= self.zeta_tilde):
            raise ValueError(f"zeta must be in (0, zeta_tilde], got {self.zeta}")
        if self.center_max_steps < 0:
            raise ValueError('center_max_steps must be nonnegative')
        if not (0.0 < self.center_target <= 0.5):
            raise ValueError(f"center_target must be in (0, 1/2], got {self.center_target}")

    @property
    def stage_count(self) -> int:
        """ceil(log zeta / log zeta_tilde), robust to rounding of the logs."""
        ratio = math.log(self.zeta) / math.log(self.zeta_tilde)
        return max(1, math.ceil(ratio - 1e-9))


@dataclass
class RefinementState:
    zeta: float
    zeta_tilde: float
    stage: int = 0
    nabla_exponent: int = 0
    y_acc: Optional[np.ndarray] = None
    stage_reports: List[Dict[str, Any]] = field(default_factory=list)
    gap_history: List[float] = field(default_factory=list)
    traces: List[IpmTrace] = field(default_factory=list)
    primal: Optional[np.ndarray] = None
    ledger: CostLedger = field(default_factory=CostLedger)

    @property
    def nabla(self) -> float:
        return self.zeta_tilde ** (-self.nabla_exponent)

    @property
    def stages(self) -> int:
        return len(self.stage_reports)

    @property
    def kappa0(self) -> float:
        return self.stage_reports[0]['kappa0'] if self.stage_reports else float('nan')

    @property
    def kappa_ref(self) -> float:
        """Largest kappa(M) of stage 0, i.e. what one early-terminated solve to zeta_tilde needs."""
        return self.stage_reports[0]['max_cond'] if self.stage_reports else float('nan')

    @property
    def max_cond(self) -> float:
        ks = [r['max_cond'] for r in self.stage_reports if not math.isnan(r['max_cond'])]
        return max(ks) if ks else float('nan')

    @property
    def later_max_cond(self) -> float:
        """Largest kappa(M) over stages 1, 2, ...; nan for a single stage."""
        ks = [r['max_cond'] for r in self.stage_reports[1:] if not math.isnan(r['max_cond'])]
        return max(ks) if ks else float('nan')

    def to_report(self) -> Dict[str, Any]:
        return {
            'zeta': self.zeta,
            'zeta_tilde': self.zeta_tilde,
            'stages': self.stages,
            'nabla_exponent': self.nabla_exponent,
            'gap_history': list(self.gap_history),
            'stage_reports': [dict(r) for r in self.stage_reports],
            'y': self.y_acc.tolist() if self.y_acc is not None else None,
            'qram_queries': self.ledger.qram_queries,
            'classical_ops': self.ledger.classical_ops,
        }


# ---- building blocks ----

def project_dual(inst: LpInstance, s_k: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """y = argmin ||A^T y + s_k - c|| via A A^T y = A (c - s_k); s = c - A^T y."""
    normal = SymmetricSystem.normal_equations(inst.A, np.ones(inst.n))
    try:
        y = exact_solve(normal, inst.A @ (inst.c - np.asarray(s_k, dtype=float)))
    except SingularSystemError as e:
        raise RankDeficientError(f"projection needs full row rank: {e.message}", e.details)
    return y, dual_slack(inst, y, compensated=True)


def build_refining_problem(inst: LpInstance, y_k: np.ndarray, nabla: float) -> Tuple[LpInstance, DualIterate]:
    """(A, b, nabla * s_k) with the trivially feasible start y' = 0, s' = nabla * s_k."""
    if not nabla > 0:
        raise ValueError(f"nabla must be positive, got {nabla}")
    s_k = dual_slack(inst, y_k, compensated=True)
    if not np.all(s_k > 0):
        bad = np.flatnonzero(s_k <= 0)
        raise CannotRefineError('stage solution left the dual interior',
                                {'indices': bad.tolist(), 'min_s': float(s_k.min())})
    c_ref = nabla * s_k
    refined = LpInstance(inst.A, inst.b, c_ref, name=f"{inst.name}_refine", integer_data=False)
    start = DualIterate(np.zeros(inst.m), c_ref, initial_mu(refined, c_ref))
    return refined, start


@dataclass(frozen=True, eq=False)
class ScaledStage:
    """A stage problem in start-slack coordinates and the maps back to the unscaled one."""

    problem: LpInstance
    start: DualIterate
    w: np.ndarray
    beta: float

    def unscale_y(self, y_bar: np.ndarray) -> np.ndarray:
        return self.beta * np.asarray(y_bar, dtype=float)

    def unscale_x(self, x_bar: np.ndarray) -> np.ndarray:
        return self.w * np.asarray(x_bar, dtype=float)

    def scale_x(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) / self.w


def slack_scaled(problem: LpInstance, start: DualIterate) -> ScaledStage:
    """
    The same LP with columns scaled by w = 1/s0 and rows by beta, where
    beta keeps ||A_bar||_F = ||A||_F:

        A_bar = beta A W,  b_bar = beta b,  c_bar = W c,
        x = W x_bar,  y = beta y_bar,  s = s_bar / w

    The start maps to s_bar = e. Barrier parameter, proximity and the
    central path are unchanged; only the Newton matrix is rebalanced.
    """
    if not start.interior:
        raise CannotRefineError('scaling needs a strictly interior start', {'min_s': float(start.s.min())})
    w = 1.0 / start.s
    A_w = problem.A * w
    beta = problem.frobenius_norm / float(np.linalg.norm(A_w, 'fro'))
    scaled = LpInstance(beta * A_w, beta * problem.b, problem.c * w, name=f"{problem.name}_scaled",
                        integer_data=False)
    y_bar = start.y / beta
    s_bar = dual_slack(scaled, y_bar)
    return ScaledStage(scaled, DualIterate(y_bar, s_bar, start.mu, start.drift * w), w, beta)


def initial_mu(inst: LpInstance, s: np.ndarray, primal_hint: Optional[np.ndarray] = None) -> float:
    """mu = s^T x / n for the hint (or the clipped least-squares solution of Ax = b); fallback ||s||^2 / n."""
    if primal_hint is not None:
        x = np.asarray(primal_hint, dtype=float)
    else:
        x = np.linalg.lstsq(inst.A, inst.b, rcond=None)[0]
    x = np.clip(x, 0.0, None)
    mu = float(s @ x) / inst.n
    if not (mu > 0 and math.isfinite(mu)):
        mu = float(s @ s) / inst.n
    return mu


def centering_steps(inst: LpInstance, start: DualIterate, max_steps: int = 50,
                    target: float = 0.5) -> Tuple[DualIterate, List[float]]:
    """Damped Newton (step 1/(1 + delta)) at fixed mu until delta <= target."""
    y = np.array(start.y, dtype=float)
    s = np.array(start.s, dtype=float)
    history: List[float] = []
    for step in range(max_steps + 1):
        dy, ds = exact_direction(inst, s, start.mu)
        delta = float(np.linalg.norm(ds / s))
        history.append(delta)
        if delta <= target:
            return DualIterate(y, s, start.mu, start.drift), history
        if step == max_steps:
            break
        alpha = 1.0 / (1.0 + delta)
        y = y + alpha * dy
        s = s + alpha * ds
    raise CenteringFailureError(f"centering did not reach delta <= {target:g} in {max_steps} steps",
                                delta_history=history, details={'mu': start.mu})


def center_start(inst: LpInstance, start: DualIterate, max_steps: int = 50,
                 primal_hint: Optional[np.ndarray] = None, target: float = 0.5) -> DualIterate:
    """
    Return a start with delta <= 1/2. A start that already qualifies is
    returned unchanged; otherwise mu is re-chosen by initial_mu and the
    slacks are centered with damped Newton steps.
    """
    return _center(inst, start, max_steps, primal_hint, target)[0]


def _center(inst: LpInstance, start: DualIterate, max_steps: int,
            primal_hint: Optional[np.ndarray], target: float = 0.5) -> Tuple[DualIterate, List[float]]:
    if not start.interior:
        raise CannotRefineError('centering needs a strictly interior start', {'min_s': float(start.s.min())})
    _, ds = exact_direction(inst, start.s, start.mu)
    delta = float(np.linalg.norm(ds / start.s))
    if delta <= target:
        return start, [delta]
    mu = initial_mu(inst, start.s, primal_hint)
    try:
        centered, history = centering_steps(inst, start.with_mu(mu), max_steps, target)
    except CenteringFailureError:
        if primal_hint is None:
            raise
        # retry with the least-squares barrier parameter
        centered, history = centering_steps(inst, start.with_mu(initial_mu(inst, start.s)), max_steps, target)
    logger.debug('centered %s in %d steps (mu=%.3e)', inst.name, len(history) - 1, centered.mu)
    return centered, history


# ---- main loop ----

class IterativeRefinement:
    """Stage loop around AlmostExactIPM; one ledger and noise stream across all stages."""

    def __init__(self, ipm_config: Optional[IpmConfig] = None, noise: Optional[NoiseModel] = None,
                 refine_config: Optional[RefineConfig] = None, ledger: Optional[CostLedger] = None):
        self.ipm_config = ipm_config or IpmConfig()
        self.refine_config = refine_config or RefineConfig()
        self.ipm = AlmostExactIPM(self.ipm_config, noise, ledger)
        self.ledger = self.ipm.ledger

    def solve(self, inst: LpInstance, start: DualIterate,
              certificate: Optional[Certificate] = None) -> Tuple[DualIterate, RefinementState]:
        rc = self.refine_config
        if rc.zeta < 1e-10:
            logger.warning('zeta=%g is below the binary64 refinement floor 1e-10', rc.zeta)
        run_start = self.ledger.snapshot()
        state = RefinementState(zeta=rc.zeta, zeta_tilde=rc.zeta_tilde)
        n = inst.n

        start_delta = float(np.linalg.norm(exact_direction(inst, start.s, start.mu)[1] / start.s))
        gap_before = gap_bound(n, start.mu, start_delta)
        state.gap_history.append(gap_before)

        y_acc = np.zeros(inst.m)
        x_hint: Optional[np.ndarray] = None
        k = 0
        while True:
            centering = 0
            try:
                if k == 0:
                    stage = slack_scaled(inst, start)
                    stage_start = stage.start
                else:
                    problem, refining_start = build_refining_problem(inst, y_acc, state.zeta_tilde ** (-k))
                    stage = slack_scaled(problem, refining_start)
                    hint = stage.scale_x(x_hint) if (x_hint is not None and rc.use_primal_hint) else None
                    stage_start = stage.start
                    if hint is not None:
                        stage_start = stage_start.with_mu(initial_mu(stage.problem, stage_start.s, hint))
                    stage_start, history = _center(stage.problem, stage_start, rc.center_max_steps,
                                                   hint, rc.center_target)
                    centering = len(history) - 1
                y_hat, trace = self._stage_solve(stage.problem, stage_start)
                y_bar, residual = self._project(stage.problem, y_hat)
            except QipmError as e:
                logger.warning('refinement stage %d failed: %s', k, e.message)
                raise StageFailureError(f"refinement stage {k} failed: {e.message}", stage=k, cause=e)

            scale = state.zeta_tilde ** k
            y_acc = y_acc + stage.unscale_y(y_bar) * scale
            state.nabla_exponent = k
            state.stage = k
            state.y_acc = y_acc
            state.traces.append(trace)
            x_hint = stage.unscale_x(trace.primal)
            state.primal = x_hint

            gap_after = trace.final_gap_bound * scale
            state.gap_history.append(gap_after)
            report = {
                'stage': k,
                'nabla_exponent': k,
                'gap_before': gap_before,
                'gap_after': gap_after,
                'ipm_iterations': trace.iterations,
                'max_cond': trace.max_cond,
                'kappa0': trace.kappa_history[0] if trace.kappa_history else float('nan'),
                'qram_queries': trace.ledger.qram_queries,
                'classical_ops': trace.ledger.classical_ops,
                'centering_steps': centering,
                'mu_start': stage_start.mu,
                'row_scale': stage.beta,
                'projection_residual': residual,
            }
            if certificate is not None:
                report['objective_error'] = abs(certificate.opt_value - dual_objective(inst, y_acc))
            state.stage_reports.append(report)
            logger.info('stage %d: %d iterations, gap %.3e -> %.3e, max cond %.3e',
                        k, trace.iterations, gap_before, gap_after, trace.max_cond)
            gap_before = gap_after

            if state.zeta_tilde ** (k + 1) <= rc.zeta * (1.0 + 1e-9):
                break
            k += 1

        s_final = dual_slack(inst, y_acc, compensated=True)
        final = DualIterate(y_acc, s_final, max(trace.final.mu * state.zeta_tilde ** k, np.finfo(float).tiny))
        state.ledger = self.ledger.delta(run_start)
        emit_telemetry({'event': 'ir_solve', 'instance': inst.name, 'stages': state.stages,
                        'gap': state.gap_history[-1], 'qram_queries': state.ledger.qram_queries,
                        'classical_ops': state.ledger.classical_ops})
        return final, state

    def _stage_solve(self, problem: LpInstance, start: DualIterate) -> Tuple[DualIterate, IpmTrace]:
        return self.ipm.solve(problem, start, gap_target=self.refine_config.zeta_tilde)

    def _project(self, problem: LpInstance, iterate: DualIterate) -> Tuple[np.ndarray, float]:
        residual = float(np.linalg.norm(iterate.y @ problem.A + iterate.s - problem.c, np.inf))
        if residual <= self.refine_config.projection_tol:
            return np.array(iterate.y), residual
        y, _ = project_dual(problem, iterate.s)
        return y, residual


def ir_ae_qipm(inst: LpInstance, start: DualIterate, config: Optional[IpmConfig] = None,
               noise: Optional[NoiseModel] = None, refine_config: Optional[RefineConfig] = None,
               ledger: Optional[CostLedger] = None,
               certificate: Optional[Certificate] = None) -> Tuple[DualIterate, RefinementState]:
    """
    Refine to final accuracy zeta in ceil(log zeta / log zeta_tilde) stages.

    Stage errors are re-raised as StageFailureError carrying the stage index.
    """
    return IterativeRefinement(config, noise, refine_config, ledger).solve(inst, start, certificate)
