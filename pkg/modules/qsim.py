"""
Module: Quantum subroutine emulation
Noise-injected classical oracles standing in for the quantum linear solver,
tomography, norm estimation and matrix-vector products, the iteratively
refined linear solver built from them, and the query-cost ledger.

Quantum query totals are MODEL numbers (cost formula x measured event
counts). Classical operation totals are measured counts. Reports keep the
two apart.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .dense_la import SymmetricSystem, exact_solve
from .errors import DivergingSolverError, NonConvergenceError
from .telemetry import get_logger

logger = get_logger('qsim')

SOLUTION_SPACE = 'solution_space'
RESIDUAL_SPACE = 'residual_space'

QUANTUM_EVENTS = ('qram_load', 'store_slack', 'inverse_tomography', 'norm_estimation', 'matvec')


@dataclass(frozen=True)
class NoiseModel:
    eps_tomo: float = 1e-2
    eps_norm: float = 1e-2
    eps_matvec: float = 0.0
    mode: str = RESIDUAL_SPACE
    seed: int = 0

    def __post_init__(self):
        for name in ('eps_tomo', 'eps_norm', 'eps_matvec'):
            v = getattr(self, name)
            if not (0.0 <= v < 0.5):
                raise ValueError(f"{name} must be in [0, 0.5), got {v}")
        if self.mode not in (SOLUTION_SPACE, RESIDUAL_SPACE):
            raise ValueError(f"unknown noise mode {self.mode!r}")

    @property
    def noiseless(self) -> bool:
        return self.eps_tomo == 0 and self.eps_norm == 0 and self.eps_matvec == 0

    def contraction_bound(self, kappa: float) -> float:
        """Per-iteration residual contraction the channel can guarantee."""
        if self.mode == RESIDUAL_SPACE:
            return self.eps_tomo
        return kappa * (self.eps_tomo + 2.0 * self.eps_norm)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class CostModel:
    """Constants of the query-cost formulas. `nominal_eps` replaces a zero precision."""

    tomography_c: float = 1.0
    norm_c: float = 1.0
    matvec_c: float = 1.0
    polylog_power: float = 2.0
    qram_c: float = 1.0
    nominal_eps: float = 1e-2

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")

    def queries(self, kind: str, inputs: Dict[str, Any]) -> float:
        """QRAM queries of ONE event of `kind`."""
        dim = float(inputs.get('dim', inputs.get('n', 0)))
        kappa = float(inputs.get('kappa', 1.0))
        frob = float(inputs.get('frob_norm', 1.0))
        eps = float(inputs.get('eps') or self.nominal_eps)
        if kind == 'inverse_tomography':
            return self.tomography_c * (dim / eps) * kappa * frob
        if kind == 'norm_estimation':
            return self.norm_c * kappa * frob / eps
        if kind == 'matvec':
            return self.matvec_c * max(1.0, math.log2(max(dim, 2.0) / eps)) ** self.polylog_power
        if kind == 'qram_load':
            return self.qram_c * float(inputs.get('entries', dim * dim))
        if kind == 'store_slack':
            return self.qram_c * dim
        raise ValueError(f"unknown quantum event kind {kind!r}")


@dataclass
class LedgerEvent:
    kind: str
    count: int
    inputs: Dict[str, Any]
    queries: float = 0.0
    classical_ops: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'count': self.count, 'inputs': dict(self.inputs),
                'queries': self.queries, 'classical_ops': self.classical_ops}


@dataclass
class CostLedger:
    cost: CostModel = field(default_factory=CostModel)
    qram_queries: float = 0.0
    classical_ops: float = 0.0
    events: List[LedgerEvent] = field(default_factory=list)

    def credit_quantum(self, kind: str, count: int = 1, **inputs: Any) -> None:
        if count < 0:
            raise ValueError('event count must be nonnegative')
        q = count * self.cost.queries(kind, inputs)
        self.events.append(LedgerEvent(kind, int(count), inputs, queries=q))
        self.qram_queries += q

    def credit_classical(self, kind: str, ops: float, count: int = 1, **inputs: Any) -> None:
        if ops < 0:
            raise ValueError('operation count must be nonnegative')
        self.events.append(LedgerEvent(kind, int(count), inputs, classical_ops=float(ops)))
        self.classical_ops += float(ops)

    def snapshot(self) -> 'CostLedger':
        # recorded events are never mutated
        return CostLedger(cost=self.cost, qram_queries=self.qram_queries,
                          classical_ops=self.classical_ops, events=list(self.events))

    def delta(self, since: 'CostLedger') -> 'CostLedger':
        """Events recorded after `since` was taken."""
        out = CostLedger(cost=self.cost)
        for ev in self.events[len(since.events):]:
            out.events.append(ev)
            out.qram_queries += ev.queries
            out.classical_ops += ev.classical_ops
        return out

    def merge(self, other: 'CostLedger') -> 'CostLedger':
        out = CostLedger(cost=self.cost)
        out.events = list(self.events) + list(other.events)
        out.qram_queries = self.qram_queries + other.qram_queries
        out.classical_ops = self.classical_ops + other.classical_ops
        return out

    def count(self, kind: str) -> int:
        return sum(ev.count for ev in self.events if ev.kind == kind)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'qram_queries': self.qram_queries,
            'classical_ops': self.classical_ops,
            'events': [ev.to_dict() for ev in self.events],
        }

    def to_json(self, indent: Optional[int] = None) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True, default=float)

    @classmethod
    def from_dict(cls, d: Dict[str, Any], cost: Optional[CostModel] = None) -> 'CostLedger':
        out = cls(cost=cost or CostModel())
        for e in d.get('events', []):
            out.events.append(LedgerEvent(e['kind'], int(e['count']), dict(e.get('inputs', {})),
                                          float(e.get('queries', 0.0)), float(e.get('classical_ops', 0.0))))
        out.qram_queries = float(d.get('qram_queries', sum(ev.queries for ev in out.events)))
        out.classical_ops = float(d.get('classical_ops', sum(ev.classical_ops for ev in out.events)))
        return out


def ledger_report(ledger: CostLedger, n: int, kappa: float, frob_norm: float) -> Dict[str, Any]:
    """
    Summarize a ledger and re-evaluate its quantum events at reference inputs.

    Returns:
        {
            'qram_queries': float,              # modeled, inputs as recorded
            'reference_qram_queries': float,    # modeled, kappa/frob_norm replaced
            'classical_ops': float,             # measured
            'breakdown': {kind: {'events', 'count', 'qram_queries', 'reference_qram_queries', 'classical_ops'}},
            'labels': {...},
            'reference': {'n', 'kappa', 'frob_norm'}
        }
    """
    breakdown: Dict[str, Dict[str, float]] = {}
    reference_total = 0.0
    for ev in ledger.events:
        row = breakdown.setdefault(ev.kind, {'events': 0, 'count': 0, 'qram_queries': 0.0,
                                             'reference_qram_queries': 0.0, 'classical_ops': 0.0})
        row['events'] += 1
        row['count'] += ev.count
        row['qram_queries'] += ev.queries
        row['classical_ops'] += ev.classical_ops
        if ev.kind in QUANTUM_EVENTS:
            ref_inputs = dict(ev.inputs, kappa=kappa, frob_norm=frob_norm)
            ref_inputs.setdefault('dim', n)
            ref = ev.count * ledger.cost.queries(ev.kind, ref_inputs)
            row['reference_qram_queries'] += ref
            reference_total += ref
    return {
        'qram_queries': float(ledger.qram_queries),
        'reference_qram_queries': float(reference_total),
        'classical_ops': float(ledger.classical_ops),
        'breakdown': dict(sorted(breakdown.items())),
        'labels': {'qram_queries': 'modeled quantum', 'reference_qram_queries': 'modeled quantum',
                   'classical_ops': 'measured classical'},
        'reference': {'n': n, 'kappa': kappa, 'frob_norm': frob_norm},
    }


# ---- oracles ----

def _unit(v: np.ndarray) -> np.ndarray:
    nv = np.linalg.norm(v)
    return v / nv if nv > 0 else v


def _orthogonal_perturbation(rng: np.random.Generator, p: np.ndarray, size: float) -> np.ndarray:
    """Random vector orthogonal to p with norm `size`."""
    if size == 0.0 or p.size < 2:
        return np.zeros_like(p)
    g = rng.standard_normal(p.size)
    u = _unit(p)
    g = g - (g @ u) * u
    return size * _unit(g)


def _cost_inputs(sys: SymmetricSystem, kappa: Optional[float], frob_norm: Optional[float]) -> Tuple[float, float]:
    if kappa is None:
        try:
            kappa = sys.kappa
        except ValueError:
            logger.warning('order %d above the condition-number cap; crediting kappa=1', sys.order)
            kappa = 1.0
    if frob_norm is None:
        frob_norm = float(np.linalg.norm(sys.M, 'fro'))
    return float(kappa), float(frob_norm)


def noisy_unit_solve(sys: SymmetricSystem, r: np.ndarray, noise: NoiseModel, ledger: CostLedger,
                     rng: Optional[np.random.Generator] = None, kappa: Optional[float] = None,
                     frob_norm: Optional[float] = None) -> Tuple[np.ndarray, float]:
    """
    Emulated M^-1 application to the normalized state r/||r|| followed by
    tomography and norm estimation of the result.

    solution_space: u = normalize(p + eta), eta orthogonal to p with
    ||eta|| = eps_tomo ||p||, and the norm carries relative error up to eps_norm.
    residual_space: the channel error is placed on the input state, so
    p = M^-1 (r/||r|| + xi) with ||xi|| = eps_tomo and the norm is exact.
    """
    r = np.asarray(r, dtype=float)
    r_norm = float(np.linalg.norm(r))
    if r_norm == 0.0:
        raise ValueError('noisy_unit_solve needs a nonzero right-hand side')
    rng = noise.rng() if rng is None else rng
    kappa, frob_norm = _cost_inputs(sys, kappa, frob_norm)
    r_hat = r / r_norm

    if noise.mode == RESIDUAL_SPACE:
        xi = noise.eps_tomo * _unit(rng.standard_normal(r.size)) if noise.eps_tomo > 0 else 0.0
        p = exact_solve(sys, r_hat + xi)
        p_norm = float(np.linalg.norm(p))
        u = p / p_norm
        n_p = p_norm
    else:
        p = exact_solve(sys, r_hat)
        p_norm = float(np.linalg.norm(p))
        eta = _orthogonal_perturbation(rng, p, noise.eps_tomo * p_norm)
        u = _unit(p + eta)
        rho = rng.uniform(-noise.eps_norm, noise.eps_norm) if noise.eps_norm > 0 else 0.0
        n_p = p_norm * (1.0 + rho)

    ledger.credit_quantum('inverse_tomography', dim=sys.order, kappa=kappa, frob_norm=frob_norm,
                          eps=noise.eps_tomo)
    ledger.credit_quantum('norm_estimation', dim=sys.order, kappa=kappa, frob_norm=frob_norm,
                          eps=noise.eps_norm)
    return u, n_p


def noisy_norm(v: np.ndarray, noise: NoiseModel, ledger: CostLedger, rng: np.random.Generator,
               kappa: float = 1.0, frob_norm: float = 1.0) -> float:
    nv = float(np.linalg.norm(v))
    ledger.credit_quantum('norm_estimation', dim=v.size, kappa=kappa, frob_norm=frob_norm, eps=noise.eps_norm)
    if noise.mode == RESIDUAL_SPACE or noise.eps_norm == 0:
        return nv
    return nv * (1.0 + rng.uniform(-noise.eps_norm, noise.eps_norm))


def quantum_matvec(M_or_A: np.ndarray, z: np.ndarray, noise: NoiseModel, ledger: CostLedger,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """(M z) with componentwise relative error up to eps_matvec. No classical work is credited."""
    M = np.asarray(M_or_A, dtype=float)
    z = np.asarray(z, dtype=float)
    if M.shape[1] != z.shape[0]:
        raise ValueError(f"matvec dimensions do not match: {M.shape} x {z.shape}")
    out = M @ z
    if noise.eps_matvec > 0:
        rng = noise.rng() if rng is None else rng
        out = out * (1.0 + rng.uniform(-noise.eps_matvec, noise.eps_matvec, size=out.shape))
    ledger.credit_quantum('matvec', dim=max(M.shape), eps=noise.eps_matvec)
    return out


# ---- refined solver ----

@dataclass
class LinearSolveReport:
    solution: np.ndarray
    iterations: int
    residual_history: List[float]
    ledger_delta: CostLedger

    @property
    def contraction_ratios(self) -> List[float]:
        h = self.residual_history
        return [h[i + 1] / h[i] for i in range(len(h) - 1) if h[i] > 0]


class QuantumLinearSolver:
    """
    Iteratively refined solver around the noisy oracle:
        z = 0; repeat r = sigma - M z; (u, n_p) = oracle(r); z += ||r||~ n_p u
    One noise stream per instance, seeded from the noise model.
    """

    def __init__(self, noise: Optional[NoiseModel] = None, ledger: Optional[CostLedger] = None,
                 tol: float = 1e-10, max_iterations: int = 100, stall_limit: int = 3):
        if tol <= 0:
            raise ValueError('tol must be positive')
        self.noise = noise or NoiseModel()
        self.ledger = ledger if ledger is not None else CostLedger()
        self.tol = tol
        self.max_iterations = max_iterations
        self.stall_limit = stall_limit
        self.rng = self.noise.rng()

    def solve(self, sys: SymmetricSystem, sigma: np.ndarray, kappa: Optional[float] = None,
              frob_norm: Optional[float] = None) -> LinearSolveReport:
        noise, ledger = self.noise, self.ledger
        sigma = np.asarray(sigma, dtype=float)
        start = ledger.snapshot()
        dim = sys.order
        sigma_norm = float(np.linalg.norm(sigma))
        if sigma_norm == 0.0:
            return LinearSolveReport(np.zeros(dim), 0, [0.0], ledger.delta(start))

        kappa, frob_norm = _cost_inputs(sys, kappa, frob_norm)
        kappa_eps = kappa * (noise.eps_tomo + 2.0 * noise.eps_norm)
        if noise.mode == SOLUTION_SPACE and not noise.noiseless and kappa_eps >= 1.0:
            raise DivergingSolverError(
                f"kappa*eps = {kappa_eps:.3g} >= 1: the solution-space channel cannot contract",
                kappa_eps=kappa_eps, details={'kappa': kappa, 'mode': noise.mode})

        # absolute tolerance, plus the floating-point attainable-accuracy floor
        m_norm = float(np.abs(sys.M).sum(axis=1).max())
        target = self.tol

        z = np.zeros(dim)
        r = sigma - quantum_matvec(sys.M, z, noise, ledger, self.rng)
        history = [float(np.linalg.norm(r))]
        iterations = 0
        stalls = 0
        best_z, best_res = z.copy(), history[0]
        while True:
            res = history[-1]
            floor = 64 * np.finfo(float).eps * (m_norm * float(np.linalg.norm(z)) + sigma_norm)
            if res <= target or res <= floor:
                break
            if iterations >= self.max_iterations:
                raise NonConvergenceError(
                    f"refined solver hit {self.max_iterations} iterations at residual {res:.3e}",
                    best_iterate=best_z, details={'residual_history': history, 'kappa_eps': kappa_eps})

            u, n_p = noisy_unit_solve(sys, r, noise, ledger, self.rng, kappa, frob_norm)
            n_r = noisy_norm(r, noise, ledger, self.rng, kappa, frob_norm)
            dz = (n_r * n_p) * u
            z = z + dz
            ledger.credit_classical('vector_update', ops=2 * dim, dim=dim)
            iterations += 1

            r = sigma - quantum_matvec(sys.M, z, noise, ledger, self.rng)
            new_res = float(np.linalg.norm(r))
            history.append(new_res)
            if new_res < best_res:
                best_z, best_res = z.copy(), new_res
            logger.debug('refined solve it=%d residual=%.3e', iterations, new_res)

            if np.linalg.norm(dz) <= self.tol:
                break
            stalls = stalls + 1 if new_res >= res else 0
            if stalls >= self.stall_limit:
                raise DivergingSolverError(
                    f"residual did not decrease for {stalls} consecutive iterations (kappa*eps = {kappa_eps:.3g})",
                    kappa_eps=kappa_eps, details={'residual_history': history, 'kappa': kappa})

        return LinearSolveReport(z, iterations, history, ledger.delta(start))


def refined_linear_solve(sys: SymmetricSystem, sigma: np.ndarray, tol: float = 1e-10,
                         noise: Optional[NoiseModel] = None, ledger: Optional[CostLedger] = None,
                         kappa: Optional[float] = None, frob_norm: Optional[float] = None,
                         max_iterations: int = 100) -> LinearSolveReport:
    """One-shot wrapper around QuantumLinearSolver with a fresh noise stream."""
    solver = QuantumLinearSolver(noise, ledger, tol=tol, max_iterations=max_iterations)
    return solver.solve(sys, sigma, kappa=kappa, frob_norm=frob_norm)
