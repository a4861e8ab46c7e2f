"""
Module: Rounding
Optimal-partition identification from a near-optimal interior point and a
least-squares crossover onto an exact optimal solution.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import WrongPartitionError
from .lp_core import DualIterate, LpInstance, dual_slack
from .telemetry import get_logger

logger = get_logger('rounding')

KKT_TOL = 1e-10
CLIP_TOL = 1e-12


@dataclass(frozen=True)
class Partition:
    B: Tuple[int, ...]
    N: Tuple[int, ...]
    undecided: Tuple[int, ...] = ()
    tau: float = float('nan')

    @property
    def decided(self) -> bool:
        return not self.undecided

    def to_dict(self) -> Dict[str, Any]:
        return {'B': list(self.B), 'N': list(self.N), 'undecided': list(self.undecided), 'tau': self.tau}


def _clip(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.any(v < -CLIP_TOL):
        raise ValueError(f"{name} has entries below -{CLIP_TOL:g} (min {v.min():.3e})")
    return np.clip(v, 0.0, None)


def identify_partition(x: np.ndarray, s: np.ndarray, tau: Optional[float] = None) -> Partition:
    """
    B = {j : x_j >= tau}, N = {j : s_j >= tau}, default tau = sqrt(x^T s / n).
    Indices in both sets or in neither are reported as undecided.
    """
    x, s = _clip(x, 'x'), _clip(s, 's')
    if x.shape != s.shape:
        raise ValueError('x and s must have the same length')
    n = x.size
    if tau is None:
        tau = math.sqrt(float(x @ s) / n) if n else 0.0
        if tau == 0.0:
            tau = CLIP_TOL * max(1.0, float(x.max(initial=0.0)), float(s.max(initial=0.0)))
    in_b = x >= tau
    in_n = s >= tau
    B = tuple(int(j) for j in np.flatnonzero(in_b & ~in_n))
    N = tuple(int(j) for j in np.flatnonzero(in_n & ~in_b))
    undecided = tuple(int(j) for j in np.flatnonzero(in_b == in_n))
    if undecided:
        logger.debug('partition at tau=%.3e leaves %d undecided indices', tau, len(undecided))
    return Partition(B, N, undecided, float(tau))


def kkt_residuals(inst: LpInstance, x: np.ndarray, y: np.ndarray, s: np.ndarray) -> Dict[str, float]:
    return {
        'primal_residual': float(np.linalg.norm(inst.A @ x - inst.b, np.inf)),
        'dual_residual': float(np.linalg.norm(inst.A.T @ y + s - inst.c, np.inf)),
        'min_x': float(x.min()) if x.size else 0.0,
        'min_s': float(s.min()) if s.size else 0.0,
        'complementarity': float(abs(x @ s)),
    }


def kkt_holds(res: Dict[str, float], tol: float = KKT_TOL) -> bool:
    return (res['primal_residual'] <= tol and res['dual_residual'] <= tol
            and res['min_x'] >= -tol and res['min_s'] >= -tol and res['complementarity'] <= tol)


def crossover(inst: LpInstance, partition: Partition, x_approx: np.ndarray,
              y_approx: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Project onto the optimal face of `partition`:
        x_B = argmin ||x_B - x~_B||  s.t. A_B x_B = b,   x_N = 0
        y   = argmin ||y - y~||      s.t. (A^T y)_B = c_B,  s = c - A^T y
    Raises WrongPartitionError when the result fails the KKT check.
    """
    if partition.undecided:
        raise WrongPartitionError('partition has undecided indices', {'undecided': list(partition.undecided)})
    B = np.array(partition.B, dtype=int)
    x_approx = np.asarray(x_approx, dtype=float)
    y_approx = np.asarray(y_approx, dtype=float)

    x = np.zeros(inst.n)
    y = y_approx.copy()
    if B.size:
        A_B = inst.A[:, B]
        x_b = x_approx[B]
        # minimum-norm corrections are the projections onto the affine sets
        x[B] = x_b + scipy.linalg.lstsq(A_B, inst.b - A_B @ x_b)[0]
        y = y_approx + scipy.linalg.lstsq(A_B.T, inst.c[B] - A_B.T @ y_approx)[0]
    s = dual_slack(inst, y, compensated=True)

    res = kkt_residuals(inst, x, y, s)
    if not kkt_holds(res):
        raise WrongPartitionError('crossover result violates the optimality conditions',
                                  {'kkt': res, 'B': list(partition.B), 'N': list(partition.N)})
    return x, y, s


def round_solution(inst: LpInstance, iterate: DualIterate, primal: np.ndarray,
                   tau: Optional[float] = None, retries: int = 3) -> Dict[str, Any]:
    """
    Partition + crossover from a final iterate and its primal estimate,
    retrying with tau / 10 when the partition turns out wrong.

    Returns:
        {
            'x', 'y', 's': np.ndarray,
            'partition': Partition,
            'objective': float,
            'attempts': int,
            'kkt': Dict[str, float]
        }
    """
    x_est = np.clip(np.asarray(primal, dtype=float), 0.0, None)
    s_est = np.clip(iterate.s, 0.0, None)
    last_error: Optional[WrongPartitionError] = None
    for attempt in range(retries + 1):
        part = identify_partition(x_est, s_est, tau)
        try:
            x, y, s = crossover(inst, part, x_est, iterate.y)
        except WrongPartitionError as e:
            last_error = e
            tau = part.tau / 10.0
            logger.info('crossover attempt %d failed (%s); retrying with tau=%.3e', attempt + 1, e.message, tau)
            continue
        return {
            'x': x, 'y': y, 's': s,
            'partition': part,
            'objective': float(inst.c @ x),
            'attempts': attempt + 1,
            'kkt': kkt_residuals(inst, x, y, s),
        }
    raise last_error
