"""
Module: Dense linear algebra
Exact solver oracle, the classical CG baseline and condition numbers for the
two Newton-system forms.

The augmented matrix [[S^2, A^T], [A, 0]] is a saddle-point matrix with m
negative eigenvalues, so it is factored as symmetric indefinite (LDL^T with
Bunch-Kaufman pivoting). The normal equations A S^-2 A^T are SPD and use
Cholesky.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from .config import cond_cap
from .errors import NonConvergenceError, SingularSystemError
from .telemetry import get_logger

logger = get_logger('dense_la')

AUGMENTED = 'augmented'
NORMAL_EQUATIONS = 'normal_equations'
_KINDS = (AUGMENTED, NORMAL_EQUATIONS)

PIVOT_TOL = 1e-14
_RUIZ_PASSES = 5
_REFINE_STEPS = 2


@dataclass(frozen=True, eq=False)
class SymmetricSystem:
    M: np.ndarray
    kind: str = AUGMENTED

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        M = np.array(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"system matrix must be square, got shape {M.shape}")
        # exact symmetry: mirror the upper triangle
        M = np.triu(M) + np.triu(M, 1).T
        M.setflags(write=False)
        object.__setattr__(self, 'M', M)

    @property
    def order(self) -> int:
        return self.M.shape[0]

    @classmethod
    def augmented(cls, A: np.ndarray, s: np.ndarray) -> 'SymmetricSystem':
        """[[S^2, A^T], [A, 0]] for slacks s."""
        A = np.asarray(A, dtype=float)
        m, n = A.shape
        M = np.zeros((n + m, n + m))
        M[:n, :n] = np.diag(np.asarray(s, dtype=float) ** 2)
        M[:n, n:] = A.T
        M[n:, :n] = A
        return cls(M, AUGMENTED)

    @classmethod
    def normal_equations(cls, A: np.ndarray, s: np.ndarray) -> 'SymmetricSystem':
        """A S^-2 A^T for slacks s."""
        A = np.asarray(A, dtype=float)
        As = A / np.asarray(s, dtype=float)
        return cls(As @ As.T, NORMAL_EQUATIONS)

    # ---- cached factorizations ----

    @cached_property
    def _scaling(self) -> np.ndarray:
        """Symmetric Ruiz equilibration: D M D with unit row max-norms."""
        d = np.ones(self.order)
        M = self.M
        for _ in range(_RUIZ_PASSES):
            row_max = np.abs(M).max(axis=1) if self.order else np.ones(0)
            r = np.where(row_max > 0, 1.0 / np.sqrt(np.where(row_max > 0, row_max, 1.0)), 1.0)
            d *= r
            M = r[:, None] * M * r[None, :]
        return d

    @cached_property
    def _factor(self):
        d = self._scaling
        Ms = d[:, None] * self.M * d[None, :]
        scale = float(np.abs(Ms).sum(axis=1).max()) if self.order else 0.0
        threshold = PIVOT_TOL * max(scale, 1.0)
        if self.kind == NORMAL_EQUATIONS:
            try:
                c, lower = scipy.linalg.cho_factor(Ms, lower=True, check_finite=True)
            except np.linalg.LinAlgError as e:
                raise SingularSystemError(f"normal equations not positive definite: {e}", {'order': self.order})
            min_pivot = float(np.min(np.diag(c)) ** 2) if self.order else 1.0
            if min_pivot < threshold:
                raise SingularSystemError('near-singular normal equations', {'min_pivot': min_pivot, 'threshold': threshold})
            return ('cho', (c, lower))

        lu, dmat, perm = scipy.linalg.ldl(Ms, lower=True)
        lower_tri = lu[perm]
        blocks, min_pivot = _block_diagonal(dmat)
        if min_pivot < threshold:
            raise SingularSystemError('near-singular augmented system', {'min_pivot': min_pivot, 'threshold': threshold})
        return ('ldl', (lower_tri, blocks, perm))

    @cached_property
    def kappa(self) -> float:
        return condition_number(self)


def _block_diagonal(dmat: np.ndarray) -> Tuple[np.ndarray, float]:
    """Banded (1, 1) storage of the block-diagonal LDL factor and its smallest |eigenvalue|."""
    k = dmat.shape[0]
    ab = np.zeros((3, k))
    ab[1] = np.diag(dmat)
    if k > 1:
        ab[0, 1:] = np.diag(dmat, 1)
        ab[2, :-1] = np.diag(dmat, -1)
    min_pivot = np.inf
    i = 0
    while i < k:
        if i + 1 < k and dmat[i + 1, i] != 0:
            ev = np.linalg.eigvalsh(dmat[i:i + 2, i:i + 2])
            min_pivot = min(min_pivot, float(np.abs(ev).min()))
            i += 2
        else:
            min_pivot = min(min_pivot, abs(float(dmat[i, i])))
            i += 1
    return ab, (min_pivot if k else 1.0)


def _solve_scaled(sys: SymmetricSystem, rhs: np.ndarray) -> np.ndarray:
    method, data = sys._factor
    d = sys._scaling
    b = d * rhs
    if method == 'cho':
        u = scipy.linalg.cho_solve(data, b)
    else:
        lower_tri, blocks, perm = data
        w = scipy.linalg.solve_triangular(lower_tri, b[perm], lower=True, unit_diagonal=True)
        w = scipy.linalg.solve_banded((1, 1), blocks, w)
        v = scipy.linalg.solve_triangular(lower_tri.T, w, lower=False, unit_diagonal=True)
        u = np.empty_like(v)
        u[perm] = v
    return d * u


def exact_solve(sys: SymmetricSystem, rhs: np.ndarray) -> np.ndarray:
    """Direct solve with up to two classical refinement sweeps. Raises SingularSystemError."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (sys.order,):
        raise ValueError(f"rhs has shape {rhs.shape}, system order is {sys.order}")
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros(sys.order)
    z = _solve_scaled(sys, rhs)
    for _ in range(_REFINE_STEPS):
        r = rhs - sys.M @ z
        if np.linalg.norm(r) <= 1e-14 * rhs_norm:
            break
        z = z + _solve_scaled(sys, r)
    if not np.all(np.isfinite(z)):
        raise SingularSystemError('direct solve produced non-finite values', {'order': sys.order})
    return z


def cg_solve(sys: SymmetricSystem, rhs: np.ndarray, tol: float = 1e-10,
             max_iter: Optional[int] = None, jacobi: bool = False) -> Tuple[np.ndarray, int]:
    """
    Conjugate gradients on an SPD system, optionally Jacobi-preconditioned.

    Returns:
        (solution, matvec_count)

    Raises NonConvergenceError (with the lowest-residual iterate) after
    `max_iter` matvecs, default 50 * order.
    """
    if sys.kind != NORMAL_EQUATIONS:
        raise ValueError('cg_solve needs a positive definite (normal_equations) system')
    if tol <= 0:
        raise ValueError('tol must be positive')
    b = np.asarray(rhs, dtype=float)
    n = sys.order
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(n), 0
    max_iter = 50 * n if max_iter is None else int(max_iter)
    target = tol * b_norm

    if jacobi:
        diag = np.diag(sys.M)
        inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    else:
        inv_diag = None

    x = np.zeros(n)
    r = b.copy()
    z = r * inv_diag if jacobi else r
    p = z.copy()
    rz = float(r @ z)
    best_x, best_res = x.copy(), b_norm
    matvecs = 0
    while matvecs < max_iter:
        Ap = sys.M @ p
        matvecs += 1
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise NonConvergenceError('CG breakdown: matrix is not positive definite along a search direction',
                                      best_iterate=best_x, details={'iterations': matvecs, 'residual': best_res})
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        res = float(np.linalg.norm(r))
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= target:
            return x, matvecs
        z = r * inv_diag if jacobi else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NonConvergenceError(f"CG did not reach tol={tol:g} in {max_iter} iterations",
                              best_iterate=best_x,
                              details={'iterations': matvecs, 'residual': best_res, 'rhs_norm': b_norm})


def condition_number(sys: SymmetricSystem, cap: Optional[int] = None) -> float:
    """2-norm condition number by dense SVD; inf for singular matrices. `cap` defaults to QIPM_COND_CAP."""
    cap = cond_cap() if cap is None else int(cap)
    if sys.order > cap:
        raise ValueError(f"system order {sys.order} exceeds the condition-number cap {cap} (QIPM_COND_CAP)")
    if sys.order == 0:
        return 1.0
    sv = scipy.linalg.svdvals(sys.M)
    smax, smin = float(sv[0]), float(sv[-1])
    if smin == 0.0 or smin <= np.finfo(float).tiny:
        return float('inf')
    return smax / smin
