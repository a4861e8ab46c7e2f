"""
Module: LP core
Standard-form data model for  min c^T x  s.t. Ax = b, x >= 0  and its dual
max b^T y  s.t. A^T y + s = c, s >= 0.

This module:
- Holds the immutable instance / iterate / certificate types
- Computes the encoding length L, dual residuals and gap estimates
- Generates instances with planted optimal certificates and an exactly
  central start iterate
- Reads and writes the instance JSON format
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from .errors import (DimensionMismatchError, InstanceFormatError,
                     NonIntegerDataError, RankDeficientError)
from .telemetry import get_logger

logger = get_logger('lp_core')


def _frozen(arr: Any, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Certificate:
    """Planted optimal triple and its optimal partition (0-based indices)."""

    x_star: np.ndarray
    y_star: np.ndarray
    s_star: np.ndarray
    partition_B: Tuple[int, ...]
    partition_N: Tuple[int, ...]
    opt_value: float
    undecided: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'x_star', _frozen(self.x_star))
        object.__setattr__(self, 'y_star', _frozen(self.y_star))
        object.__setattr__(self, 's_star', _frozen(self.s_star))
        object.__setattr__(self, 'partition_B', tuple(int(j) for j in self.partition_B))
        object.__setattr__(self, 'partition_N', tuple(int(j) for j in self.partition_N))
        object.__setattr__(self, 'undecided', tuple(int(j) for j in self.undecided))

    @property
    def strictly_complementary(self) -> bool:
        return not self.undecided

    def check(self, inst: 'LpInstance') -> Dict[str, float]:
        """KKT residuals of the certificate against `inst`."""
        x, y, s = self.x_star, self.y_star, self.s_star
        return {
            'primal_residual': float(np.linalg.norm(inst.A @ x - inst.b, np.inf)),
            'dual_residual': float(np.linalg.norm(inst.A.T @ y + s - inst.c, np.inf)),
            'complementarity': float(abs(x @ s)),
            'min_x': float(x.min()) if x.size else 0.0,
            'min_s': float(s.min()) if s.size else 0.0,
            'objective_gap': float(abs(inst.c @ x - inst.b @ y)),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            'x_star': self.x_star.tolist(),
            'y_star': self.y_star.tolist(),
            's_star': self.s_star.tolist(),
            'partition_B': list(self.partition_B),
            'partition_N': list(self.partition_N),
            'undecided': list(self.undecided),
            'opt_value': self.opt_value,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'Certificate':
        return cls(
            x_star=d['x_star'], y_star=d['y_star'], s_star=d['s_star'],
            partition_B=d['partition_B'], partition_N=d['partition_N'],
            opt_value=float(d['opt_value']), undecided=d.get('undecided', ()),
        )


@dataclass(frozen=True)
class LpInstance:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    name: str = 'lp'
    integer_data: bool = False
    certificate: Optional[Certificate] = None

    def __post_init__(self):
        A = _frozen(self.A)
        if A.ndim != 2:
            raise DimensionMismatchError(f"A must be a matrix, got shape {A.shape}")
        b, c = _frozen(self.b).reshape(-1), _frozen(self.c).reshape(-1)
        m, n = A.shape
        if b.shape[0] != m or c.shape[0] != n:
            raise DimensionMismatchError(
                f"inconsistent dimensions: A is {m}x{n}, b has {b.shape[0]}, c has {c.shape[0]}",
                {'m': m, 'n': n, 'len_b': b.shape[0], 'len_c': c.shape[0]})
        if m > n:
            raise DimensionMismatchError(f"standard form needs n >= m, got m={m} > n={n}", {'m': m, 'n': n})
        b.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'b', b)
        object.__setattr__(self, 'c', c)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.A, 'fro'))


@dataclass(frozen=True)
class DualIterate:
    """Dual point (y, s) at barrier parameter mu; `drift` accumulates A^T y + s - c."""

    y: np.ndarray
    s: np.ndarray
    mu: float
    drift: Optional[np.ndarray] = None

    def __post_init__(self):
        y, s = _frozen(self.y).reshape(-1), _frozen(self.s).reshape(-1)
        y.setflags(write=False)
        s.setflags(write=False)
        drift = np.zeros_like(s) if self.drift is None else np.array(self.drift, dtype=float).reshape(-1)
        if drift.shape != s.shape:
            raise DimensionMismatchError('drift must match the slack dimension')
        drift.setflags(write=False)
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"barrier parameter must be positive and finite, got {self.mu}")
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 's', s)
        object.__setattr__(self, 'drift', drift)
        object.__setattr__(self, 'mu', float(self.mu))

    @property
    def interior(self) -> bool:
        return bool(np.all(self.s > 0))

    def with_mu(self, mu: float) -> 'DualIterate':
        return DualIterate(self.y, self.s, mu, self.drift)

    def to_dict(self) -> Dict[str, Any]:
        return {'y': self.y.tolist(), 's': self.s.tolist(), 'mu': self.mu, 'drift': self.drift.tolist()}

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> 'DualIterate':
        return cls(y=d['y'], s=d['s'], mu=float(d['mu']), drift=d.get('drift'))


# ---- scalar quantities ----

def encoding_length(inst: LpInstance) -> int:
    """Binary length L of integer data: mn + m + n + sum of ceil(log2(|v|+1)) over A, c, b."""
    if not inst.integer_data:
        raise NonIntegerDataError(f"instance '{inst.name}' is not flagged as integer data")
    total = inst.m * inst.n + inst.m + inst.n
    for arr in (inst.A, inst.c, inst.b):
        if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
            raise NonIntegerDataError(f"instance '{inst.name}' has non-integral entries")
        # ceil(log2(k + 1)) == k.bit_length() for integers k >= 0
        total += sum(int(abs(v)).bit_length() for v in arr.ravel())
    return int(total)


def dual_residual(inst: LpInstance, y: np.ndarray, s: np.ndarray) -> np.ndarray:
    y, s = np.asarray(y, dtype=float), np.asarray(s, dtype=float)
    if y.shape != (inst.m,) or s.shape != (inst.n,):
        raise DimensionMismatchError('y and s must have lengths m and n')
    return inst.A.T @ y + s - inst.c


def dual_slack(inst: LpInstance, y: np.ndarray, compensated: bool = False) -> np.ndarray:
    """c - A^T y; `compensated` sums each column with math.fsum."""
    y = np.asarray(y, dtype=float)
    if not compensated:
        return inst.c - inst.A.T @ y
    prods = inst.A * y[:, None]
    return np.array([math.fsum([inst.c[j], *(-prods[:, j])]) for j in range(inst.n)])


def gap_bound(n: int, mu: float, delta: float) -> float:
    """Upper estimate mu(n + sqrt(n) delta) of x^T s near the central path."""
    if mu < 0 or delta < 0:
        raise ValueError('mu and delta must be nonnegative')
    return mu * (n + math.sqrt(n) * delta)


def primal_estimate(inst: LpInstance, iterate: DualIterate, delta_s: np.ndarray) -> np.ndarray:
    """x = mu S^-1 (e - S^-1 ds); satisfies Ax = b whenever ds is the exact Newton step."""
    s = iterate.s
    return iterate.mu / s * (1.0 - np.asarray(delta_s, dtype=float) / s)


def dual_objective(inst: LpInstance, y: np.ndarray) -> float:
    return float(math.fsum(inst.b * np.asarray(y, dtype=float)))


def support_bound_holds(cert: Certificate, L: int) -> bool:
    """Nonzero components of a basic optimal pair are at least 2^-L (compared in log2)."""
    vals = np.concatenate([cert.x_star, cert.s_star])
    nonzero = np.abs(vals[vals != 0])
    if nonzero.size == 0:
        return True
    return bool(np.log2(nonzero.min()) >= -L)


def check_full_row_rank(A: np.ndarray) -> int:
    """Rank via column-pivoted QR of A^T; raises RankDeficientError below m."""
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    if m == 0:
        return 0
    R = scipy.linalg.qr(A.T, mode='r', pivoting=True)[0]
    diag = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < m:
        raise RankDeficientError(f"A has rank {rank} < m = {m}", {'rank': rank, 'm': m})
    return rank


def normalize_by_frobenius(inst: LpInstance) -> Tuple[LpInstance, float]:
    """Scale (A, b, c) by 1/||A||_F. x and y are unchanged, s and mu scale by the same factor."""
    f = inst.frobenius_norm
    if f == 0:
        return inst, 1.0
    cert = inst.certificate
    if cert is not None:
        cert = Certificate(cert.x_star, cert.y_star, cert.s_star / f, cert.partition_B,
                           cert.partition_N, cert.opt_value / f, cert.undecided)
    scaled = LpInstance(inst.A / f, inst.b / f, inst.c / f, name=inst.name,
                        integer_data=False, certificate=cert)
    return scaled, f


def scale_iterate(iterate: DualIterate, factor: float) -> DualIterate:
    """Iterate for the instance returned by normalize_by_frobenius with that factor."""
    return DualIterate(iterate.y, iterate.s / factor, iterate.mu / factor, iterate.drift / factor)


# ---- instance generation ----

@dataclass(frozen=True)
class InstanceSpec:
    n: int
    m: int
    degenerate: bool = False
    seed: Optional[int] = None
    entry_bound: int = 10
    degenerate_count: int = 1


def generate_instance(spec: Union[InstanceSpec, Dict[str, Any]]) -> Tuple[LpInstance, DualIterate, Certificate]:
    """
    Build integer data (A, b, c) around a planted optimal triple and a start
    point exactly on the central path at mu0 = 2.

    Construction: x0 is 1 or 2 on the planted basis B and 1 elsewhere,
    s0 = mu0 / x0. The optimum keeps x* = x0 on B (zero elsewhere) and
    s* = s0 on N (zero on B), with one N entry raised so that
    (x0 - x*)^T (s0 - s*) = 0. The first row of A is s0 - s*; the other rows
    are random with zero sum over the non-basic columns, so A (x0 - x*) = 0
    and s0 - s* lies in the row space. Degenerate instances move indices D
    out of both B and N (x*_D = s*_D = 0).
    """
    if isinstance(spec, dict):
        spec = InstanceSpec(**spec)
    n, m = int(spec.n), int(spec.m)
    if m < 1 or m > n:
        raise DimensionMismatchError(f"need n >= m >= 1, got n={n}, m={m}", {'n': n, 'm': m})
    d = int(spec.degenerate_count) if spec.degenerate else 0
    if spec.degenerate and (d < 1 or n - m - d < 1):
        raise DimensionMismatchError(
            f"degenerate instance needs n >= m + {d} + 1, got n={n}, m={m}", {'n': n, 'm': m})
    bound = int(spec.entry_bound)
    rng = np.random.default_rng(spec.seed)
    mu0 = 2

    perm = rng.permutation(n)
    B, D, N = np.sort(perm[:m]), np.sort(perm[m:m + d]), np.sort(perm[m + d:])
    off = np.sort(np.concatenate([D, N])).astype(int)

    x0 = np.ones(n, dtype=np.int64)
    x0[B] = rng.integers(1, 3, size=m)
    s0 = mu0 // x0
    x_star = np.zeros(n, dtype=np.int64)
    x_star[B] = x0[B]
    s_star = np.zeros(n, dtype=np.int64)
    s_star[N] = s0[N]
    if d:
        s_star[N[0]] += d * mu0
    q = s0 - s_star

    for attempt in range(200):
        A = np.zeros((m, n), dtype=np.int64)
        A[0] = q
        for i in range(1, m):
            A[i, B] = rng.integers(-bound, bound + 1, size=m)
            A[i, off] = _zero_sum_integers(rng, off.size, bound)
        A, w = _mix_rows(rng, A, bound)
        try:
            check_full_row_rank(A)
            break
        except RankDeficientError:
            continue
    else:
        raise RankDeficientError(f"could not draw a full-row-rank A for n={n}, m={m}")

    y0 = rng.integers(-3, 4, size=m).astype(np.int64)
    b = A @ x0
    c = A.T @ y0 + s0
    y_star = y0 + w

    # exact integer self-check of the planted triple and the central start
    assert np.array_equal(A @ x_star, b)
    assert np.array_equal(A.T @ y_star + s_star, c)
    assert int(x_star @ s_star) == 0
    assert np.all(x0 * s0 == mu0)

    cert = Certificate(
        x_star=x_star, y_star=y_star, s_star=s_star,
        partition_B=B.tolist(), partition_N=N.tolist(),
        opt_value=float(c @ x_star), undecided=D.tolist(),
    )
    tag = 'deg' if spec.degenerate else 'lp'
    inst = LpInstance(A=A, b=b, c=c, name=f"{tag}_n{n}_m{m}_s{spec.seed}", integer_data=True, certificate=cert)
    start = DualIterate(y=y0, s=s0, mu=float(mu0))
    logger.debug('generated %s (L=%d, degenerate=%s)', inst.name, encoding_length(inst), spec.degenerate)
    return inst, start, cert


def _zero_sum_integers(rng: np.random.Generator, size: int, bound: int) -> np.ndarray:
    """Random integers in [-bound, bound] summing to zero."""
    if size <= 1:
        return np.zeros(size, dtype=np.int64)
    half = max(1, bound // 2)
    vals = rng.integers(-half, half + 1, size=size).astype(np.int64)
    total = int(vals.sum())
    while total != 0:
        step = -1 if total > 0 else 1
        j = int(rng.integers(size))
        if -bound <= vals[j] + step <= bound:
            vals[j] += step
            total += step
    return vals


def _mix_rows(rng: np.random.Generator, A: np.ndarray, bound: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unimodular row operations (row_i += sign * row_j) within the entry bound.
    They keep the null space and row space of A; `w` tracks the multiplier
    with A^T w equal to the original first row.
    """
    m = A.shape[0]
    w = np.zeros(m, dtype=np.int64)
    w[0] = 1
    if m == 1:
        return A, w
    for _ in range(2 * m):
        i, j = rng.choice(m, size=2, replace=False)
        sign = 1 if rng.random() < 0.5 else -1
        row = A[i] + sign * A[j]
        if np.abs(row).max() <= bound:
            A[i] = row
            w[j] -= sign * w[i]
    return A, w


# ---- instance file I/O ----

def save_instance(inst: LpInstance, path: str, start: Optional[DualIterate] = None) -> None:
    """Write the instance JSON; `start` (a strictly interior iterate) is stored alongside when given."""
    def num(arr: np.ndarray) -> List[Any]:
        if inst.integer_data:
            return [int(v) for v in arr.ravel()]
        return [float(v) for v in arr.ravel()]

    payload: Dict[str, Any] = {
        'name': inst.name,
        'm': inst.m,
        'n': inst.n,
        'A': num(inst.A),
        'b': num(inst.b),
        'c': num(inst.c),
        'integer_data': bool(inst.integer_data),
    }
    if inst.certificate is not None:
        payload['certificate'] = inst.certificate.to_dict()
    if start is not None:
        payload['start'] = start.to_dict()
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(payload, fh, indent=1)


def load_instance(path: str) -> LpInstance:
    """Load and validate an instance file; each failure kind raises its own error."""
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise InstanceFormatError(f"cannot read instance {path}: {e}")
    if not isinstance(payload, dict):
        raise InstanceFormatError(f"instance {path} must be a JSON object")
    missing = [k for k in ('m', 'n', 'A', 'b', 'c') if k not in payload]
    if missing:
        raise InstanceFormatError(f"instance {path} is missing fields {missing}")
    try:
        m, n = int(payload['m']), int(payload['n'])
        A = np.array(payload['A'], dtype=float)
        b = np.array(payload['b'], dtype=float)
        c = np.array(payload['c'], dtype=float)
    except (TypeError, ValueError) as e:
        raise InstanceFormatError(f"instance {path} has non-numeric data: {e}")
    if m > n:
        raise DimensionMismatchError(f"instance {path} has m={m} > n={n}", {'m': m, 'n': n})
    if A.size != m * n:
        raise DimensionMismatchError(f"A has {A.size} entries, expected {m}x{n}", {'m': m, 'n': n})
    A = A.reshape(m, n)
    cert = None
    if payload.get('certificate'):
        try:
            cert = Certificate.from_dict(payload['certificate'])
        except (KeyError, TypeError, ValueError) as e:
            raise InstanceFormatError(f"instance {path} has a malformed certificate: {e}")
    inst = LpInstance(A=A, b=b, c=c, name=str(payload.get('name', 'lp')),
                      integer_data=bool(payload.get('integer_data', False)), certificate=cert)
    check_full_row_rank(inst.A)
    return inst


def load_start(path: str) -> Optional[DualIterate]:
    """The start iterate stored next to an instance, or None when the file has none."""
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise InstanceFormatError(f"cannot read instance {path}: {e}")
    if not isinstance(payload, dict) or not payload.get('start'):
        return None
    try:
        return DualIterate.from_dict(payload['start'])
    except (KeyError, TypeError, ValueError) as e:
        raise InstanceFormatError(f"instance {path} has a malformed start iterate: {e}")
