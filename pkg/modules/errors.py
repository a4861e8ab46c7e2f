"""
Module: Error hierarchy
Every failure the solver stack can report, each carrying a details dict so
the CLI and the bench harness can turn it into a result record.
"""

from typing import Any, Dict, Optional


class QipmError(Exception):
    """Base class. `details` is JSON-friendly context for reports; `trace` is the partial IPM trace, if any."""

    reason = 'solver_error'
    trace = None

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'failed': True,
            'reason': self.reason,
            'error': self.message,
            'details': {k: _jsonable(v) for k, v in self.details.items()},
        }


# ---- instance data ----

class InstanceFormatError(QipmError):
    reason = 'malformed_instance'


class DimensionMismatchError(QipmError):
    reason = 'dimension_mismatch'


class RankDeficientError(QipmError):
    reason = 'rank_deficient'


class NonIntegerDataError(QipmError):
    reason = 'non_integer_data'


# ---- linear algebra ----

class SingularSystemError(QipmError):
    reason = 'singular_system'


class NonConvergenceError(QipmError):
    """Iterative solver hit its cap; `best_iterate` is the lowest-residual point seen."""

    reason = 'non_convergence'

    def __init__(self, message: str, best_iterate=None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.best_iterate = best_iterate


class DivergingSolverError(QipmError):
    """The refined solver stopped contracting. Names the offending kappa*eps product."""

    reason = 'diverging_solver'

    def __init__(self, message: str, kappa_eps: float, details: Optional[Dict[str, Any]] = None):
        details = dict(details or {})
        details['kappa_eps'] = kappa_eps
        super().__init__(message, details)
        self.kappa_eps = kappa_eps


# ---- interior point ----

class InteriorViolationError(QipmError):
    reason = 'interior_violation'


class CentralityLossError(QipmError):
    reason = 'centrality_loss'

    def __init__(self, message: str, trace=None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.trace = trace


class CenteringFailureError(QipmError):
    reason = 'centering_failure'

    def __init__(self, message: str, delta_history=None, details: Optional[Dict[str, Any]] = None):
        details = dict(details or {})
        details['delta_history'] = list(delta_history or [])
        super().__init__(message, details)
        self.delta_history = list(delta_history or [])


class CannotRefineError(QipmError):
    reason = 'cannot_refine'


class StageFailureError(QipmError):
    reason = 'stage_failure'

    def __init__(self, message: str, stage: int, cause: Optional[QipmError] = None):
        details = {'stage': stage}
        if cause is not None:
            details['cause'] = cause.to_dict()
        super().__init__(message, details)
        self.stage = stage
        self.cause = cause


class WrongPartitionError(QipmError):
    reason = 'wrong_partition'


# ---- harness / surface ----

class UnknownColumnError(QipmError):
    reason = 'unknown_column'


class UsageError(QipmError):
    reason = 'usage_error'


def _jsonable(value: Any) -> Any:
    if hasattr(value, 'tolist'):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)
