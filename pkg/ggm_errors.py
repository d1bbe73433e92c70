"""
Exception hierarchy shared by the structure-learning modules.

Library code raises these; the CLI and the HTTP service translate them into
exit codes and JSON error envelopes.
"""

from typing import Optional, Sequence


class GgmError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(GgmError):
    """Index out of range or matrix shape mismatch."""


class SingularConditioningError(GgmError):
    """
    The conditioning block Sigma_{S,S} could not be factorized.

    Attributes:
        subset: the offending conditioning set S
        round: learner round in which the failure happened, if known
    """

    def __init__(self, subset: Sequence[int], detail: str = '', round: Optional[int] = None):
        self.subset = tuple(int(s) for s in subset)
        self.detail = detail
        self.round = round
        super().__init__(self._message())

    def _message(self) -> str:
        msg = f"singular conditioning block for S={list(self.subset)}"
        if self.detail:
            msg += f" ({self.detail})"
        if self.round is not None:
            msg += f" in round {self.round}"
        return msg

    def at_round(self, round: int) -> 'SingularConditioningError':
        self.round = round
        self.args = (self._message(),)
        return self


class DegenerateDistributionError(GgmError):
    """A conditional variance is not strictly positive."""


class PerfectCorrelationError(GgmError):
    """A conditional correlation reached magnitude one."""


class ModelConstructionError(GgmError):
    """A named precision matrix is not positive definite."""

    def __init__(self, message: str, min_eigenvalue: float):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(message)


class GenerationFailedError(GgmError):
    """The random generator exhausted its rejection budget."""

    def __init__(self, message: str, attempts: int):
        self.attempts = int(attempts)
        super().__init__(message)


class ModelInvalidError(GgmError):
    """The model covariance cannot be factorized for sampling."""


class InsufficientSamplesError(GgmError):
    """Fewer samples than an estimator needs."""


class ConfigurationError(GgmError):
    """Learner parameters that cannot produce a valid run."""


class NoUndiscoveredNeighborsError(GgmError):
    """The conditioning set already covers every neighbor of the node."""


class UnsupportedSizeError(GgmError):
    """The exhaustive check is too expensive for this dimension."""
