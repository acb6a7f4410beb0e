"""
Exception hierarchy for the PPSGDA package.
"""

from typing import Optional


class PpsgdaError(Exception):
    """Base class for every error raised by this package."""


class InvalidEdge(PpsgdaError, ValueError):
    """Edge endpoint outside [1, n]."""


class NotStronglyConnected(PpsgdaError, ValueError):
    """The communication digraph has more than one strongly connected component."""


class InconsistentWeights(PpsgdaError, ValueError):
    """Push-sum weights do not satisfy y_next = P y."""


class InvalidRange(PpsgdaError, ValueError):
    """Matrix product requested with s > t."""


class AlreadyMixed(PpsgdaError):
    """Residuals are at the floating-point floor; no decay rate can be fitted."""


class InvalidSet(PpsgdaError, ValueError):
    """Projection target set is empty or malformed."""


class TooLarge(PpsgdaError, ValueError):
    """Enumeration oracle asked for a dimension it cannot afford."""


class DimensionError(PpsgdaError, ValueError):
    """Vector dimensions do not match the problem."""


class InvalidSchedule(PpsgdaError, ValueError):
    """Step-size parameters violate c > 0, gamma in (0.5, 1]."""


class InfeasibleDemand(PpsgdaError, ValueError):
    """Demand outside [sum p_min, sum p_max]."""


class NotStronglyConvex(PpsgdaError, ValueError):
    """A quadratic cost coefficient a_i is not positive."""


class ConfigError(PpsgdaError, ValueError):
    """Experiment configuration failed validation."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if field_path else message)


class IoError(PpsgdaError):
    """Reading or writing an experiment file failed."""

    def __init__(self, path: Optional[str], message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
