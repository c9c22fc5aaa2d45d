"""Exception hierarchy shared by every module.

All errors derive from :class:`TailRiskError`; the CLI maps those to exit
code 2. Most also subclass :class:`ValueError` so generic callers can catch
them without importing this module.
"""


class TailRiskError(Exception):
    """Base class for domain and numeric failures."""


class ParameterError(TailRiskError, ValueError):
    """A parameter is outside its admissible range."""


class SampleError(TailRiskError, ValueError):
    """Sample set is empty, too small, or contains invalid values."""


class DegenerateSampleError(SampleError):
    """Sample carries no spread, so moment estimators are undefined."""


class MomentUndefinedError(ParameterError):
    """Requested moment does not exist for the given shape."""


class InconsistentThresholdError(ParameterError):
    """Threshold maps a GEV to a non-positive GPD scale."""


class DomainError(TailRiskError, ValueError):
    """Transform or integral diverges at the requested argument."""


class UnstableQueueError(TailRiskError):
    """Service capacity does not exceed the mean arrival rate."""


class InstabilityError(TailRiskError):
    """SNC stability condition violated.

    ``product`` holds the offending value of the arrival/service Mellin
    product (``nan`` when no stable point exists at all).
    """

    def __init__(self, message, product=float("nan")):
        super().__init__(message)
        self.product = product


class SizeError(ParameterError):
    """Instance too large for exhaustive enumeration."""
