"""Tail-risk toolkit for ultra-reliable low-latency wireless systems.

Submodules: ``evt`` (GEV/GPD fitting), ``risk`` (VaR, CVaR, EVaR),
``rsl`` (risk-sensitive learning and an mmWave simulator), ``snc``
(effective bandwidth, Mellin delay bounds, queue simulator), ``metadist``
(meta distribution of the success probability), ``mecsim`` (MEC queue
under drift-plus-penalty control), ``assoc`` (multi-connectivity
association) and ``cli``.
"""

from . import assoc, evt, mecsim, metadist, risk, rsl, snc
from .errors import (
    DegenerateSampleError,
    DomainError,
    InconsistentThresholdError,
    InstabilityError,
    MomentUndefinedError,
    ParameterError,
    SampleError,
    SizeError,
    TailRiskError,
    UnstableQueueError,
)
from .rng import stream

__version__ = "0.1.0"

__all__ = [
    "assoc", "evt", "mecsim", "metadist", "risk", "rsl", "snc", "stream",
    "TailRiskError", "ParameterError", "SampleError", "DegenerateSampleError",
    "MomentUndefinedError", "InconsistentThresholdError", "DomainError",
    "UnstableQueueError", "InstabilityError", "SizeError",
]
