"""Channel-estimation laboratory for an 802.15.4-style O-QPSK/DSSS link."""

from .types import (
    Cir,
    DepthFrame,
    EstimateRecord,
    TraceFormatError,
    TraceMeta,
    TraceRecord,
    TraceSet,
    TraceValidationError,
    Waveform,
)

__all__ = [
    "Cir",
    "DepthFrame",
    "EstimateRecord",
    "TraceFormatError",
    "TraceMeta",
    "TraceRecord",
    "TraceSet",
    "TraceValidationError",
    "Waveform",
]

__version__ = "0.1.0"
