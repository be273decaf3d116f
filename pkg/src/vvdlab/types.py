"""Core domain types shared by every module.

Complex quantities (channel taps, baseband samples) are numpy ``complex128``
arrays. All containers validate on construction, freeze their arrays, and
compare by exact value, so that file round-trips can be checked bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

#: PSDU chip count of a full 127-byte packet (254 symbols x 32 chips).
FULL_PACKET_CHIPS = 8128


class TraceFormatError(ValueError):
    """Raised when a byte stream cannot be parsed (truncation, bad magic)."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TraceValidationError(ValueError):
    """Raised when parsed or constructed data violates a domain invariant."""

    def __init__(self, message: str, fieldname: Optional[str] = None):
        if fieldname is not None:
            message = f"{fieldname}: {message}"
        super().__init__(message)
        self.fieldname = fieldname


def _frozen_complex(values, fieldname: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim != 1 or arr.size == 0:
        raise TraceValidationError("expected a nonempty 1-D array", fieldname)
    if not np.all(np.isfinite(arr)):
        raise TraceValidationError("contains NaN or Inf", fieldname)
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Cir:
    """Channel impulse response: the complex FIR tap vector.

    ``pre_cursor_count`` is the index of the nominal main (dominant) tap;
    taps before it are pre-cursor taps.
    """

    taps: np.ndarray
    pre_cursor_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "taps", _frozen_complex(self.taps, "taps"))
        if not 0 <= int(self.pre_cursor_count) < self.taps.size:
            raise TraceValidationError(
                f"pre_cursor_count {self.pre_cursor_count} outside [0, {self.taps.size})",
                "pre_cursor_count",
            )
        object.__setattr__(self, "pre_cursor_count", int(self.pre_cursor_count))

    @property
    def n_taps(self) -> int:
        return self.taps.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cir):
            return NotImplemented
        return (
            self.pre_cursor_count == other.pre_cursor_count
            and np.array_equal(self.taps, other.taps)
        )

    __hash__ = None


@dataclass(frozen=True)
class Waveform:
    """Complex baseband sample vector with its chip oversampling factor."""

    samples: np.ndarray
    samples_per_chip: int

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen_complex(self.samples, "samples"))
        if int(self.samples_per_chip) < 1:
            raise TraceValidationError("samples_per_chip must be >= 1", "samples_per_chip")
        object.__setattr__(self, "samples_per_chip", int(self.samples_per_chip))

    def __len__(self) -> int:
        return self.samples.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Waveform):
            return NotImplemented
        return (
            self.samples_per_chip == other.samples_per_chip
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


def _frozen_chips(values, fieldname: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.uint8)
    if arr.ndim != 1:
        raise TraceValidationError("expected a 1-D bit array", fieldname)
    if arr.size and arr.max() > 1:
        raise TraceValidationError("chips must be 0/1", fieldname)
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TraceRecord:
    """One transmission: tx chips/waveform, rx waveform, ground-truth CIR.

    Invariant: ``len(rx) == len(tx) + N - 1`` (full linear convolution).
    ``scene_id`` keys into a depth-tensor sidecar file when the trace was
    produced by the scene generator; ``None`` otherwise.
    """

    seq_no: int
    timestamp_ms: int
    tx_chips: np.ndarray
    tx_waveform: Waveform
    rx_waveform: Waveform
    true_cir: Cir
    phase_offset_rad: float
    snr_db: float
    scene_id: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "tx_chips", _frozen_chips(self.tx_chips, "tx_chips"))
        if self.tx_chips.size != FULL_PACKET_CHIPS:
            raise TraceValidationError(
                f"expected {FULL_PACKET_CHIPS} PSDU chips, got {self.tx_chips.size}",
                "tx_chips",
            )
        n = self.true_cir.n_taps
        if len(self.rx_waveform) != len(self.tx_waveform) + n - 1:
            raise TraceValidationError(
                f"rx length {len(self.rx_waveform)} != tx length {len(self.tx_waveform)} + {n} - 1",
                "rx_waveform",
            )
        if self.tx_waveform.samples_per_chip != self.rx_waveform.samples_per_chip:
            raise TraceValidationError("tx/rx samples_per_chip mismatch", "rx_waveform")
        if not np.isfinite(self.phase_offset_rad):
            raise TraceValidationError("must be finite", "phase_offset_rad")
        if np.isnan(self.snr_db):
            raise TraceValidationError("must not be NaN (+inf = noiseless)", "snr_db")
        object.__setattr__(self, "seq_no", int(self.seq_no))
        object.__setattr__(self, "timestamp_ms", int(self.timestamp_ms))
        object.__setattr__(self, "phase_offset_rad", float(self.phase_offset_rad))
        object.__setattr__(self, "snr_db", float(self.snr_db))
        if self.scene_id is not None:
            object.__setattr__(self, "scene_id", int(self.scene_id))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TraceRecord):
            return NotImplemented
        return (
            self.seq_no == other.seq_no
            and self.timestamp_ms == other.timestamp_ms
            and np.array_equal(self.tx_chips, other.tx_chips)
            and self.tx_waveform == other.tx_waveform
            and self.rx_waveform == other.rx_waveform
            and self.true_cir == other.true_cir
            and _float_equal(self.phase_offset_rad, other.phase_offset_rad)
            and _float_equal(self.snr_db, other.snr_db)
            and self.scene_id == other.scene_id
        )

    __hash__ = None


def _float_equal(a: float, b: float) -> bool:
    # Bit-exact comparison that still treats +inf == +inf.
    return a == b or (np.isinf(a) and np.isinf(b) and np.sign(a) == np.sign(b))


@dataclass(frozen=True)
class TraceMeta:
    """Per-set metadata: sample-rate tag, tap count, oversampling, seed."""

    rate_tag: str
    n_taps: int
    samples_per_chip: int
    seed: int

    def __post_init__(self):
        if int(self.n_taps) < 1:
            raise TraceValidationError("n_taps must be >= 1", "n_taps")
        if int(self.samples_per_chip) < 1:
            raise TraceValidationError("samples_per_chip must be >= 1", "samples_per_chip")
        object.__setattr__(self, "n_taps", int(self.n_taps))
        object.__setattr__(self, "samples_per_chip", int(self.samples_per_chip))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class TraceSet:
    """An ordered take of TraceRecords sharing N and samples_per_chip."""

    records: Tuple[TraceRecord, ...]
    set_id: int
    meta: TraceMeta

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "set_id", int(self.set_id))
        prev_ts = None
        for rec in self.records:
            if rec.true_cir.n_taps != self.meta.n_taps:
                raise TraceValidationError(
                    f"record {rec.seq_no} has {rec.true_cir.n_taps} taps, set has {self.meta.n_taps}",
                    "true_cir",
                )
            if rec.tx_waveform.samples_per_chip != self.meta.samples_per_chip:
                raise TraceValidationError(
                    f"record {rec.seq_no} samples_per_chip mismatch", "tx_waveform"
                )
            if prev_ts is not None and rec.timestamp_ms <= prev_ts:
                raise TraceValidationError(
                    f"timestamps not strictly increasing at seq {rec.seq_no}", "timestamp_ms"
                )
            prev_ts = rec.timestamp_ms

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TraceSet):
            return NotImplemented
        return (
            self.set_id == other.set_id
            and self.meta == other.meta
            and len(self.records) == len(other.records)
            and all(a == b for a, b in zip(self.records, other.records))
        )

    __hash__ = None


@dataclass(frozen=True)
class EstimateRecord:
    """One technique's channel estimate for one packet.

    ``available=False`` models preamble-detection failure: no CIR exists.
    """

    seq_no: int
    technique_tag: str
    cir: Optional[Cir]
    available: bool

    def __post_init__(self):
        object.__setattr__(self, "seq_no", int(self.seq_no))
        if self.available and self.cir is None:
            raise TraceValidationError("available estimate must carry a cir", "cir")
        if not self.available and self.cir is not None:
            raise TraceValidationError("unavailable estimate must not carry a cir", "cir")

    def __eq__(self, other) -> bool:
        if not isinstance(other, EstimateRecord):
            return NotImplemented
        return (
            self.seq_no == other.seq_no
            and self.technique_tag == other.technique_tag
            and self.available == other.available
            and self.cir == other.cir
        )

    __hash__ = None


@dataclass(frozen=True)
class DepthFrame:
    """One rendered 50x90 depth tensor, keyed for the sidecar file.

    ``aligned`` marks the frame captured at the packet (block) boundary;
    the two following frames of the same block are 33/67 ms later.
    """

    frame_id: int
    block_seq: int
    aligned: bool
    grid: np.ndarray = field(repr=False)

    ROWS = 50
    COLS = 90

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.shape != (self.ROWS, self.COLS):
            raise TraceValidationError(
                f"grid shape {grid.shape} != ({self.ROWS}, {self.COLS})", "grid"
            )
        if not np.all(np.isfinite(grid)):
            raise TraceValidationError("contains NaN or Inf", "grid")
        if grid.min() < 0.0 or grid.max() > 1.0:
            raise TraceValidationError("values outside [0, 1]", "grid")
        grid = grid.copy()
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "frame_id", int(self.frame_id))
        object.__setattr__(self, "block_seq", int(self.block_seq))
        object.__setattr__(self, "aligned", bool(self.aligned))

    def __eq__(self, other) -> bool:
        if not isinstance(other, DepthFrame):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.block_seq == other.block_seq
            and self.aligned == other.aligned
            and np.array_equal(self.grid, other.grid)
        )

    __hash__ = None
