"""Zero-forcing equalizer design and application.

The equalizer c minimizes ||u - H c|| where H is the convolution matrix of
the estimated CIR and u is the all-zero target vector with a single 1 whose
position fixes the pre/post-cursor split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimation import convolution_columns, solve_least_squares
from .types import Cir, Waveform

DEFAULT_EQUALIZER_TAPS = 21


@dataclass(frozen=True)
class Equalizer:
    """FIR channel inverter: taps c and the target impulse position."""

    taps: np.ndarray
    u_index: int
    residual: float = 0.0

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.complex128)
        if taps.ndim != 1 or taps.size == 0:
            raise ValueError("equalizer taps must be a nonempty 1-D array")
        if not np.all(np.isfinite(taps)):
            raise ValueError("equalizer taps must be finite")
        if self.u_index < 0:
            raise ValueError("u_index must be nonnegative")
        taps = taps.copy()
        taps.flags.writeable = False
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "u_index", int(self.u_index))

    @property
    def n_taps(self) -> int:
        return self.taps.size


def design_zf(h: Cir, length: int = DEFAULT_EQUALIZER_TAPS, u_index: Optional[int] = None) -> Equalizer:
    """LS zero-forcing design: c = argmin ||u - H c||.

    ``u_index`` defaults to the center of the combined response (length
    L+N-1), splitting pre- and post-cursor taps evenly.
    """
    if length < 1:
        raise ValueError("equalizer length must be >= 1")
    n = h.n_taps
    rows = length + n - 1
    if u_index is None:
        u_index = rows // 2
    if not 0 <= u_index < rows:
        raise ValueError(f"u_index must be in [0, {rows})")
    hmat = convolution_columns(h.taps, length, rows)
    u = np.zeros(rows, dtype=np.complex128)
    u[u_index] = 1.0
    taps = solve_least_squares(hmat, u)
    residual = float(np.linalg.norm(u - hmat @ taps))
    return Equalizer(taps, u_index, residual)


def equalize(w: Waveform, e: Equalizer) -> Waveform:
    """Convolve with the equalizer and re-align by u_index.

    The combined response of channel and equalizer peaks at u_index, so
    dropping the first u_index output samples restores transmit timing.
    Output length equals input length (zero-padded at the tail if the
    convolution runs short).
    """
    full = np.convolve(w.samples, e.taps)
    out = full[e.u_index : e.u_index + len(w)]
    if out.size < len(w):
        out = np.concatenate([out, np.zeros(len(w) - out.size, dtype=np.complex128)])
    return Waveform(out, w.samples_per_chip)
