"""802.15.4-style 2450 MHz O-QPSK/DSSS transmit and receive chain.

Bit -> symbol -> chip spreading uses the standard's 16 x 32 symbol-to-chip
table; modulation places half-sine pulses on the I rail (even chips) and on
the Q rail delayed by half a chip (odd chips). The receive side is a matched
half-sine filter with hard chip decisions and correlation despreading.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .types import FULL_PACKET_CHIPS, Waveform

#: Chip rate of the 2450 MHz O-QPSK PHY.
CHIP_RATE_HZ = 2_000_000
DEFAULT_SAMPLES_PER_CHIP = 4

PSDU_BYTES = 127
SYMBOLS_PER_BYTE = 2
CHIPS_PER_SYMBOL = 32

# IEEE 802.15.4 2450 MHz PHY symbol-to-chip table (chip c0 first, i.e.
# transmission order). Symbols 1-7 are 4-chip right rotations of symbol 0;
# symbols 8-15 invert the odd-indexed chips.
_CHIP_STRINGS = (
    "11011001110000110101001000101110",
    "11101101100111000011010100100010",
    "00101110110110011100001101010010",
    "00100010111011011001110000110101",
    "01010010001011101101100111000011",
    "00110101001000101110110110011100",
    "11000011010100100010111011011001",
    "10011100001101010010001011101101",
    "10001100100101100000011101111011",
    "10111000110010010110000001110111",
    "01111011100011001001011000000111",
    "01110111101110001100100101100000",
    "00000111011110111000110010010110",
    "01100000011101111011100011001001",
    "10010110000001110111101110001100",
    "11001001011000000111011110111000",
)

#: Preamble: 4 zero bytes (8 symbols of 0); SFD byte 0xA7, low nibble first.
PREAMBLE_SYMBOLS = (0,) * 8
SFD_SYMBOLS = (0x7, 0xA)
SYNC_SYMBOLS = PREAMBLE_SYMBOLS + SFD_SYMBOLS
SYNC_CHIP_COUNT = len(SYNC_SYMBOLS) * CHIPS_PER_SYMBOL  # 320
FRAME_CHIP_COUNT = SYNC_CHIP_COUNT + FULL_PACKET_CHIPS  # 8448


@dataclass(frozen=True)
class PnTable:
    """The 16 x 32 spreading table as a (16, 32) uint8 array."""

    sequences: np.ndarray

    def __post_init__(self):
        seq = np.asarray(self.sequences, dtype=np.uint8)
        if seq.shape != (16, CHIPS_PER_SYMBOL):
            raise ValueError(f"expected (16, {CHIPS_PER_SYMBOL}) table, got {seq.shape}")
        if seq.max() > 1:
            raise ValueError("chips must be 0/1")
        if len({s.tobytes() for s in seq}) != 16:
            raise ValueError("sequences must be pairwise distinct")
        seq = seq.copy()
        seq.flags.writeable = False
        object.__setattr__(self, "sequences", seq)

    def min_distance(self) -> int:
        """Minimum pairwise Hamming distance, computed (not assumed)."""
        seq = self.sequences.astype(np.int64)
        dmin = CHIPS_PER_SYMBOL
        for i in range(16):
            d = np.abs(seq[i + 1 :] - seq[i]).sum(axis=1)
            if d.size:
                dmin = min(dmin, int(d.min()))
        return dmin

    def bipolar(self) -> np.ndarray:
        return 2.0 * self.sequences.astype(np.float64) - 1.0


def standard_table() -> PnTable:
    rows = [[int(c) for c in s] for s in _CHIP_STRINGS]
    return PnTable(np.array(rows, dtype=np.uint8))


_TABLE = standard_table()


def bytes_to_symbols(payload: bytes) -> np.ndarray:
    """Split octets into 4-bit symbols, low nibble first (standard order)."""
    arr = np.frombuffer(bytes(payload), dtype=np.uint8)
    out = np.empty(2 * arr.size, dtype=np.uint8)
    out[0::2] = arr & 0x0F
    out[1::2] = arr >> 4
    return out


def symbols_to_bytes(symbols: np.ndarray) -> bytes:
    symbols = np.asarray(symbols, dtype=np.uint8)
    if symbols.size % 2:
        raise ValueError("symbol count must be even")
    return ((symbols[0::2] & 0x0F) | (symbols[1::2] << 4)).astype(np.uint8).tobytes()


def spread(psdu: bytes, table: Optional[PnTable] = None) -> np.ndarray:
    """Map a 127-byte PSDU to its 8128-chip spreading sequence."""
    if len(psdu) != PSDU_BYTES:
        raise ValueError(f"psdu must be {PSDU_BYTES} bytes, got {len(psdu)}")
    table = table or _TABLE
    return table.sequences[bytes_to_symbols(psdu)].reshape(-1)


def spread_symbols(symbols, table: Optional[PnTable] = None) -> np.ndarray:
    table = table or _TABLE
    return table.sequences[np.asarray(symbols, dtype=np.uint8)].reshape(-1)


def sync_chips(table: Optional[PnTable] = None) -> np.ndarray:
    """Chips of the known synchronization header (preamble + SFD)."""
    return spread_symbols(SYNC_SYMBOLS, table)


@dataclass(frozen=True)
class Frame:
    """A full frame: sync header chips plus the 8128 PSDU chips."""

    preamble_chips: np.ndarray
    sfd_chips: np.ndarray
    psdu: bytes
    all_chips: np.ndarray

    def __post_init__(self):
        if len(self.psdu) != PSDU_BYTES:
            raise ValueError(f"psdu must be {PSDU_BYTES} bytes")
        if self.all_chips.size != FRAME_CHIP_COUNT:
            raise ValueError(f"frame must have {FRAME_CHIP_COUNT} chips")


def build_frame(psdu: bytes, table: Optional[PnTable] = None) -> Frame:
    table = table or _TABLE
    preamble = spread_symbols(PREAMBLE_SYMBOLS, table)
    sfd = spread_symbols(SFD_SYMBOLS, table)
    psdu_chips = spread(psdu, table)
    return Frame(
        preamble_chips=preamble,
        sfd_chips=sfd,
        psdu=bytes(psdu),
        all_chips=np.concatenate([preamble, sfd, psdu_chips]),
    )


def despread(chips: np.ndarray, table: Optional[PnTable] = None) -> Tuple[int, int]:
    """Correlate one 32-chip group against all 16 sequences.

    Returns ``(symbol, margin)`` where margin is best minus second-best
    correlation score. Ties resolve to the lowest symbol index with margin 0.
    """
    chips = np.asarray(chips, dtype=np.uint8)
    if chips.shape != (CHIPS_PER_SYMBOL,):
        raise ValueError(f"expected {CHIPS_PER_SYMBOL} chip decisions, got {chips.shape}")
    table = table or _TABLE
    scores = table.bipolar() @ (2.0 * chips - 1.0)
    order = np.argsort(-scores, kind="stable")
    best, second = int(order[0]), int(order[1])
    margin = int(round(scores[best] - scores[second]))
    return best, margin


def despread_groups(chips: np.ndarray, table: Optional[PnTable] = None):
    """Vectorized despread of ``k*32`` chips -> (symbols, margins)."""
    chips = np.asarray(chips, dtype=np.uint8)
    if chips.size % CHIPS_PER_SYMBOL:
        raise ValueError("chip count must be a multiple of 32")
    table = table or _TABLE
    groups = 2.0 * chips.reshape(-1, CHIPS_PER_SYMBOL) - 1.0
    scores = groups @ table.bipolar().T  # (k, 16)
    symbols = np.argmax(scores, axis=1).astype(np.uint8)
    part = -np.partition(-scores, 1, axis=1)
    margins = np.rint(part[:, 0] - part[:, 1]).astype(np.int64)
    return symbols, margins


def half_sine_pulse(samples_per_chip: int) -> np.ndarray:
    """Unit-peak half-sine chip pulse sampled at t = 0..spc-1."""
    t = np.arange(samples_per_chip, dtype=np.float64)
    return np.sin(np.pi * t / samples_per_chip)


def modulate(chips: np.ndarray, samples_per_chip: int = DEFAULT_SAMPLES_PER_CHIP) -> Waveform:
    """O-QPSK baseband synthesis.

    Even-indexed chips ride the I rail, odd-indexed chips the Q rail delayed
    by half a chip; one half-sine pulse per chip, unit peak amplitude.
    """
    chips = np.asarray(chips, dtype=np.uint8)
    if chips.size == 0 or chips.size % 2:
        raise ValueError("chip count must be even and nonzero")
    spc = int(samples_per_chip)
    if spc < 2 or spc % 2:
        raise ValueError("samples_per_chip must be even and >= 2 for the half-chip offset")
    half = spc // 2
    pulse = half_sine_pulse(spc)
    i_chips = 2.0 * chips[0::2].astype(np.float64) - 1.0
    q_chips = 2.0 * chips[1::2].astype(np.float64) - 1.0
    n_pairs = i_chips.size
    total = n_pairs * spc + half
    samples = np.zeros(total, dtype=np.complex128)
    i_rail = (i_chips[:, None] * pulse[None, :]).reshape(-1)
    q_rail = (q_chips[:, None] * pulse[None, :]).reshape(-1)
    samples[: n_pairs * spc] += i_rail
    samples[half : half + n_pairs * spc] += 1j * q_rail
    return Waveform(samples, spc)


def demodulate(w: Waveform) -> np.ndarray:
    """Hard chip decisions via matched half-sine filtering.

    Assumes the waveform is frame-synchronized (sample 0 = start of chip 0).
    Decision rule: matched-filter output > 0 -> chip 1, else 0, so an
    all-zero waveform deterministically decodes to all-zero chips.
    """
    spc = w.samples_per_chip
    if spc < 2 or spc % 2:
        raise ValueError("samples_per_chip must be even and >= 2")
    if len(w) < spc:
        raise ValueError("waveform shorter than one chip")
    half = spc // 2
    pulse = half_sine_pulse(spc)
    n_pairs = (len(w) - half) // spc
    if n_pairs < 1:
        raise ValueError("waveform shorter than one chip pair")
    i_scores = w.samples.real[: n_pairs * spc].reshape(n_pairs, spc) @ pulse
    q_scores = w.samples.imag[half : half + n_pairs * spc].reshape(n_pairs, spc) @ pulse
    chips = np.empty(2 * n_pairs, dtype=np.uint8)
    chips[0::2] = (i_scores > 0).astype(np.uint8)
    chips[1::2] = (q_scores > 0).astype(np.uint8)
    return chips


def frame_sample_count(samples_per_chip: int) -> int:
    return (FRAME_CHIP_COUNT // 2) * samples_per_chip + samples_per_chip // 2


def sync_sample_count(samples_per_chip: int) -> int:
    """Tx samples that depend only on sync-header chips (payload-free prefix)."""
    return (SYNC_CHIP_COUNT // 2) * samples_per_chip


def modulate_frame(frame: Frame, samples_per_chip: int = DEFAULT_SAMPLES_PER_CHIP) -> Waveform:
    return modulate(frame.all_chips, samples_per_chip)


def decode_frame(
    chips: np.ndarray,
    reference: Optional[np.ndarray] = None,
    table: Optional[PnTable] = None,
) -> Tuple[bytes, Optional[np.ndarray]]:
    """Despread 8128 PSDU chip decisions into the 127-byte PSDU.

    When ``reference`` (the transmitted chips) is supplied, also returns the
    per-chip error mask used for chip-error-rate accounting.
    """
    chips = np.asarray(chips, dtype=np.uint8)
    if chips.size != FULL_PACKET_CHIPS:
        raise ValueError(f"expected {FULL_PACKET_CHIPS} psdu chips, got {chips.size}")
    symbols, _ = despread_groups(chips, table)
    psdu = symbols_to_bytes(symbols)
    mask = None
    if reference is not None:
        reference = np.asarray(reference, dtype=np.uint8)
        if reference.size != FULL_PACKET_CHIPS:
            raise ValueError("reference chip count mismatch")
        mask = chips != reference
    return psdu, mask
