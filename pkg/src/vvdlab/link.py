"""End-to-end receive paths: standard decoding and decode-after-equalization.

Traces are frame-synchronized by construction; standard decoding aligns at
the nominal main tap and applies a mean-phase correction from the known sync
header (every compared technique performs carrier correction; they differ
only in channel estimation / equalization).
"""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from . import equalization, modem
from .types import Cir, TraceRecord, Waveform


class DecodeResult(NamedTuple):
    psdu: Optional[bytes]
    chip_errors: Optional[np.ndarray]  # bool mask over the 8128 psdu chips
    ok: bool


def _decode_aligned(aligned: Waveform, rec: TraceRecord) -> DecodeResult:
    chips = modem.demodulate(aligned)
    if chips.size < modem.FRAME_CHIP_COUNT:
        return DecodeResult(None, None, False)
    psdu_chips = chips[modem.SYNC_CHIP_COUNT : modem.FRAME_CHIP_COUNT]
    psdu, mask = modem.decode_frame(psdu_chips, reference=rec.tx_chips)
    return DecodeResult(psdu, mask, True)


def standard_decode(rec: TraceRecord, phase_correct: bool = True) -> DecodeResult:
    """Decode with no channel estimation or equalization."""
    spc = rec.rx_waveform.samples_per_chip
    pre = rec.true_cir.pre_cursor_count
    tx_len = len(rec.tx_waveform)
    segment = rec.rx_waveform.samples[pre : pre + tx_len]
    if segment.size < tx_len:
        segment = np.concatenate(
            [segment, np.zeros(tx_len - segment.size, dtype=np.complex128)]
        )
    if phase_correct:
        m_pre = modem.sync_sample_count(spc)
        reference = rec.tx_waveform.samples[:m_pre]
        inner = np.sum(segment[:m_pre] * np.conj(reference))
        if inner != 0:
            segment = segment * np.exp(-1j * np.angle(inner))
    return _decode_aligned(Waveform(segment, spc), rec)


def decode_with_estimate(
    rec: TraceRecord,
    estimate: Optional[Cir],
    eq_length: int = equalization.DEFAULT_EQUALIZER_TAPS,
    u_index: Optional[int] = None,
) -> DecodeResult:
    """ZF-equalize with the given estimate, then demodulate and despread.

    A missing estimate (detection failure) yields ok=False: the packet is
    counted erroneous and all its chips wrong, matching the accounting rule
    that an undetected signal is assumed erroneous.
    """
    if estimate is None:
        return DecodeResult(None, None, False)
    try:
        eq = equalization.design_zf(estimate, length=eq_length, u_index=u_index)
    except np.linalg.LinAlgError:
        return DecodeResult(None, None, False)
    flattened = equalization.equalize(rec.rx_waveform, eq)
    tx_len = len(rec.tx_waveform)
    aligned = Waveform(flattened.samples[:tx_len], flattened.samples_per_chip)
    return _decode_aligned(aligned, rec)
