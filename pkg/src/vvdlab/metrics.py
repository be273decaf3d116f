"""Packet/chip error rates, estimation MSE, and aging sweeps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from . import link
from .types import FULL_PACKET_CHIPS, Cir, TraceSet


@dataclass(frozen=True)
class MetricsReport:
    """Per-technique scores over one test set.

    ``mse`` is None for techniques that produce no channel estimate
    (standard decoding) or whose estimates were never available.
    """

    technique_tag: str
    per: float
    cer: float
    mse: Optional[float]
    n_packets: int
    set_id: int

    def __post_init__(self):
        if not 0.0 <= self.per <= 1.0:
            raise ValueError("per must be in [0, 1]")
        if not 0.0 <= self.cer <= 1.0:
            raise ValueError("cer must be in [0, 1]")
        if self.mse is not None and self.mse < 0.0:
            raise ValueError("mse must be >= 0")
        if self.n_packets < 1:
            raise ValueError("n_packets must be >= 1")


def packet_error_rate(
    decoded: Sequence[Optional[bytes]], truth: Sequence[bytes]
) -> float:
    """Erroneous packets / total. A missing decode counts erroneous."""
    if len(decoded) == 0 or len(decoded) != len(truth):
        raise ValueError("need equal, nonempty decoded/truth lists")
    errors = sum(1 for d, t in zip(decoded, truth) if d is None or d != t)
    return errors / len(decoded)


def chip_error_rate(
    decided: Sequence[Optional[np.ndarray]], truth: Sequence[np.ndarray]
) -> float:
    """Erroneous chips / total chips; denominator is 8128 per packet.

    A packet with no chip decisions (undetected signal) counts as fully
    erroneous (all 8128 chips wrong).
    """
    if len(decided) == 0 or len(decided) != len(truth):
        raise ValueError("need equal, nonempty decided/truth lists")
    errors = 0
    for d, t in zip(decided, truth):
        t = np.asarray(t, dtype=np.uint8)
        if t.size != FULL_PACKET_CHIPS:
            raise ValueError(f"truth chips must have length {FULL_PACKET_CHIPS}")
        if d is None:
            errors += FULL_PACKET_CHIPS
            continue
        d = np.asarray(d, dtype=np.uint8)
        if d.size != FULL_PACKET_CHIPS:
            raise ValueError(f"decided chips must have length {FULL_PACKET_CHIPS}")
        errors += int(np.count_nonzero(d != t))
    return errors / (FULL_PACKET_CHIPS * len(decided))


def chip_error_rate_from_masks(
    masks: Sequence[Optional[np.ndarray]],
) -> float:
    """CER from per-packet error masks (None = undetected = all wrong)."""
    if len(masks) == 0:
        raise ValueError("need at least one packet")
    errors = 0
    for m in masks:
        if m is None:
            errors += FULL_PACKET_CHIPS
        else:
            if m.size != FULL_PACKET_CHIPS:
                raise ValueError(f"mask must have length {FULL_PACKET_CHIPS}")
            errors += int(np.count_nonzero(m))
    return errors / (FULL_PACKET_CHIPS * len(masks))


def bit_error_rate(decoded: Sequence[Optional[bytes]], truth: Sequence[bytes]) -> float:
    """Auxiliary BER over the 1016 payload bits per packet."""
    if len(decoded) == 0 or len(decoded) != len(truth):
        raise ValueError("need equal, nonempty decoded/truth lists")
    errors = 0
    bits_per_packet = None
    for d, t in zip(decoded, truth):
        tb = np.unpackbits(np.frombuffer(t, dtype=np.uint8))
        bits_per_packet = tb.size
        if d is None:
            errors += tb.size
        else:
            db = np.unpackbits(np.frombuffer(d, dtype=np.uint8))
            errors += int(np.count_nonzero(db != tb))
    return errors / (bits_per_packet * len(decoded))


def mse(estimates: Sequence[Cir], truths: Sequence[Cir]) -> float:
    """Mean squared estimation error: sum |h - h_hat|^2 / (z * n).

    The square of a complex error is taken as its squared modulus, the only
    reading that yields a real, nonnegative metric.
    """
    if len(estimates) == 0 or len(estimates) != len(truths):
        raise ValueError("need equal, nonempty estimate/truth lists")
    n = truths[0].n_taps
    total = 0.0
    for est, tru in zip(estimates, truths):
        if est.n_taps != n or tru.n_taps != n:
            raise ValueError("tap count mismatch")
        total += float(np.sum(np.abs(tru.taps - est.taps) ** 2))
    return total / (len(estimates) * n)


class AgingPoint(NamedTuple):
    age_blocks: int
    age_seconds: float
    mse: float
    per: float


def aging_sweep(
    tset: TraceSet,
    reference_cirs: Sequence[Cir],
    estimate_cirs: Sequence[Cir],
    ages_blocks: Sequence[int],
    block_interval_ms: int = 100,
    eq_length: int = 21,
    decode: bool = True,
) -> List[AgingPoint]:
    """Score decoding/MSE using estimates from ``age`` blocks earlier.

    All ages share the scoring window [max(ages), n) so curves are
    comparable; age 0 then equals the non-aged metric on that window.
    """
    n = len(tset.records)
    ages = sorted(set(int(a) for a in ages_blocks))
    if not ages or ages[0] < 0:
        raise ValueError("ages must be nonnegative")
    max_age = ages[-1]
    if max_age >= n:
        raise ValueError(f"trace of {n} packets too short for age {max_age}")
    window = range(max_age, n)
    points: List[AgingPoint] = []
    for age in ages:
        ests = [estimate_cirs[k - age] for k in window]
        refs = [reference_cirs[k] for k in window]
        age_mse = mse(ests, refs)
        per = float("nan")
        if decode:
            decoded = []
            truths = []
            for k in window:
                rec = tset.records[k]
                result = link.decode_with_estimate(
                    rec, estimate_cirs[k - age], eq_length=eq_length
                )
                decoded.append(result.psdu)
                truths.append(transmitted_psdu(rec))
            per = packet_error_rate(decoded, truths)
        points.append(
            AgingPoint(age, age * block_interval_ms / 1000.0, age_mse, per)
        )
    return points


def transmitted_psdu(rec) -> bytes:
    """Recover the exact transmitted PSDU from the stored spreading chips."""
    from . import modem

    symbols, _ = modem.despread_groups(rec.tx_chips)
    return modem.symbols_to_bytes(symbols)
