"""Block-fading tapped-delay-line channel, noise, phase drift, AR evolution.

The synthetic generator keeps the channel constant over each packet
(quasi-static block fading) and evolves it between packets as an AR(p)
fluctuation around a fixed mean tap profile, so the dominant tap stays
dominant and frame timing remains meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import modem
from .types import Cir, TraceMeta, TraceRecord, TraceSet, Waveform

DEFAULT_N_TAPS = 11
DEFAULT_PRE_CURSOR = 6  # middle of the dominant tap group for N=11


@dataclass(frozen=True)
class ChannelConfig:
    """Knobs of the synthetic link."""

    n_taps: int = DEFAULT_N_TAPS
    pre_cursor_count: int = DEFAULT_PRE_CURSOR
    samples_per_chip: int = modem.DEFAULT_SAMPLES_PER_CHIP
    snr_db: float = 20.0
    phase_drift_std_rad: float = 0.05
    block_interval_ms: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_taps < 1:
            raise ValueError("n_taps must be >= 1")
        if not 0 <= self.pre_cursor_count < self.n_taps:
            raise ValueError("pre_cursor_count must be in [0, n_taps)")
        if np.isnan(self.snr_db):
            raise ValueError("snr_db must not be NaN")
        if self.phase_drift_std_rad < 0:
            raise ValueError("phase_drift_std_rad must be >= 0")
        if self.block_interval_ms < 1:
            raise ValueError("block_interval_ms must be >= 1")

    @property
    def rate_tag(self) -> str:
        rate = modem.CHIP_RATE_HZ * self.samples_per_chip / 1e6
        return f"{rate:g}Msps"


def companion_matrix(phi: np.ndarray) -> np.ndarray:
    """Companion form with the AR coefficients in the first row."""
    p = phi.size
    mat = np.zeros((p, p), dtype=phi.dtype)
    mat[0, :] = phi
    if p > 1:
        mat[1:, :-1] = np.eye(p - 1, dtype=phi.dtype)
    return mat


@dataclass(frozen=True)
class ArModel:
    """AR(p) tap-evolution model: h_k = sum_i phi_i h_{k-i} + w_k.

    Stationarity (companion spectral radius < 1) is required whenever the
    innovation variance is positive; a deterministic model (variance 0) may
    sit on the unit circle, which is what a frozen channel (phi = [1]) uses.
    """

    order: int
    phi: np.ndarray
    process_noise_var: float
    regularized: bool = False

    def __post_init__(self):
        phi = np.asarray(self.phi)
        if np.iscomplexobj(phi):
            phi = phi.astype(np.complex128)
        else:
            phi = phi.astype(np.float64)
        if phi.ndim != 1 or phi.size != self.order or self.order < 1:
            raise ValueError(f"phi must have length order={self.order}")
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi must be finite")
        if self.process_noise_var < 0 or not np.isfinite(self.process_noise_var):
            raise ValueError("process_noise_var must be finite and >= 0")
        radius = spectral_radius(phi)
        limit = 1.0 - 1e-12 if self.process_noise_var > 0 else 1.0 + 1e-12
        if radius > limit:
            raise ValueError(
                f"non-stationary AR model: companion spectral radius {radius:.6f}"
            )
        phi = phi.copy()
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)

    def companion(self) -> np.ndarray:
        return companion_matrix(self.phi)


def spectral_radius(phi: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(companion_matrix(np.asarray(phi))))))


def ar_stationary_variance(model: ArModel) -> float:
    """Stationary per-tap variance of the AR fluctuation.

    Solves the discrete Lyapunov equation for the companion-form state and
    returns the (0, 0) entry; used as a closed-form oracle in tests.
    """
    A = model.companion().astype(np.complex128)
    p = model.order
    Q = np.zeros((p, p), dtype=np.complex128)
    Q[0, 0] = model.process_noise_var
    # vec(S) = (I - A (x) conj(A))^-1 vec(Q)
    kron = np.kron(A, A.conj())
    vec = np.linalg.solve(np.eye(p * p, dtype=np.complex128) - kron, Q.reshape(-1))
    return float(vec.reshape(p, p)[0, 0].real)


# ---------------------------------------------------------------------------
# Channel application
# ---------------------------------------------------------------------------

def apply_channel(tx: Waveform, h: Cir) -> Waveform:
    """Full linear convolution of the block with a fixed CIR."""
    out = np.convolve(tx.samples, h.taps)
    return Waveform(out, tx.samples_per_chip)


def add_awgn(w: Waveform, snr_db: float, rng: np.random.Generator) -> Waveform:
    """Complex AWGN at the requested SNR against the waveform's own power.

    ``snr_db = +inf`` is the noiseless sentinel and returns the input.
    """
    if np.isnan(snr_db):
        raise ValueError("snr_db must not be NaN")
    if np.isposinf(snr_db):
        return w
    power = float(np.mean(np.abs(w.samples) ** 2))
    if power == 0.0:
        raise ValueError("zero-power waveform with finite SNR")
    noise_var = power / (10.0 ** (snr_db / 10.0))
    scale = np.sqrt(noise_var / 2.0)
    noise = scale * (
        rng.standard_normal(len(w)) + 1j * rng.standard_normal(len(w))
    )
    return Waveform(w.samples + noise, w.samples_per_chip)


def apply_phase_offset(w: Waveform, theta: float) -> Waveform:
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    return Waveform(w.samples * np.exp(1j * theta), w.samples_per_chip)


def evolve_cir(history: Sequence[Cir], model: ArModel, rng: np.random.Generator) -> Cir:
    """One AR(p) step; taps evolve independently under the shared phi.

    ``history[0]`` is the most recent CIR, ``history[i]`` the one i+1 blocks
    back. The innovation is circular complex Gaussian with total variance
    ``process_noise_var`` per tap.
    """
    if len(history) != model.order:
        raise ValueError(f"history must hold exactly {model.order} CIRs, got {len(history)}")
    n = history[0].n_taps
    pre = history[0].pre_cursor_count
    for h in history:
        if h.n_taps != n:
            raise ValueError("history CIRs must share tap count")
    stacked = np.stack([h.taps for h in history], axis=0)  # (p, n)
    new = model.phi @ stacked
    if model.process_noise_var > 0:
        scale = np.sqrt(model.process_noise_var / 2.0)
        new = new + scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return Cir(new, pre)


# ---------------------------------------------------------------------------
# Trace generation
# ---------------------------------------------------------------------------

def default_cir_profile(
    n_taps: int = DEFAULT_N_TAPS, pre_cursor_count: int = DEFAULT_PRE_CURSOR
) -> Cir:
    """Synthetic mean tap profile: dominant main tap, decaying neighbours."""
    taps = np.zeros(n_taps, dtype=np.complex128)
    for k in range(n_taps):
        d = k - pre_cursor_count
        if d == 0:
            taps[k] = 1.0
        elif d > 0:
            taps[k] = 0.45 * (0.55 ** (d - 1)) * np.exp(-1j * 0.9 * d)
        else:
            taps[k] = 0.18 * (0.4 ** (-d - 1)) * np.exp(1j * 0.7 * d)
    return Cir(taps, pre_cursor_count)


def default_psdu(seq_no: int) -> bytes:
    """127-byte payload: little-endian sequence number plus a fixed pattern."""
    body = bytes((17 * i + 31) % 256 for i in range(modem.PSDU_BYTES - 4))
    return int(seq_no % 2**32).to_bytes(4, "little") + body


def generate_trace(
    cfg: ChannelConfig,
    model: ArModel,
    n_packets: int,
    psdu_source: Callable[[int], bytes] = default_psdu,
    base_cir: Optional[Cir] = None,
    set_id: int = 0,
) -> TraceSet:
    """Synthesize one take of ``n_packets`` 100 ms-spaced packets.

    Per packet: evolve the AR fluctuation, rebuild the CIR around the mean
    profile, modulate a full frame, convolve, rotate by the phase random
    walk, add AWGN. The ground-truth CIR stored per record is the effective
    channel before the phase rotation; the rotation itself is recorded in
    ``phase_offset_rad``.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    base = base_cir if base_cir is not None else default_cir_profile(
        cfg.n_taps, cfg.pre_cursor_count
    )
    if base.n_taps != cfg.n_taps:
        raise ValueError("base_cir tap count must match cfg.n_taps")
    zero = Cir(np.zeros(cfg.n_taps, dtype=np.complex128), base.pre_cursor_count)
    delta_hist: List[Cir] = [zero] * model.order
    theta = 0.0
    records = []
    for k in range(n_packets):
        if k > 0:
            delta = evolve_cir(delta_hist, model, rng)
            delta_hist = [delta] + delta_hist[: model.order - 1]
            if cfg.phase_drift_std_rad > 0:
                theta += cfg.phase_drift_std_rad * rng.standard_normal()
        h_k = Cir(base.taps + delta_hist[0].taps, base.pre_cursor_count)
        psdu = psdu_source(k)
        frame = modem.build_frame(psdu)
        tx = modem.modulate_frame(frame, cfg.samples_per_chip)
        rx = apply_channel(tx, h_k)
        rx = apply_phase_offset(rx, theta)
        rx = add_awgn(rx, cfg.snr_db, rng)
        records.append(
            TraceRecord(
                seq_no=k,
                timestamp_ms=k * cfg.block_interval_ms,
                tx_chips=frame.all_chips[modem.SYNC_CHIP_COUNT :],
                tx_waveform=tx,
                rx_waveform=rx,
                true_cir=h_k,
                phase_offset_rad=theta,
                snr_db=cfg.snr_db,
                scene_id=None,
            )
        )
    meta = TraceMeta(
        rate_tag=cfg.rate_tag,
        n_taps=cfg.n_taps,
        samples_per_chip=cfg.samples_per_chip,
        seed=cfg.rng_seed,
    )
    return TraceSet(records=tuple(records), set_id=set_id, meta=meta)
