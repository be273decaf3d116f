"""Channel estimators and trackers.

Least-squares estimation from known samples (full-signal ground truth,
sync-header-only, genie), aged estimates, Yule-Walker AR fitting, per-tap
Kalman tracking, mean-phase correction, and the combined fallback policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import modem
from .channel import ArModel, companion_matrix
from .types import Cir, EstimateRecord, TraceRecord, Waveform


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when an LS system is rank deficient."""


class KalmanDivergenceError(RuntimeError):
    """Raised when a covariance matrix loses positive semidefiniteness."""


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvolutionMatrix:
    """Zero-padded Toeplitz convolution matrix of known samples.

    For M known samples and N taps the matrix is (M+N-1) x N with entry
    (i, j) = x[i-j] where in range, so that ``matrix @ h`` is the full
    linear convolution of x with h.
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.complex128)
        if mat.ndim != 2:
            raise ValueError("convolution matrix must be 2-D")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @property
    def n_taps(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_known(self) -> int:
        return self.matrix.shape[0] - self.matrix.shape[1] + 1


def convolution_columns(x: np.ndarray, n_taps: int, rows: int) -> np.ndarray:
    """First ``rows`` rows of the convolution matrix of ``x``."""
    x = np.asarray(x, dtype=np.complex128)
    mat = np.zeros((rows, n_taps), dtype=np.complex128)
    for j in range(n_taps):
        count = min(x.size, rows - j)
        if count > 0:
            mat[j : j + count, j] = x[:count]
    return mat


def build_convolution_matrix(x: np.ndarray, n_taps: int) -> ConvolutionMatrix:
    """The (M+N-1) x N convolution matrix of the known samples x."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1:
        raise ValueError("known samples must be 1-D")
    m = x.size
    if m < n_taps:
        raise ValueError(f"need at least n_taps={n_taps} known samples, got {m}")
    return ConvolutionMatrix(convolution_columns(x, n_taps, m + n_taps - 1))


def solve_least_squares(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimize ||y - a h|| via reduced QR; raises on rank deficiency."""
    q, r = np.linalg.qr(a)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag.max() == 0.0 or diag.min() <= diag.max() * 1e-12:
        raise SingularMatrixError("rank-deficient least-squares system")
    return np.linalg.solve(r, q.conj().T @ y)


def ls_estimate(x: ConvolutionMatrix, y: np.ndarray, pre_cursor_count: int = 0) -> Cir:
    """LS channel estimate from a convolution matrix and received samples."""
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (x.matrix.shape[0],):
        raise ValueError(
            f"received vector length {y.size} != matrix rows {x.matrix.shape[0]}"
        )
    taps = solve_least_squares(x.matrix, y)
    return Cir(taps, pre_cursor_count)


def sync_prefix_system(rec: TraceRecord) -> Tuple[np.ndarray, np.ndarray]:
    """The clean LS system spanned by the known sync header.

    Uses the first ``M_pre`` rows of the convolution system, where ``M_pre``
    is the tx sample index at which payload chips start: those received
    samples depend on sync chips only, so the system is exact (no leakage of
    unknown payload into the regression window).
    """
    spc = rec.tx_waveform.samples_per_chip
    m_pre = modem.sync_sample_count(spc)
    n = rec.true_cir.n_taps
    x_known = rec.tx_waveform.samples[:m_pre]
    a = convolution_columns(x_known, n, m_pre)
    y = rec.rx_waveform.samples[:m_pre]
    return a, y


def ground_truth_estimate(rec: TraceRecord) -> Cir:
    """LS over the whole received signal (every tx sample known)."""
    x = build_convolution_matrix(rec.tx_waveform.samples, rec.true_cir.n_taps)
    return ls_estimate(
        x, rec.rx_waveform.samples, pre_cursor_count=rec.true_cir.pre_cursor_count
    )


def _sync_ls(rec: TraceRecord) -> Cir:
    a, y = sync_prefix_system(rec)
    taps = solve_least_squares(a, y)
    return Cir(taps, rec.true_cir.pre_cursor_count)


def genie_estimate(rec: TraceRecord) -> Cir:
    """Sync-header LS with detection forced to succeed."""
    return _sync_ls(rec)


def preamble_estimate(
    rec: TraceRecord,
    detector: Callable[[TraceRecord], bool],
    technique_tag: str = "preamble",
) -> EstimateRecord:
    """Sync-header LS gated by preamble detection.

    Detection failure is a value (available=False), not an error.
    """
    if not detector(rec):
        return EstimateRecord(rec.seq_no, technique_tag, None, available=False)
    return EstimateRecord(rec.seq_no, technique_tag, _sync_ls(rec), available=True)


def previous_estimate(
    history: Sequence[Cir], age_ms: int, block_interval_ms: int = 100
) -> Optional[Cir]:
    """The ground-truth estimate from ``age_ms`` earlier, unchanged.

    ``history`` is the chronological list of per-packet ground-truth
    estimates up to and including the current packet. Returns None when the
    trace does not reach back far enough.
    """
    if age_ms % block_interval_ms:
        raise ValueError("age_ms must be a multiple of the block interval")
    age_blocks = age_ms // block_interval_ms
    idx = len(history) - 1 - age_blocks
    if idx < 0:
        return None
    return history[idx]


# ---------------------------------------------------------------------------
# Preamble detectors
# ---------------------------------------------------------------------------

class AlwaysDetect:
    def __call__(self, rec: TraceRecord) -> bool:
        return True


class NeverDetect:
    def __call__(self, rec: TraceRecord) -> bool:
        return False


class BernoulliDetector:
    """Fails with fixed probability, deterministically per (seed, seq_no)."""

    def __init__(self, fail_prob: float, seed: int = 0):
        if not 0.0 <= fail_prob <= 1.0:
            raise ValueError("fail_prob must be in [0, 1]")
        self.fail_prob = fail_prob
        self.seed = seed

    def __call__(self, rec: TraceRecord) -> bool:
        rng = np.random.default_rng((self.seed, rec.seq_no))
        return rng.random() >= self.fail_prob


class CorrelationDetector:
    """Detection succeeds iff the decoded sync header is exact and every
    despread correlation margin clears a threshold.

    A mean-phase correction against the clean sync waveform runs first,
    mirroring the carrier correction every receive path performs.
    """

    def __init__(self, margin_threshold: int = 10, phase_correct: bool = True):
        self.margin_threshold = margin_threshold
        self.phase_correct = phase_correct
        self._expected = np.array(modem.SYNC_SYMBOLS, dtype=np.uint8)

    def __call__(self, rec: TraceRecord) -> bool:
        spc = rec.rx_waveform.samples_per_chip
        pre = rec.true_cir.pre_cursor_count
        need = (modem.SYNC_CHIP_COUNT // 2) * spc + spc // 2
        start = pre
        segment = rec.rx_waveform.samples[start : start + need]
        if segment.size < need:
            return False
        reference = modem.modulate(modem.sync_chips(), spc).samples
        inner = np.sum(segment * np.conj(reference))
        if self.phase_correct and inner != 0:
            segment = segment * np.exp(-1j * np.angle(inner))
        chips = modem.demodulate(Waveform(segment, spc))[: modem.SYNC_CHIP_COUNT]
        symbols, margins = modem.despread_groups(chips)
        if not np.array_equal(symbols, self._expected):
            return False
        return bool(margins.min() >= self.margin_threshold)


# ---------------------------------------------------------------------------
# Yule-Walker AR fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AutocorrSeq:
    """Normalized autocorrelation coefficients r[0..p] of one tap, r[0] = 1."""

    r: np.ndarray
    variance: float

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.complex128)
        if r.ndim != 1 or r.size < 2:
            raise ValueError("need r[0..p] with p >= 1")
        if abs(r[0] - 1.0) > 1e-9:
            raise ValueError("r[0] must be 1")
        if np.max(np.abs(r)) > 1.0 + 1e-9:
            raise ValueError("|r[tau]| must be <= 1")
        if self.variance < 0:
            raise ValueError("variance must be >= 0")
        r = r.copy()
        r.flags.writeable = False
        object.__setattr__(self, "r", r)

    @property
    def order(self) -> int:
        return self.r.size - 1


def estimate_autocorr(x: np.ndarray, p: int) -> AutocorrSeq:
    """Biased (PSD-guaranteed) sample autocorrelation of one tap sequence.

    The sample mean is removed first; coefficients are normalized by the
    tap variance so r[0] = 1.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.size <= p:
        raise ValueError(f"need more than p={p} samples, got {x.size}")
    x = x - x.mean()
    k = x.size
    cov = np.empty(p + 1, dtype=np.complex128)
    for tau in range(p + 1):
        cov[tau] = np.sum(x[tau:] * np.conj(x[: k - tau])) / k
    var = float(cov[0].real)
    if var <= 0.0:
        raise ValueError("zero-variance sequence has no autocorrelation")
    return AutocorrSeq(cov / var, var)


def ar_from_autocorr(seq: AutocorrSeq) -> Tuple[np.ndarray, bool]:
    """Solve the Yule-Walker system phi = R^-1 r.

    Returns (phi, regularized). A singular R falls back to diagonal loading
    of 1e-9, reported via the flag.
    """
    p = seq.order
    r = seq.r
    rmat = np.empty((p, p), dtype=np.complex128)
    for i in range(p):
        for j in range(p):
            tau = i - j
            rmat[i, j] = r[tau] if tau >= 0 else np.conj(r[-tau])
    rhs = r[1 : p + 1]
    try:
        if np.linalg.cond(rmat) > 1e12:
            raise np.linalg.LinAlgError("ill-conditioned Yule-Walker matrix")
        return np.linalg.solve(rmat, rhs), False
    except np.linalg.LinAlgError:
        loaded = rmat + 1e-9 * np.eye(p)
        return np.linalg.solve(loaded, rhs), True


def fit_ar(cir_sequence, p: int) -> ArModel:
    """Fit a shared-phi AR(p) model to a ground-truth CIR sequence.

    Per-tap Yule-Walker solutions are averaged into one real phi (taps are
    modeled independently but share the AR structure); the innovation
    variance is the mean per-tap residual power under that shared phi.
    Constant taps carry no correlation information and are skipped.
    """
    if hasattr(cir_sequence[0], "taps"):
        data = np.stack([c.taps for c in cir_sequence], axis=0)
    else:
        data = np.asarray(cir_sequence, dtype=np.complex128)
        if data.ndim == 1:
            data = data[:, None]
    k, n = data.shape
    if k <= p + 1:
        raise ValueError(f"training sequence of {k} blocks too short for order {p}")
    phis = []
    covs = []
    regularized = False
    for l in range(n):
        x = data[:, l]
        centered = x - x.mean()
        if np.max(np.abs(centered)) == 0.0:
            continue
        seq = estimate_autocorr(x, p)
        phi_l, reg = ar_from_autocorr(seq)
        regularized = regularized or reg
        phis.append(phi_l)
        covs.append(seq.r * seq.variance)
    if not phis:
        return ArModel(order=p, phi=np.zeros(p), process_noise_var=0.0)
    phi = np.mean(np.stack(phis, axis=0), axis=0).real
    radius = float(np.max(np.abs(np.linalg.eigvals(companion_matrix(phi)))))
    if radius >= 1.0:
        phi = phi * ((1.0 - 1e-6) / radius)
        regularized = True
    sigmas = []
    for cov in covs:
        # E|x_k - phi . x_{k-1..k-p}|^2 against the sample autocovariance
        quad = 0.0
        for i in range(1, p + 1):
            quad += -2.0 * phi[i - 1] * cov[i].real
        for i in range(1, p + 1):
            for j in range(1, p + 1):
                tau = j - i
                c = cov[abs(tau)] if tau >= 0 else np.conj(cov[abs(tau)])
                quad += phi[i - 1] * phi[j - 1] * c.real
        sigmas.append(max(0.0, float(cov[0].real + quad)))
    return ArModel(
        order=p,
        phi=phi,
        process_noise_var=float(np.mean(sigmas)),
        regularized=regularized,
    )


# ---------------------------------------------------------------------------
# Kalman tracking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KalmanState:
    """Per-tap AR(p) Kalman filter state.

    The stacked state per tap is [h_k, h_{k-1}, ..., h_{k-p+1}]; with the
    companion matrix, observation noise U and process noise Q shared across
    taps (and identical initialization), every tap's covariance recursion
    coincides, so a single P represents all taps exactly.
    ``state`` holds the prediction for the upcoming block.
    """

    phi_matrix: np.ndarray  # (p, p) companion
    state: np.ndarray  # (n_taps, p) predicted stacked state
    cov: np.ndarray  # (p, p) predicted error covariance
    obs_buffer: np.ndarray  # (n_taps, p-1) most-recent-first past observations
    obs_noise: float  # U = obs_noise * I
    process_noise: np.ndarray  # (p, p) Q
    pre_cursor_count: int
    step_count: int = 0

    @property
    def order(self) -> int:
        return self.phi_matrix.shape[0]

    @property
    def n_taps(self) -> int:
        return self.state.shape[0]

    def predicted_cir(self) -> Cir:
        return Cir(self.state[:, 0], self.pre_cursor_count)


DEFAULT_OBS_NOISE = 1e-8  # observations are "perfect" estimates; U kept small


def kalman_init(
    model: ArModel,
    first_obs: Cir,
    obs_noise: float = DEFAULT_OBS_NOISE,
    initial_cov: float = 1.0,
) -> KalmanState:
    """Start a tracker from the first observed CIR."""
    p = model.order
    n = first_obs.n_taps
    phi = model.companion().astype(np.float64 if not np.iscomplexobj(model.phi) else np.complex128)
    state = np.tile(first_obs.taps[:, None], (1, p))
    q = np.zeros((p, p), dtype=phi.dtype)
    q[0, 0] = model.process_noise_var
    cov = initial_cov * np.eye(p, dtype=phi.dtype)
    buffer = np.tile(first_obs.taps[:, None], (1, max(p - 1, 0)))
    return KalmanState(
        phi_matrix=phi,
        state=state,
        cov=cov,
        obs_buffer=buffer,
        obs_noise=float(obs_noise),
        process_noise=q,
        pre_cursor_count=first_obs.pre_cursor_count,
        step_count=0,
    )


def check_psd(p: np.ndarray, tol: float = -1e-10) -> float:
    """Minimum eigenvalue of a Hermitian covariance; raises below tol."""
    min_eig = float(np.linalg.eigvalsh((p + p.conj().T) / 2.0).min())
    if min_eig < tol:
        raise KalmanDivergenceError(
            f"covariance lost positive semidefiniteness (min eig {min_eig:.3e})"
        )
    return min_eig


def kalman_step(state: KalmanState, observation: Cir) -> Tuple[KalmanState, Cir]:
    """One update + prediction cycle.

    Update: h_curr = h + K (o - h) with K = P (P + U)^-1, P_curr = (I-K) P.
    Predict: h_next = Phi h_curr, P_next = Phi P_curr Phi^H + Q.
    The covariance is re-symmetrized each step and verified PSD.
    """
    p = state.order
    if observation.n_taps != state.n_taps:
        raise ValueError("observation tap count mismatch")
    if p > 1:
        obs_stack = np.concatenate(
            [observation.taps[:, None], state.obs_buffer], axis=1
        )[:, :p]
    else:
        obs_stack = observation.taps[:, None]
    eye = np.eye(p, dtype=state.cov.dtype)
    gain = state.cov @ np.linalg.inv(state.cov + state.obs_noise * eye)
    s_curr = state.state + (obs_stack - state.state) @ gain.T
    p_curr = (eye - gain) @ state.cov
    p_curr = (p_curr + p_curr.conj().T) / 2.0
    phi = state.phi_matrix
    s_next = s_curr @ phi.T
    p_next = phi @ p_curr @ phi.conj().T + state.process_noise
    p_next = (p_next + p_next.conj().T) / 2.0
    check_psd(p_next)
    if p > 1:
        buffer = np.concatenate(
            [observation.taps[:, None], state.obs_buffer[:, : p - 2]], axis=1
        )
    else:
        buffer = state.obs_buffer
    new_state = KalmanState(
        phi_matrix=state.phi_matrix,
        state=s_next,
        cov=p_next,
        obs_buffer=buffer,
        obs_noise=state.obs_noise,
        process_noise=state.process_noise,
        pre_cursor_count=state.pre_cursor_count,
        step_count=state.step_count + 1,
    )
    return new_state, new_state.predicted_cir()


def riccati_steady_state(
    phi: float, process_var: float, obs_noise: float, iterations: int = 10_000
) -> float:
    """Scalar fixed point of the AR(1) prediction-covariance recursion.

    Independent oracle for the one-step prediction MSE of a matched filter.
    """
    p = 1.0
    for _ in range(iterations):
        p_new = phi * phi * (obs_noise * p / (p + obs_noise)) + process_var
        if abs(p_new - p) < 1e-15 * max(1.0, p):
            return p_new
        p = p_new
    return p


class KalmanTracker:
    """Threaded per-set tracker feeding on ground-truth estimates.

    Operates on fluctuations around a fixed mean profile (from the training
    sets); predictions add the mean back. ``predict()`` yields the blind
    estimate for the upcoming block, ``observe()`` folds in that block's
    ground-truth estimate afterwards.
    """

    def __init__(
        self,
        model: ArModel,
        mean_cir: Cir,
        obs_noise: float = DEFAULT_OBS_NOISE,
    ):
        self.model = model
        self.mean = mean_cir
        self.obs_noise = obs_noise
        self._state: Optional[KalmanState] = None

    def predict(self) -> Optional[Cir]:
        if self._state is None:
            return None
        pred = self._state.predicted_cir()
        return Cir(pred.taps + self.mean.taps, self.mean.pre_cursor_count)

    def observe(self, gt_estimate: Cir) -> None:
        delta = Cir(gt_estimate.taps - self.mean.taps, self.mean.pre_cursor_count)
        if self._state is None:
            self._state = kalman_init(self.model, delta, obs_noise=self.obs_noise)
            self._state, _ = kalman_step(self._state, delta)
        else:
            self._state, _ = kalman_step(self._state, delta)


# ---------------------------------------------------------------------------
# Phase correction and combined policy
# ---------------------------------------------------------------------------

class PhaseAlignment(NamedTuple):
    theta: float
    cir: Cir
    degenerate: bool


def phase_correct(h_new: Cir, h_ref: Cir) -> PhaseAlignment:
    """Mean-phase alignment of h_new onto h_ref.

    theta = arg(sum h_new conj(h_ref)); the rotated estimate
    ``h_new * exp(-j theta)`` minimizes the rotation-alignment cost
    ||h_ref - exp(-j theta) h_new|| over theta.
    """
    if h_new.n_taps != h_ref.n_taps:
        raise ValueError("tap count mismatch")
    inner = np.sum(h_new.taps * np.conj(h_ref.taps))
    if inner == 0:
        return PhaseAlignment(0.0, h_new, True)
    theta = float(np.angle(inner))
    rotated = Cir(h_new.taps * np.exp(-1j * theta), h_new.pre_cursor_count)
    return PhaseAlignment(theta, rotated, False)


def phase_correct_to_signal(h: Cir, rec: TraceRecord) -> PhaseAlignment:
    """Align a blind estimate to the received block via its known sync part.

    The predicted sync-region samples under ``h`` are correlated with the
    actually received ones; the resulting mean phase rotates the estimate.
    """
    a, y = sync_prefix_system(rec)
    predicted = a @ h.taps
    inner = np.sum(predicted * np.conj(y))
    if inner == 0:
        return PhaseAlignment(0.0, h, True)
    theta = float(np.angle(inner))
    rotated = Cir(h.taps * np.exp(-1j * theta), h.pre_cursor_count)
    return PhaseAlignment(theta, rotated, False)


def combined_estimate(
    rec: TraceRecord,
    blind: Callable[[TraceRecord], Optional[Cir]],
    detector: Callable[[TraceRecord], bool],
    technique_tag: str = "combined",
) -> EstimateRecord:
    """Preamble LS when detected, else the phase-corrected blind estimate."""
    if detector(rec):
        return EstimateRecord(rec.seq_no, technique_tag, _sync_ls(rec), available=True)
    cir = blind(rec)
    if cir is None:
        return EstimateRecord(rec.seq_no, technique_tag, None, available=False)
    aligned = phase_correct_to_signal(cir, rec)
    return EstimateRecord(rec.seq_no, technique_tag, aligned.cir, available=True)
