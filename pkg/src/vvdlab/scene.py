"""Geometric multipath scene: blocker displacement drives the CIR.

A 2-D floor plan carries the transmitter, receiver, point reflectors, and a
single circular blocker (the mobile human). Each propagation path (line of
sight plus one bounce per reflector) contributes one multipath component
whose delay and phase follow its length; a path segment passing through the
blocker is attenuated by a fixed factor. The same blocker displacement
therefore reproduces the same CIR, and displacement changes amplitude and
phase of the affected components.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import modem
from .channel import ChannelConfig, add_awgn, apply_channel, apply_phase_offset
from .types import Cir, DepthFrame, TraceMeta, TraceRecord, TraceSet

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_CARRIER_HZ = 2.45e9
DEFAULT_BLOCKAGE_FACTOR = 0.2  # amplitude factor on a blocked segment

# Orthographic viewport of the rendered depth tensor: 9 m x 5 m at 0.1 m/px.
VIEW_X = (-1.5, 7.5)
VIEW_Y = (-2.5, 2.5)
CAMERA_POS = (3.0, 4.5)
DEPTH_SCALE_M = 5.0

Point = Tuple[float, float]


@dataclass(frozen=True)
class SceneState:
    """Geometry snapshot: all positions in meters."""

    tx_pos: Point
    rx_pos: Point
    reflectors: Tuple[Point, ...]
    blocker_pos: Point
    blocker_radius: float

    def __post_init__(self):
        pts = [self.tx_pos, self.rx_pos, self.blocker_pos, *self.reflectors]
        for pt in pts:
            if len(pt) != 2 or not all(np.isfinite(c) for c in pt):
                raise ValueError(f"positions must be finite 2-D points, got {pt}")
        if not self.blocker_radius > 0:
            raise ValueError("blocker_radius must be > 0")
        object.__setattr__(self, "tx_pos", (float(self.tx_pos[0]), float(self.tx_pos[1])))
        object.__setattr__(self, "rx_pos", (float(self.rx_pos[0]), float(self.rx_pos[1])))
        object.__setattr__(self, "blocker_pos", (float(self.blocker_pos[0]), float(self.blocker_pos[1])))
        object.__setattr__(
            self, "reflectors", tuple((float(x), float(y)) for x, y in self.reflectors)
        )
        object.__setattr__(self, "blocker_radius", float(self.blocker_radius))


def default_scene(blocker_pos: Point = (1.5, 1.0)) -> SceneState:
    """Hall-scale default: reflector path-length offsets near multiples of
    the tap spacing (c / 8 MHz = 37.5 m), so several taps are exercised."""
    return SceneState(
        tx_pos=(0.0, 0.0),
        rx_pos=(3.0, 0.0),
        reflectors=((1.5, 20.0), (1.5, 40.0), (1.5, 58.0)),
        blocker_pos=blocker_pos,
        blocker_radius=0.5,
    )


def segment_point_distance(a: Point, b: Point, p: Point) -> float:
    """Distance from point p to the segment a-b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def scene_to_cir(
    s: SceneState,
    cfg: ChannelConfig,
    blockage_factor: float = DEFAULT_BLOCKAGE_FACTOR,
    carrier_hz: float = DEFAULT_CARRIER_HZ,
) -> Cir:
    """Deterministic geometry -> CIR mapping.

    One component per path: amplitude 1/length, phase exp(-j 2 pi f_c tau),
    attenuated by ``blockage_factor`` once per segment that passes within
    ``blocker_radius`` of the blocker. Components are binned to the nearest
    sampled tap relative to the line-of-sight delay at the main tap.
    """
    tx = np.asarray(s.tx_pos)
    rx = np.asarray(s.rx_pos)
    d_los = float(np.linalg.norm(rx - tx))
    if d_los < 1e-9:
        raise ValueError("degenerate geometry: tx and rx coincide")
    paths: List[Tuple[float, complex]] = []

    def blocked(a: Point, b: Point) -> bool:
        return segment_point_distance(a, b, s.blocker_pos) < s.blocker_radius

    amp = (1.0 / d_los) * np.exp(-2j * np.pi * carrier_hz * d_los / SPEED_OF_LIGHT)
    if blocked(s.tx_pos, s.rx_pos):
        amp *= blockage_factor
    paths.append((d_los, amp))
    for refl in s.reflectors:
        d1 = float(np.linalg.norm(np.asarray(refl) - tx))
        d2 = float(np.linalg.norm(rx - np.asarray(refl)))
        d = d1 + d2
        if d < 1e-9:
            continue
        amp = (1.0 / d) * np.exp(-2j * np.pi * carrier_hz * d / SPEED_OF_LIGHT)
        if blocked(s.tx_pos, refl):
            amp *= blockage_factor
        if blocked(refl, s.rx_pos):
            amp *= blockage_factor
        paths.append((d, amp))

    sample_rate = modem.CHIP_RATE_HZ * cfg.samples_per_chip
    taps = np.zeros(cfg.n_taps, dtype=np.complex128)
    for d, amp in paths:
        rel = (d - d_los) / SPEED_OF_LIGHT * sample_rate
        idx = cfg.pre_cursor_count + int(round(rel))
        if 0 <= idx < cfg.n_taps:
            taps[idx] += amp
    return Cir(taps, cfg.pre_cursor_count)


def render_depth(s: SceneState) -> DepthFrame:
    """Rasterize the floor plan into the 50x90 normalized inverse-depth grid.

    Background pixels encode their distance to the fixed camera in (0, 0.4];
    blocker pixels sit in the (0.5, 1] band, so a moved blocker changes the
    tensor exactly on its disc pixels.
    """
    rows, cols = DepthFrame.ROWS, DepthFrame.COLS
    xs = VIEW_X[0] + (np.arange(cols) + 0.5) * (VIEW_X[1] - VIEW_X[0]) / cols
    ys = VIEW_Y[1] - (np.arange(rows) + 0.5) * (VIEW_Y[1] - VIEW_Y[0]) / rows
    px, py = np.meshgrid(xs, ys)
    cam_d = np.hypot(px - CAMERA_POS[0], py - CAMERA_POS[1])
    inv_depth = 1.0 / (1.0 + cam_d / DEPTH_SCALE_M)
    grid = 0.4 * inv_depth
    blocker_d = np.hypot(px - s.blocker_pos[0], py - s.blocker_pos[1])
    disc = blocker_d <= s.blocker_radius
    grid[disc] = 0.5 + 0.5 * inv_depth[disc]
    return DepthFrame(frame_id=0, block_seq=0, aligned=True, grid=grid)


def disc_pixel_mask(s: SceneState) -> np.ndarray:
    """Boolean mask of the pixels covered by the blocker disc."""
    rows, cols = DepthFrame.ROWS, DepthFrame.COLS
    xs = VIEW_X[0] + (np.arange(cols) + 0.5) * (VIEW_X[1] - VIEW_X[0]) / cols
    ys = VIEW_Y[1] - (np.arange(rows) + 0.5) * (VIEW_Y[1] - VIEW_Y[0]) / rows
    px, py = np.meshgrid(xs, ys)
    return np.hypot(px - s.blocker_pos[0], py - s.blocker_pos[1]) <= s.blocker_radius


@dataclass(frozen=True)
class BlockerWalk:
    """Bounded Gaussian random walk of the blocker center.

    Steps reflect off the rectangle edges so the blocker keeps sweeping the
    movement area (the human "is always mobile").
    """

    x_range: Tuple[float, float] = (0.0, 3.0)
    y_range: Tuple[float, float] = (-1.5, 1.5)
    step_std_m: float = 0.25
    start: Point = (1.5, 1.0)

    def __post_init__(self):
        if self.x_range[0] >= self.x_range[1] or self.y_range[0] >= self.y_range[1]:
            raise ValueError("empty movement rectangle")
        if self.step_std_m < 0:
            raise ValueError("step_std_m must be >= 0")

    def advance(self, pos: Point, rng: np.random.Generator) -> Point:
        nxt = (
            pos[0] + self.step_std_m * rng.standard_normal(),
            pos[1] + self.step_std_m * rng.standard_normal(),
        )
        return (_reflect(nxt[0], *self.x_range), _reflect(nxt[1], *self.y_range))


def _reflect(v: float, lo: float, hi: float) -> float:
    span = hi - lo
    if span <= 0:
        return lo
    t = (v - lo) % (2 * span)
    return lo + (t if t <= span else 2 * span - t)


FRAMES_PER_BLOCK = 3  # 30 fps camera against the 100 ms packet cadence


def generate_scene_trace(
    walk: BlockerWalk,
    cfg: ChannelConfig,
    n_packets: int,
    base_scene: Optional[SceneState] = None,
    set_id: int = 0,
    blockage_factor: float = DEFAULT_BLOCKAGE_FACTOR,
    carrier_hz: float = DEFAULT_CARRIER_HZ,
    cir_jitter_std: float = 2e-3,
    psdu_source=None,
) -> Tuple[TraceSet, List[DepthFrame]]:
    """Blocker-walk trace plus its synchronized depth frames.

    Per 100 ms block: the packet is synthesized at the blocker's current
    position (CIR = geometry plus a small complex Gaussian perturbation),
    three depth frames are rendered at 33 ms sub-steps, and the walk
    advances one sub-step between frames. The block-aligned frame is
    flagged and keyed by the record's scene_id.
    """
    from .channel import default_psdu

    base = base_scene if base_scene is not None else default_scene(walk.start)
    psdu_source = psdu_source or default_psdu
    rng = np.random.default_rng(cfg.rng_seed)
    pos = walk.start
    theta = 0.0
    records = []
    frames: List[DepthFrame] = []
    for k in range(n_packets):
        if k > 0 and cfg.phase_drift_std_rad > 0:
            theta += cfg.phase_drift_std_rad * rng.standard_normal()
        scene_k = SceneState(
            tx_pos=base.tx_pos,
            rx_pos=base.rx_pos,
            reflectors=base.reflectors,
            blocker_pos=pos,
            blocker_radius=base.blocker_radius,
        )
        clean = scene_to_cir(scene_k, cfg, blockage_factor, carrier_hz)
        taps = clean.taps.copy()
        if cir_jitter_std > 0:
            taps = taps + cir_jitter_std / np.sqrt(2.0) * (
                rng.standard_normal(cfg.n_taps) + 1j * rng.standard_normal(cfg.n_taps)
            )
        h_k = Cir(taps, cfg.pre_cursor_count)
        frame = modem.build_frame(psdu_source(k))
        tx = modem.modulate_frame(frame, cfg.samples_per_chip)
        rx = apply_channel(tx, h_k)
        rx = apply_phase_offset(rx, theta)
        rx = add_awgn(rx, cfg.snr_db, rng)
        scene_id = k * FRAMES_PER_BLOCK
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
                scene_id=scene_id,
            )
        )
        for j in range(FRAMES_PER_BLOCK):
            fr = render_depth(
                SceneState(
                    tx_pos=base.tx_pos,
                    rx_pos=base.rx_pos,
                    reflectors=base.reflectors,
                    blocker_pos=pos,
                    blocker_radius=base.blocker_radius,
                )
            )
            frames.append(
                DepthFrame(
                    frame_id=scene_id + j,
                    block_seq=k,
                    aligned=(j == 0),
                    grid=fr.grid,
                )
            )
            pos = walk.advance(pos, rng)
    meta = TraceMeta(
        rate_tag=cfg.rate_tag,
        n_taps=cfg.n_taps,
        samples_per_chip=cfg.samples_per_chip,
        seed=cfg.rng_seed,
    )
    return TraceSet(records=tuple(records), set_id=set_id, meta=meta), frames
