"""Pairing depth frames with CIR labels for the three prediction horizons.

Frames arrive at 30 fps, three per 100 ms packet block; frame 3k is the
block-aligned one. A frame f is paired with the CIR of the block whose
aligned frame is f + shift, so the network learns to predict ``shift``
frames into the future: shift 0 (current), 1 (33.3 ms), or 3 (100 ms).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .fileio import DepthRecord, TraceLabels
from .preprocess import cir_to_real

FRAMES_PER_BLOCK = 3

#: horizon name -> (label shift in frames, harness technique tag)
HORIZONS: Dict[str, Tuple[int, str]] = {
    "current": (0, "vvd-current"),
    "33ms": (1, "vvd-33ms"),
    "100ms": (3, "vvd-100ms"),
}


@dataclass(frozen=True)
class Dataset:
    """Paired inputs/targets plus the alignment needed at prediction time."""

    inputs: np.ndarray  # (k, 50, 90)
    targets: np.ndarray  # (k, 2*n_taps) un-normalized reals
    label_seq_nos: np.ndarray  # (k,) block the target CIR belongs to
    n_taps: int
    pre_cursor_count: int


def build_dataset(
    labels: TraceLabels, frames: Sequence[DepthRecord], horizon: str
) -> Dataset:
    if horizon not in HORIZONS:
        raise ValueError(f"unknown horizon {horizon!r}; choose from {sorted(HORIZONS)}")
    shift, _ = HORIZONS[horizon]
    cir_by_seq = {int(s): labels.cirs[i] for i, s in enumerate(labels.seq_nos)}
    inputs: List[np.ndarray] = []
    targets: List[np.ndarray] = []
    seqs: List[int] = []
    for fr in frames:
        target_frame = fr.frame_id + shift
        if target_frame % FRAMES_PER_BLOCK:
            continue
        block = target_frame // FRAMES_PER_BLOCK
        cir = cir_by_seq.get(block)
        if cir is None:
            continue
        inputs.append(fr.grid)
        targets.append(cir_to_real(cir))
        seqs.append(block)
    if not inputs:
        raise ValueError("no frame/label pairs for this horizon")
    return Dataset(
        inputs=np.stack(inputs),
        targets=np.stack(targets),
        label_seq_nos=np.array(seqs, dtype=np.int64),
        n_taps=labels.n_taps,
        pre_cursor_count=labels.pre_cursor_count,
    )


def merge_datasets(parts: Sequence[Dataset]) -> Dataset:
    if not parts:
        raise ValueError("nothing to merge")
    n_taps = parts[0].n_taps
    pre = parts[0].pre_cursor_count
    for p in parts:
        if p.n_taps != n_taps:
            raise ValueError("tap count mismatch across sets")
    return Dataset(
        inputs=np.concatenate([p.inputs for p in parts]),
        targets=np.concatenate([p.targets for p in parts]),
        label_seq_nos=np.concatenate([p.label_seq_nos for p in parts]),
        n_taps=n_taps,
        pre_cursor_count=pre,
    )
