"""Inference: depth frames -> de-normalized estimates -> .vvdest export."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from .data import FRAMES_PER_BLOCK, HORIZONS
from .fileio import DepthRecord, write_estimates
from .preprocess import real_to_cir
from .training import TrainedModel


def predict_records(
    trained: TrainedModel,
    frames: Sequence[DepthRecord],
    horizon: Optional[str] = None,
) -> List[Tuple[int, np.ndarray, int]]:
    """One (seq_no, taps, pre_cursor) estimate per usable input frame.

    The horizon's frame shift fixes record alignment: a frame predicts the
    block whose aligned frame sits ``shift`` frames later (current -> its
    own block, 100 ms -> the next one).
    """
    horizon = horizon or trained.horizon
    shift, _ = HORIZONS[horizon]
    usable = [fr for fr in frames if (fr.frame_id + shift) % FRAMES_PER_BLOCK == 0]
    if not usable:
        return []
    grids = np.stack([fr.grid for fr in usable])
    outputs = trained.predict(grids)
    records = []
    for fr, row in zip(usable, outputs):
        seq_no = (fr.frame_id + shift) // FRAMES_PER_BLOCK
        records.append((seq_no, real_to_cir(row), trained.pre_cursor_count))
    return records


def predict_to_file(
    trained: TrainedModel,
    frames: Sequence[DepthRecord],
    path: str,
    horizon: Optional[str] = None,
) -> int:
    horizon = horizon or trained.horizon
    _, tag = HORIZONS[horizon]
    records = predict_records(trained, frames, horizon)
    return write_estimates(path, tag, trained.n_taps, records)
