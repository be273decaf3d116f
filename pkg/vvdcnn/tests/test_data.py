"""Horizon pairing and prediction-record alignment."""

import numpy as np
import pytest

from vvdcnn import build_dataset, merge_datasets
from vvdcnn.data import FRAMES_PER_BLOCK
from vvdcnn.fileio import DepthRecord, TraceLabels


def make_labels(n_blocks, rng):
    return TraceLabels(
        set_id=1,
        n_taps=11,
        samples_per_chip=2,
        seq_nos=np.arange(n_blocks, dtype=np.int64),
        scene_ids=np.arange(n_blocks, dtype=np.int64) * 3,
        cirs=rng.standard_normal((n_blocks, 11)) + 1j * rng.standard_normal((n_blocks, 11)),
        pre_cursor_count=6,
    )


def make_frames(n_blocks, rng):
    frames = []
    for k in range(n_blocks):
        for j in range(FRAMES_PER_BLOCK):
            frames.append(
                DepthRecord(
                    frame_id=3 * k + j,
                    block_seq=k,
                    aligned=(j == 0),
                    grid=rng.random((50, 90)),
                )
            )
    return frames


class TestHorizonPairing:
    def test_current_uses_aligned_frames_and_own_block(self, rng):
        labels = make_labels(5, rng)
        frames = make_frames(5, rng)
        ds = build_dataset(labels, frames, "current")
        assert ds.inputs.shape[0] == 5
        assert list(ds.label_seq_nos) == [0, 1, 2, 3, 4]
        for i, k in enumerate(ds.label_seq_nos):
            from vvdcnn.preprocess import real_to_cir

            assert np.array_equal(real_to_cir(ds.targets[i]), labels.cirs[k])
            assert np.array_equal(ds.inputs[i], frames[3 * k].grid)

    def test_33ms_pairs_late_frame_with_next_block(self, rng):
        labels = make_labels(5, rng)
        frames = make_frames(5, rng)
        ds = build_dataset(labels, frames, "33ms")
        # frame 3k+2 predicts block k+1; last block has no successor
        assert list(ds.label_seq_nos) == [1, 2, 3, 4]
        for i, k in enumerate(ds.label_seq_nos):
            assert np.array_equal(ds.inputs[i], frames[3 * (k - 1) + 2].grid)

    def test_100ms_pairs_aligned_frame_with_next_block(self, rng):
        labels = make_labels(5, rng)
        frames = make_frames(5, rng)
        ds = build_dataset(labels, frames, "100ms")
        assert list(ds.label_seq_nos) == [1, 2, 3, 4]
        for i, k in enumerate(ds.label_seq_nos):
            assert np.array_equal(ds.inputs[i], frames[3 * (k - 1)].grid)

    def test_unknown_horizon_rejected(self, rng):
        with pytest.raises(ValueError):
            build_dataset(make_labels(3, rng), make_frames(3, rng), "eventually")

    def test_merge_concatenates(self, rng):
        labels = make_labels(4, rng)
        frames = make_frames(4, rng)
        a = build_dataset(labels, frames, "current")
        merged = merge_datasets([a, a])
        assert merged.inputs.shape[0] == 8


class TestPredictionAlignment:
    def _trained_stub(self):
        from vvdcnn.model import build_model
        from vvdcnn.training import TrainedModel

        return TrainedModel(
            model=build_model(),
            norm_constant=1.0,
            n_taps=11,
            pre_cursor_count=6,
            horizon="current",
        )

    def test_current_alignment(self, rng):
        from vvdcnn.predict import predict_records

        frames = make_frames(4, rng)
        records = predict_records(self._trained_stub(), frames, "current")
        assert [seq for seq, _, _ in records] == [0, 1, 2, 3]

    def test_100ms_alignment_shifts_by_one_block(self, rng):
        from vvdcnn.predict import predict_records

        frames = make_frames(4, rng)
        records = predict_records(self._trained_stub(), frames, "100ms")
        assert [seq for seq, _, _ in records] == [1, 2, 3, 4]

    def test_records_carry_pre_cursor(self, rng):
        from vvdcnn.predict import predict_records

        records = predict_records(self._trained_stub(), make_frames(2, rng), "current")
        assert all(pre == 6 for _, _, pre in records)
        assert all(taps.shape == (11,) for _, taps, _ in records)
