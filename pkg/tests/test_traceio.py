"""Round-trip and fail-closed behavior of the binary file formats."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vvdlab import traceio
from vvdlab.types import (
    FULL_PACKET_CHIPS,
    Cir,
    DepthFrame,
    EstimateRecord,
    TraceFormatError,
    TraceMeta,
    TraceRecord,
    TraceSet,
    TraceValidationError,
    Waveform,
)

N = 11


def make_record(rng, seq_no, tx_len=40, snr_db=20.0, scene_id=None):
    tx = rng.standard_normal(tx_len) + 1j * rng.standard_normal(tx_len)
    rx = rng.standard_normal(tx_len + N - 1) + 1j * rng.standard_normal(tx_len + N - 1)
    taps = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    chips = rng.integers(0, 2, FULL_PACKET_CHIPS, dtype=np.uint8)
    return TraceRecord(
        seq_no=seq_no,
        timestamp_ms=100 * seq_no,
        tx_chips=chips,
        tx_waveform=Waveform(tx, 4),
        rx_waveform=Waveform(rx, 4),
        true_cir=Cir(taps, 6),
        phase_offset_rad=float(rng.normal()),
        snr_db=snr_db,
        scene_id=scene_id,
    )


def make_set(rng, n_records, set_id=3):
    meta = TraceMeta(rate_tag="8Msps", n_taps=N, samples_per_chip=4, seed=99)
    records = tuple(make_record(rng, k, scene_id=3 * k if k % 2 else None) for k in range(n_records))
    return TraceSet(records=records, set_id=set_id, meta=meta)


class TestTraceRoundTrip:
    def test_empty_set_header_only(self, rng):
        tset = make_set(rng, 0)
        buf = io.BytesIO()
        n = traceio.write_trace(tset, buf)
        assert n == len(buf.getvalue()) > 0
        back = traceio.read_trace(io.BytesIO(buf.getvalue()))
        assert back == tset
        assert len(back) == 0

    def test_single_record_identity(self, rng):
        tset = make_set(rng, 1)
        buf = io.BytesIO()
        traceio.write_trace(tset, buf)
        assert traceio.read_trace(io.BytesIO(buf.getvalue())) == tset

    def test_100_records_reserialization_byte_identical(self, rng):
        tset = make_set(rng, 100)
        buf1 = io.BytesIO()
        traceio.write_trace(tset, buf1)
        parsed = traceio.read_trace(io.BytesIO(buf1.getvalue()))
        buf2 = io.BytesIO()
        traceio.write_trace(parsed, buf2)
        assert buf1.getvalue() == buf2.getvalue()

    def test_infinite_snr_survives(self, rng):
        meta = TraceMeta(rate_tag="8Msps", n_taps=N, samples_per_chip=4, seed=0)
        rec = make_record(rng, 0, snr_db=float("inf"))
        tset = TraceSet(records=(rec,), set_id=0, meta=meta)
        buf = io.BytesIO()
        traceio.write_trace(tset, buf)
        back = traceio.read_trace(io.BytesIO(buf.getvalue()))
        assert np.isposinf(back.records[0].snr_db)

    def test_file_path_round_trip(self, rng, tmp_path):
        tset = make_set(rng, 3)
        path = str(tmp_path / "take.vvdtrace")
        traceio.write_trace(tset, path)
        assert traceio.read_trace(path) == tset


class TestTraceFailClosed:
    def test_truncated_mid_record_names_offset(self, rng):
        tset = make_set(rng, 2)
        buf = io.BytesIO()
        traceio.write_trace(tset, buf)
        data = buf.getvalue()
        with pytest.raises(TraceFormatError) as exc:
            traceio.read_trace(data[: len(data) - 17])
        assert exc.value.offset is not None
        assert "offset" in str(exc.value)

    def test_bad_magic(self):
        with pytest.raises(TraceFormatError):
            traceio.read_trace(b"NOTMAGIC" + b"\x00" * 64)

    def test_trailing_garbage_rejected(self, rng):
        tset = make_set(rng, 1)
        buf = io.BytesIO()
        traceio.write_trace(tset, buf)
        with pytest.raises(TraceFormatError):
            traceio.read_trace(buf.getvalue() + b"\x00")

    def test_nan_tap_names_true_cir(self, rng):
        tset = make_set(rng, 1)
        buf = io.BytesIO()
        traceio.write_trace(tset, buf)
        data = bytearray(buf.getvalue())
        # The CIR taps are the final N complex doubles of the file.
        nan = np.float64("nan").tobytes()
        start = len(data) - 16 * N
        data[start : start + 8] = nan
        with pytest.raises(TraceValidationError) as exc:
            traceio.read_trace(bytes(data))
        assert "true_cir" in str(exc.value)

    def test_rx_length_violation_rejected(self, rng):
        tx = np.ones(10, complex)
        rx = np.ones(10 + N, complex)  # one sample too many
        with pytest.raises(TraceValidationError) as exc:
            TraceRecord(
                seq_no=0,
                timestamp_ms=0,
                tx_chips=np.zeros(FULL_PACKET_CHIPS, np.uint8),
                tx_waveform=Waveform(tx, 4),
                rx_waveform=Waveform(rx, 4),
                true_cir=Cir(np.ones(N), 0),
                phase_offset_rad=0.0,
                snr_db=10.0,
            )
        assert "rx_waveform" in str(exc.value)

    def test_non_monotone_timestamps_rejected(self, rng):
        meta = TraceMeta(rate_tag="8Msps", n_taps=N, samples_per_chip=4, seed=0)
        a = make_record(rng, 0)
        b = make_record(rng, 1)
        b = TraceRecord(
            seq_no=1,
            timestamp_ms=a.timestamp_ms,  # not strictly increasing
            tx_chips=b.tx_chips,
            tx_waveform=b.tx_waveform,
            rx_waveform=b.rx_waveform,
            true_cir=b.true_cir,
            phase_offset_rad=0.0,
            snr_db=10.0,
        )
        with pytest.raises(TraceValidationError):
            TraceSet(records=(a, b), set_id=0, meta=meta)


def make_estimate(rng, seq_no, available=True, tag="genie"):
    cir = None
    if available:
        taps = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        cir = Cir(taps, 6)
    return EstimateRecord(seq_no=seq_no, technique_tag=tag, cir=cir, available=available)


class TestEstimateRoundTrip:
    def test_empty_list(self):
        buf = io.BytesIO()
        n = traceio.write_estimates([], buf)
        assert n > 0
        assert traceio.read_estimates(io.BytesIO(buf.getvalue())) == []

    def test_unavailable_record(self, rng):
        recs = [make_estimate(rng, 0, available=False)]
        buf = io.BytesIO()
        traceio.write_estimates(recs, buf)
        back = traceio.read_estimates(io.BytesIO(buf.getvalue()))
        assert back == recs
        assert back[0].available is False and back[0].cir is None

    def test_50_mixed_records(self, rng):
        recs = [make_estimate(rng, k, available=(k % 3 != 0)) for k in range(50)]
        buf = io.BytesIO()
        traceio.write_estimates(recs, buf)
        assert traceio.read_estimates(io.BytesIO(buf.getvalue())) == recs

    def test_truncation_fails(self, rng):
        recs = [make_estimate(rng, k) for k in range(4)]
        buf = io.BytesIO()
        traceio.write_estimates(recs, buf)
        with pytest.raises(TraceFormatError):
            traceio.read_estimates(buf.getvalue()[:-5])

    @settings(max_examples=25, deadline=None)
    @given(
        avail=st.lists(st.booleans(), min_size=0, max_size=12),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_round_trip_property(self, avail, seed):
        rng = np.random.default_rng(seed)
        recs = [make_estimate(rng, k, available=a) for k, a in enumerate(avail)]
        buf = io.BytesIO()
        traceio.write_estimates(recs, buf)
        assert traceio.read_estimates(io.BytesIO(buf.getvalue())) == recs


class TestDepthRoundTrip:
    def test_frames_round_trip(self, rng):
        frames = [
            DepthFrame(
                frame_id=k,
                block_seq=k // 3,
                aligned=(k % 3 == 0),
                grid=rng.random((DepthFrame.ROWS, DepthFrame.COLS)),
            )
            for k in range(7)
        ]
        buf = io.BytesIO()
        traceio.write_depth_frames(frames, buf)
        assert traceio.read_depth_frames(io.BytesIO(buf.getvalue())) == frames

    def test_out_of_range_grid_rejected(self):
        grid = np.full((DepthFrame.ROWS, DepthFrame.COLS), 1.5)
        with pytest.raises(TraceValidationError):
            DepthFrame(frame_id=0, block_seq=0, aligned=True, grid=grid)
