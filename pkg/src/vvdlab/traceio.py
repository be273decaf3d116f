"""Binary trace / estimate / depth-tensor file formats.

All three containers are little-endian, self-describing, and versioned; the
exact byte layouts are documented in ``docs/FORMATS.md``. Parsing is
fail-closed: truncation raises :class:`TraceFormatError` with the offending
offset, invariant violations raise :class:`TraceValidationError` naming the
field. Nothing is ever silently repaired.
"""

from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO, List, Sequence, Union

import numpy as np

from .types import (
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

TRACE_MAGIC = b"VVDTRACE"
ESTIMATE_MAGIC = b"VVDESTIM"
DEPTH_MAGIC = b"VVDDEPTH"
FORMAT_VERSION = 1

_Sink = Union[str, BinaryIO]


class _Reader:
    """Buffered reader that raises TraceFormatError on short reads."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    @property
    def offset(self) -> int:
        return self._pos

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise TraceFormatError(
                f"truncated input: needed {n} bytes, had {len(self._data) - self._pos}",
                offset=self._pos,
            )
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def complex_array(self, count: int) -> np.ndarray:
        raw = self.take(16 * count)
        flat = np.frombuffer(raw, dtype="<f8")
        return (flat[0::2] + 1j * flat[1::2]).astype(np.complex128)

    def float_array(self, count: int) -> np.ndarray:
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)

    def expect_end(self):
        if self._pos != len(self._data):
            raise TraceFormatError(
                f"{len(self._data) - self._pos} trailing bytes after final record",
                offset=self._pos,
            )


def _pack_complex(arr: np.ndarray) -> bytes:
    flat = np.empty(2 * arr.size, dtype="<f8")
    flat[0::2] = arr.real
    flat[1::2] = arr.imag
    return flat.tobytes()


def _open_sink(destination: _Sink):
    if isinstance(destination, (str, os.PathLike)):
        return open(destination, "wb"), True
    return destination, False


def _read_all(source) -> bytes:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    return source.read()


# ---------------------------------------------------------------------------
# .vvdtrace
# ---------------------------------------------------------------------------

def write_trace(tset: TraceSet, destination: _Sink) -> int:
    """Serialize a TraceSet; returns the number of bytes written."""
    out = io.BytesIO()
    tag = tset.meta.rate_tag.encode("utf-8")
    out.write(TRACE_MAGIC)
    out.write(
        struct.pack(
            "<IIIQqQH",
            FORMAT_VERSION,
            tset.meta.n_taps,
            tset.meta.samples_per_chip,
            len(tset.records),
            tset.set_id,
            tset.meta.seed,
            len(tag),
        )
    )
    out.write(tag)
    for rec in tset.records:
        scene = -1 if rec.scene_id is None else rec.scene_id
        out.write(
            struct.pack(
                "<qqqdd",
                rec.seq_no,
                rec.timestamp_ms,
                scene,
                rec.phase_offset_rad,
                rec.snr_db,
            )
        )
        out.write(struct.pack("<I", rec.tx_chips.size))
        out.write(np.packbits(rec.tx_chips).tobytes())
        out.write(struct.pack("<Q", len(rec.tx_waveform)))
        out.write(_pack_complex(rec.tx_waveform.samples))
        out.write(struct.pack("<Q", len(rec.rx_waveform)))
        out.write(_pack_complex(rec.rx_waveform.samples))
        out.write(struct.pack("<II", rec.true_cir.n_taps, rec.true_cir.pre_cursor_count))
        out.write(_pack_complex(rec.true_cir.taps))
    payload = out.getvalue()
    sink, close = _open_sink(destination)
    try:
        sink.write(payload)
    except OSError as exc:
        raise IOError(f"failed writing trace to {destination!r}: {exc}") from exc
    finally:
        if close:
            sink.close()
    return len(payload)


def read_trace(source) -> TraceSet:
    """Parse a .vvdtrace byte source back into a TraceSet."""
    rd = _Reader(_read_all(source))
    magic = rd.take(len(TRACE_MAGIC))
    if magic != TRACE_MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}, expected {TRACE_MAGIC!r}", offset=0)
    version, n_taps, spc, count, set_id, seed, tag_len = rd.unpack("IIIQqQH")
    if version != FORMAT_VERSION:
        raise TraceFormatError(f"unsupported version {version}", offset=8)
    rate_tag = rd.take(tag_len).decode("utf-8")
    meta = TraceMeta(rate_tag=rate_tag, n_taps=n_taps, samples_per_chip=spc, seed=seed)
    records: List[TraceRecord] = []
    for _ in range(count):
        seq_no, timestamp_ms, scene, phase, snr_db = rd.unpack("qqqdd")
        (chip_count,) = rd.unpack("I")
        packed = rd.take((chip_count + 7) // 8)
        chips = np.unpackbits(np.frombuffer(packed, dtype=np.uint8))[:chip_count]
        (tx_len,) = rd.unpack("Q")
        tx = rd.complex_array(tx_len)
        (rx_len,) = rd.unpack("Q")
        rx = rd.complex_array(rx_len)
        cir_n, pre_cursor = rd.unpack("II")
        taps = rd.complex_array(cir_n)
        if cir_n != n_taps:
            raise TraceValidationError(
                f"record {seq_no} has {cir_n} taps, header says {n_taps}", "true_cir"
            )
        try:
            cir = Cir(taps, pre_cursor)
        except TraceValidationError as exc:
            raise TraceValidationError(str(exc), "true_cir") from exc
        records.append(
            TraceRecord(
                seq_no=seq_no,
                timestamp_ms=timestamp_ms,
                tx_chips=chips,
                tx_waveform=Waveform(tx, spc),
                rx_waveform=Waveform(rx, spc),
                true_cir=cir,
                phase_offset_rad=phase,
                snr_db=snr_db,
                scene_id=None if scene == -1 else scene,
            )
        )
    rd.expect_end()
    return TraceSet(records=tuple(records), set_id=set_id, meta=meta)


# ---------------------------------------------------------------------------
# .vvdest
# ---------------------------------------------------------------------------

def write_estimates(records: Sequence[EstimateRecord], destination: _Sink) -> int:
    """Serialize estimate records; all must share a technique tag and N."""
    records = list(records)
    n_taps = 0
    tag = ""
    for rec in records:
        if rec.cir is not None:
            if n_taps and rec.cir.n_taps != n_taps:
                raise TraceValidationError("mixed tap counts in estimate list", "cir")
            n_taps = rec.cir.n_taps
        if tag and rec.technique_tag != tag:
            raise TraceValidationError("mixed technique tags in estimate list", "technique_tag")
        tag = rec.technique_tag
    tag_bytes = tag.encode("utf-8")
    out = io.BytesIO()
    out.write(ESTIMATE_MAGIC)
    out.write(struct.pack("<IIH", FORMAT_VERSION, n_taps, len(tag_bytes)))
    out.write(tag_bytes)
    out.write(struct.pack("<Q", len(records)))
    for rec in records:
        out.write(struct.pack("<qB", rec.seq_no, 1 if rec.available else 0))
        if rec.available:
            out.write(struct.pack("<I", rec.cir.pre_cursor_count))
            out.write(_pack_complex(rec.cir.taps))
    payload = out.getvalue()
    sink, close = _open_sink(destination)
    try:
        sink.write(payload)
    except OSError as exc:
        raise IOError(f"failed writing estimates to {destination!r}: {exc}") from exc
    finally:
        if close:
            sink.close()
    return len(payload)


def read_estimates(source) -> List[EstimateRecord]:
    rd = _Reader(_read_all(source))
    magic = rd.take(len(ESTIMATE_MAGIC))
    if magic != ESTIMATE_MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}, expected {ESTIMATE_MAGIC!r}", offset=0)
    version, n_taps, tag_len = rd.unpack("IIH")
    if version != FORMAT_VERSION:
        raise TraceFormatError(f"unsupported version {version}", offset=8)
    tag = rd.take(tag_len).decode("utf-8")
    (count,) = rd.unpack("Q")
    records: List[EstimateRecord] = []
    for _ in range(count):
        seq_no, avail = rd.unpack("qB")
        if avail not in (0, 1):
            raise TraceFormatError(f"bad availability byte {avail}", offset=rd.offset - 1)
        cir = None
        if avail:
            (pre_cursor,) = rd.unpack("I")
            taps = rd.complex_array(n_taps)
            try:
                cir = Cir(taps, pre_cursor)
            except TraceValidationError as exc:
                raise TraceValidationError(str(exc), "cir") from exc
        records.append(
            EstimateRecord(seq_no=seq_no, technique_tag=tag, cir=cir, available=bool(avail))
        )
    rd.expect_end()
    return records


# ---------------------------------------------------------------------------
# .vvddepth
# ---------------------------------------------------------------------------

def write_depth_frames(frames: Sequence[DepthFrame], destination: _Sink) -> int:
    out = io.BytesIO()
    out.write(DEPTH_MAGIC)
    out.write(
        struct.pack("<IIIQ", FORMAT_VERSION, DepthFrame.ROWS, DepthFrame.COLS, len(frames))
    )
    for fr in frames:
        out.write(struct.pack("<qqB", fr.frame_id, fr.block_seq, 1 if fr.aligned else 0))
        out.write(fr.grid.astype("<f8").tobytes(order="C"))
    payload = out.getvalue()
    sink, close = _open_sink(destination)
    try:
        sink.write(payload)
    except OSError as exc:
        raise IOError(f"failed writing depth frames to {destination!r}: {exc}") from exc
    finally:
        if close:
            sink.close()
    return len(payload)


def read_depth_frames(source) -> List[DepthFrame]:
    rd = _Reader(_read_all(source))
    magic = rd.take(len(DEPTH_MAGIC))
    if magic != DEPTH_MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}, expected {DEPTH_MAGIC!r}", offset=0)
    version, rows, cols, count = rd.unpack("IIIQ")
    if version != FORMAT_VERSION:
        raise TraceFormatError(f"unsupported version {version}", offset=8)
    if (rows, cols) != (DepthFrame.ROWS, DepthFrame.COLS):
        raise TraceValidationError(f"unexpected grid shape ({rows}, {cols})", "grid")
    frames: List[DepthFrame] = []
    for _ in range(count):
        frame_id, block_seq, aligned = rd.unpack("qqB")
        grid = rd.float_array(rows * cols).reshape(rows, cols)
        frames.append(
            DepthFrame(frame_id=frame_id, block_seq=block_seq, aligned=bool(aligned), grid=grid)
        )
    rd.expect_end()
    return frames
