"""Readers/writers for the lab's binary interchange formats.

Implemented independently from the simulator package against the byte-exact
layout documented in the lab repo (docs/FORMATS.md): little-endian,
versioned headers, complex values as interleaved f64 pairs. The trace reader
skips waveform payloads and keeps only what training needs (sequence
numbers, scene keys, ground-truth taps).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

TRACE_MAGIC = b"VVDTRACE"
ESTIMATE_MAGIC = b"VVDESTIM"
DEPTH_MAGIC = b"VVDDEPTH"
VERSION = 1


class FormatError(ValueError):
    pass


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def skip(self, n: int) -> None:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file at offset {self.pos}")
        self.pos += n

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def complex_array(self, count: int) -> np.ndarray:
        flat = np.frombuffer(self.take(16 * count), dtype="<f8")
        return flat[0::2] + 1j * flat[1::2]


@dataclass(frozen=True)
class TraceLabels:
    """Ground-truth labels of one trace set: one CIR per packet."""

    set_id: int
    n_taps: int
    samples_per_chip: int
    seq_nos: np.ndarray  # (K,)
    scene_ids: np.ndarray  # (K,), -1 when absent
    cirs: np.ndarray  # (K, n_taps) complex
    pre_cursor_count: int


def read_trace_labels(path: str) -> TraceLabels:
    with open(path, "rb") as fh:
        cur = _Cursor(fh.read())
    if cur.take(8) != TRACE_MAGIC:
        raise FormatError(f"{path}: not a trace file")
    version, n_taps, spc, count, set_id, _seed, tag_len = cur.unpack("IIIQqQH")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    cur.skip(tag_len)
    seqs, scenes, cirs = [], [], []
    pre_cursor = 0
    for _ in range(count):
        seq_no, _ts, scene, _phase, _snr = cur.unpack("qqqdd")
        (chip_count,) = cur.unpack("I")
        cur.skip((chip_count + 7) // 8)
        (tx_len,) = cur.unpack("Q")
        cur.skip(16 * tx_len)
        (rx_len,) = cur.unpack("Q")
        cur.skip(16 * rx_len)
        cir_n, pre_cursor = cur.unpack("II")
        if cir_n != n_taps:
            raise FormatError(f"{path}: record {seq_no} tap count mismatch")
        cirs.append(cur.complex_array(cir_n))
        seqs.append(seq_no)
        scenes.append(scene)
    return TraceLabels(
        set_id=set_id,
        n_taps=n_taps,
        samples_per_chip=spc,
        seq_nos=np.array(seqs, dtype=np.int64),
        scene_ids=np.array(scenes, dtype=np.int64),
        cirs=np.array(cirs, dtype=np.complex128).reshape(count, n_taps),
        pre_cursor_count=int(pre_cursor),
    )


@dataclass(frozen=True)
class DepthRecord:
    frame_id: int
    block_seq: int
    aligned: bool
    grid: np.ndarray  # (50, 90) float64


def read_depth(path: str) -> List[DepthRecord]:
    with open(path, "rb") as fh:
        cur = _Cursor(fh.read())
    if cur.take(8) != DEPTH_MAGIC:
        raise FormatError(f"{path}: not a depth file")
    version, rows, cols, count = cur.unpack("IIIQ")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    out = []
    for _ in range(count):
        frame_id, block_seq, aligned = cur.unpack("qqB")
        grid = np.frombuffer(cur.take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
        out.append(DepthRecord(frame_id, block_seq, bool(aligned), grid))
    return out


def write_estimates(
    path: str,
    technique_tag: str,
    n_taps: int,
    records: Sequence[Tuple[int, Optional[np.ndarray], int]],
) -> int:
    """Write (seq_no, taps-or-None, pre_cursor) rows as a .vvdest file."""
    tag = technique_tag.encode("utf-8")
    chunks = [ESTIMATE_MAGIC, struct.pack("<IIH", VERSION, n_taps, len(tag)), tag]
    chunks.append(struct.pack("<Q", len(records)))
    for seq_no, taps, pre_cursor in records:
        if taps is None:
            chunks.append(struct.pack("<qB", seq_no, 0))
            continue
        taps = np.asarray(taps, dtype=np.complex128)
        if taps.shape != (n_taps,):
            raise ValueError(f"estimate for seq {seq_no} has shape {taps.shape}")
        flat = np.empty(2 * n_taps, dtype="<f8")
        flat[0::2] = taps.real
        flat[1::2] = taps.imag
        chunks.append(struct.pack("<qBI", seq_no, 1, pre_cursor))
        chunks.append(flat.tobytes())
    payload = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(payload)
    return len(payload)
