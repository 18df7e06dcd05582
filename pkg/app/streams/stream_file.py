"""
Binary and text stream files.

Binary layout (little endian):
    header  "<4sHBBQQQQ": magic b"FSKS", version, encoding, reserved,
            scale, n_rows, n_cols, m            (40 bytes)
    body    m records of varint row, varint col, zigzag-varint value

With SIGN encoding the value is the delta itself (+1 -> 0x02, -1 -> 0x01);
with FIXED encoding it is rint(delta * scale).

Text layout: optional "# n_rows n_cols" line, then one "i j delta" per line.

Usage:
    write_stream_file(stream, "data/logdata_n100_s0.fss")
    stream = StreamFile("data/logdata_n100_s0.fss")
    stats = stream.replay(sketch.update_many)
"""

from __future__ import annotations

import io
import logging
import struct
from pathlib import Path
from typing import Iterator, List, Tuple

import numpy as np

from app.errors import DomainError, FormatError
from app.streams.models import EventChunk, MemoryStream, StreamHeader, UpdateStream, ValueEncoding
from app.streams.numeric_guards import DEFAULT_FIXED_POINT_SCALE, from_fixed_point, to_fixed_point
from app.utils.file_utils import PathLike, atomic_write_bytes

logger = logging.getLogger(__name__)

STREAM_MAGIC = b"FSKS"
STREAM_VERSION = 1
HEADER = struct.Struct("<4sHBBQQQQ")
READ_BLOCK = 1 << 20
MAX_VARINT_BYTES = 10


# =============================================================================
# Varint codec
# =============================================================================

def zigzag_encode(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    return ((values << 1) ^ (values >> 63)).view(np.uint64)


def zigzag_decode(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.uint64)
    return (values >> np.uint64(1)).view(np.int64) ^ -(values & np.uint64(1)).view(np.int64)


def encode_varints(values: np.ndarray) -> bytes:
    """LEB128-style encoding of a uint64 array, in array order."""
    values = np.asarray(values, dtype=np.uint64)
    if values.size == 0:
        return b""
    lengths = np.ones(values.size, dtype=np.int64)
    rest = values >> np.uint64(7)
    while rest.any():
        lengths += rest > 0
        rest >>= np.uint64(7)
    offsets = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    out = np.empty(int(lengths.sum()), dtype=np.uint8)
    for pos in range(int(lengths.max())):
        live = lengths > pos
        byte = (values[live] >> np.uint64(7 * pos)) & np.uint64(0x7F)
        more = (lengths[live] - 1 > pos).astype(np.uint64) << np.uint64(7)
        out[offsets[live] + pos] = (byte | more).astype(np.uint8)
    return out.tobytes()


def decode_varints(buf: np.ndarray, base_offset: int = 0) -> np.ndarray:
    """Decode complete varints from a uint8 buffer that ends on a terminator byte."""
    if buf.size == 0:
        return np.zeros(0, dtype=np.uint64)
    terminators = buf < 0x80
    ids = np.concatenate(([0], np.cumsum(terminators)[:-1]))
    starts = np.concatenate(([0], np.flatnonzero(terminators)[:-1] + 1))
    position = np.arange(buf.size) - starts[ids]
    if position.max() >= MAX_VARINT_BYTES:
        bad = int(starts[ids[np.argmax(position >= MAX_VARINT_BYTES)]])
        raise FormatError("varint longer than 10 bytes", offset=base_offset + bad)
    out = np.zeros(int(terminators.sum()), dtype=np.uint64)
    payload = (buf & 0x7F).astype(np.uint64) << (7 * position).astype(np.uint64)
    np.add.at(out, ids, payload)
    return out


# =============================================================================
# Binary stream file
# =============================================================================

def _encode_values(deltas: np.ndarray, encoding: ValueEncoding, scale: int) -> np.ndarray:
    if encoding == ValueEncoding.SIGN:
        if not np.isin(deltas, (-1.0, 1.0)).all():
            raise DomainError("SIGN encoding needs every delta in {-1, +1}")
        return deltas.astype(np.int64)
    return to_fixed_point(deltas, scale)


def write_stream_file(
    stream: UpdateStream,
    path: PathLike,
    encoding: ValueEncoding = ValueEncoding.FIXED,
    scale: int = DEFAULT_FIXED_POINT_SCALE,
) -> StreamHeader:
    """Write the stream (one pass) atomically; returns the header written.

    Raises:
        DomainError: If a delta cannot be represented in the chosen encoding
    """
    encoding = ValueEncoding(encoding)
    scale = 1 if encoding == ValueEncoding.SIGN else int(scale)
    parts: List[bytes] = []
    m = 0
    for chunk in stream.replay_chunks():
        values = _encode_values(chunk.deltas, encoding, scale)
        fields = np.stack(
            [chunk.rows.astype(np.uint64), chunk.cols.astype(np.uint64), zigzag_encode(values)], axis=1
        )
        parts.append(encode_varints(fields.ravel()))
        m += len(chunk)
    header = StreamHeader(n_rows=stream.n_rows, n_cols=stream.n_cols, m=m, encoding=encoding, scale=scale)
    prefix = HEADER.pack(STREAM_MAGIC, STREAM_VERSION, int(encoding), 0, scale, stream.n_rows, stream.n_cols, m)
    atomic_write_bytes(path, prefix + b"".join(parts))
    logger.info(f"Wrote {m} updates ({stream.n_rows}x{stream.n_cols}, {encoding.name}) to {path}")
    return header


def read_header(handle: io.BufferedReader) -> StreamHeader:
    raw = handle.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise FormatError(f"truncated header ({len(raw)} of {HEADER.size} bytes)", offset=len(raw))
    magic, version, encoding, _, scale, n_rows, n_cols, m = HEADER.unpack(raw)
    if magic != STREAM_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != STREAM_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if encoding not in (ValueEncoding.SIGN, ValueEncoding.FIXED):
        raise FormatError(f"unknown value encoding {encoding}", offset=6)
    if scale < 1 or n_rows < 1 or n_cols < 1:
        raise FormatError("header has zero scale or shape", offset=8)
    return StreamHeader(n_rows=n_rows, n_cols=n_cols, m=m, encoding=ValueEncoding(encoding), scale=scale)


class StreamFile(UpdateStream):
    """Replayable stream over a binary stream file."""

    def __init__(self, path: PathLike, block_size: int = READ_BLOCK):
        self.path = Path(path)
        with open(self.path, "rb") as handle:
            self.header = read_header(handle)
        super().__init__(self.header.n_rows, self.header.n_cols)
        self.block_size = int(block_size)

    def __len__(self) -> int:
        return self.header.m

    def _decode(self, buf: np.ndarray, base_offset: int) -> EventChunk:
        fields = decode_varints(buf, base_offset).reshape(-1, 3)
        values = zigzag_decode(fields[:, 2])
        if self.header.encoding == ValueEncoding.SIGN:
            if not np.isin(values, (-1, 1)).all():
                raise FormatError("SIGN-encoded value outside {-1, +1}", offset=base_offset)
            deltas = values.astype(np.float64)
        else:
            deltas = from_fixed_point(values, self.header.scale)
        return EventChunk(fields[:, 0].astype(np.int64), fields[:, 1].astype(np.int64), deltas)

    def _chunks(self) -> Iterator[EventChunk]:
        seen = 0
        offset = HEADER.size
        carry = np.zeros(0, dtype=np.uint8)
        with open(self.path, "rb") as handle:
            handle.seek(HEADER.size)
            while True:
                block = handle.read(self.block_size)
                if not block:
                    break
                buf = np.concatenate((carry, np.frombuffer(block, dtype=np.uint8)))
                ends = np.flatnonzero(buf < 0x80)
                complete = (ends.size // 3) * 3
                cut = int(ends[complete - 1]) + 1 if complete else 0
                if cut:
                    chunk = self._decode(buf[:cut], offset)
                    seen += len(chunk)
                    if seen > self.header.m:
                        raise FormatError(f"body holds more than the declared {self.header.m} records", offset=offset)
                    yield chunk
                offset += cut
                carry = buf[cut:]
        if carry.size:
            raise FormatError("truncated record at end of body", offset=offset)
        if seen != self.header.m:
            raise FormatError(f"body has {seen} records but header declares {self.header.m}", offset=offset)


# =============================================================================
# Text format
# =============================================================================

def _parse_text(text: str) -> Tuple[Tuple[int, int] | None, np.ndarray]:
    shape = None
    records: List[Tuple[float, float, float]] = []
    offset = 0
    for line in text.splitlines(keepends=True):
        stripped = line.strip()
        if stripped.startswith("#"):
            parts = stripped.lstrip("#").split()
            if shape is None and len(parts) == 2 and all(p.isdigit() for p in parts):
                shape = (int(parts[0]), int(parts[1]))
        elif stripped:
            parts = stripped.split()
            try:
                if len(parts) != 3:
                    raise ValueError(line)
                records.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError:
                raise FormatError(f"expected 'i j delta', got {stripped!r}", offset=offset) from None
        offset += len(line.encode("utf-8"))
    return shape, np.asarray(records, dtype=np.float64).reshape(-1, 3)


def read_text_stream(path: PathLike) -> MemoryStream:
    """Load an "i j delta" text file; the shape comes from the header or the largest index."""
    shape, records = _parse_text(Path(path).read_text(encoding="utf-8"))
    rows = records[:, 0].astype(np.int64)
    cols = records[:, 1].astype(np.int64)
    if shape is None:
        shape = (int(rows.max(initial=0)) + 1, int(cols.max(initial=0)) + 1)
    return MemoryStream(rows, cols, records[:, 2], shape[0], shape[1])


def write_text_stream(stream: UpdateStream, path: PathLike) -> int:
    lines = [f"# {stream.n_rows} {stream.n_cols}\n"]
    count = 0
    for chunk in stream.replay_chunks():
        lines.extend(
            f"{i} {j} {delta!r}\n" for i, j, delta in zip(chunk.rows.tolist(), chunk.cols.tolist(), chunk.deltas.tolist())
        )
        count += len(chunk)
    atomic_write_bytes(path, "".join(lines).encode("utf-8"))
    logger.info(f"Wrote {count} text updates to {path}")
    return count
