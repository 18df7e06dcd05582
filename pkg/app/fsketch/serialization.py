"""
Versioned binary blobs for sketch state.

Layout: 4-byte magic, uint16 version, uint32 length of a JSON header
(kind + parameters), then an uncompressed .npz archive of the state arrays.
Files are written atomically (temp file + rename).

Usage:
    save_sketch(sketch, "state/pass1.fsk")
    sketch = load_sketch("state/pass1.fsk")
"""

from __future__ import annotations

import io
import json
import logging
import struct
from typing import Callable, Dict

import numpy as np

from app.errors import FormatError
from app.fsketch.logsum import LogSumSketch
from app.fsketch.polysum import PolySumSketch
from app.utils.file_utils import PathLike, atomic_write_bytes

logger = logging.getLogger(__name__)

BLOB_MAGIC = b"FSKB"
BLOB_VERSION = 1
_PREFIX = struct.Struct("<4sHI")

_LOADERS: Dict[str, Callable] = {
    "logsum": LogSumSketch.from_state,
    "polysum": PolySumSketch.from_state,
}


def register_loader(kind: str, loader: Callable) -> None:
    """Make another sketch kind loadable (used by the matrix product sketch)."""
    _LOADERS[kind] = loader


def dumps_sketch(sketch) -> bytes:
    kind, params, arrays = sketch.to_state()
    header = json.dumps({"kind": kind, "params": params}, sort_keys=True).encode("utf-8")
    payload = io.BytesIO()
    np.savez(payload, **arrays)
    return _PREFIX.pack(BLOB_MAGIC, BLOB_VERSION, len(header)) + header + payload.getvalue()


def loads_sketch(blob: bytes):
    """Rebuild a sketch from dumps_sketch output.

    Raises:
        FormatError: On bad magic, unknown version or kind, or a damaged payload
    """
    if len(blob) < _PREFIX.size:
        raise FormatError("Sketch blob shorter than its prefix", offset=len(blob))
    magic, version, header_len = _PREFIX.unpack_from(blob, 0)
    if magic != BLOB_MAGIC:
        raise FormatError(f"Bad sketch blob magic {magic!r}", offset=0)
    if version != BLOB_VERSION:
        raise FormatError(f"Unsupported sketch blob version {version}", offset=4)
    start = _PREFIX.size
    try:
        header = json.loads(blob[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Corrupt sketch blob header: {e}", offset=start) from e
    kind = header.get("kind")
    if kind not in _LOADERS:
        raise FormatError(f"Unknown sketch kind '{kind}'", offset=start)
    try:
        with np.load(io.BytesIO(blob[start + header_len:]), allow_pickle=False) as archive:
            arrays = {name: archive[name] for name in archive.files}
    except (OSError, ValueError) as e:
        raise FormatError(f"Corrupt sketch blob payload: {e}", offset=start + header_len) from e
    return _LOADERS[kind](header["params"], arrays)


def save_sketch(sketch, path: PathLike) -> None:
    blob = dumps_sketch(sketch)
    atomic_write_bytes(path, blob)
    logger.info(f"Saved {type(sketch).__name__} state ({len(blob)} bytes) to {path}")


def load_sketch(path: PathLike):
    with open(path, "rb") as f:
        blob = f.read()
    return loads_sketch(blob)
