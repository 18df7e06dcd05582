import hashlib
import os
from pathlib import Path
from typing import Union

PathLike = Union[str, os.PathLike]


def ensure_parent_dir(path: PathLike) -> Path:
    """
    Create the parent directory of `path` if it does not exist.

    Returns:
        path as a Path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """
    Write bytes to disk through a temp file and a rename, so readers never
    see a half-written file.

    Returns:
        path (Path): Path to the written file
    """
    path = ensure_parent_dir(path)
    temp_path = path.with_name(path.name + ".tmp")
    with open(temp_path, "wb") as buffer:
        buffer.write(data)
    temp_path.replace(path)
    return path


def sha256_file(path: PathLike, chunk_size: int = 1 << 20) -> str:
    """Hex SHA-256 digest of a file's contents."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(chunk_size), b""):
            digest.update(block)
    return digest.hexdigest()
