"""Writer/reader for the DST1 tensor container consumed by the toolkit.

Wire format: magic ``DST1``, dtype code byte (1 = f32, 2 = u16),
dimension-count byte (1..8), two zero bytes, unsigned 64-bit
little-endian extents, then row-major little-endian data.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"DST1"
_HEADER = struct.Struct("<4sBBH")
_CODES = {np.dtype(np.float32): 1, np.dtype(np.uint16): 2}
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<u2")}


def write_dst(array: np.ndarray, path: str | Path) -> None:
    """Write a float32/uint16 array atomically in the container format."""
    array = np.asarray(array)
    code = _CODES.get(array.dtype.newbyteorder("="))
    if code is None:
        raise ValueError(f"container holds f32 or u16 arrays, not {array.dtype}")
    if not 1 <= array.ndim <= 8 or 0 in array.shape:
        raise ValueError(f"unsupported shape {array.shape}")
    blob = (
        _HEADER.pack(MAGIC, code, array.ndim, 0)
        + struct.pack(f"<{array.ndim}Q", *array.shape)
        + np.ascontiguousarray(array).astype(_DTYPES[code]).tobytes()
    )
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_dst(path: str | Path) -> np.ndarray:
    """Read a container file (used by this package's own tests)."""
    raw = Path(path).read_bytes()
    magic, code, ndim, _ = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a DST1 file")
    dims = struct.unpack_from(f"<{ndim}Q", raw, _HEADER.size)
    dtype = _DTYPES[code]
    data = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size + 8 * ndim)
    return data.reshape(dims).astype(dtype.newbyteorder("="))
