"""Self-describing binary tensor container (magic ``DST1``).

Layout: 4-byte magic ``44 53 54 31``, one dtype code byte (1 = float32,
2 = uint16), one dimension-count byte (1..8), two zero padding bytes,
then the extents as unsigned 64-bit little-endian integers, then the
row-major element data, little-endian regardless of host byte order.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"DST1"
MAX_NDIM = 8

_DTYPE_BY_CODE = {1: np.dtype("<f4"), 2: np.dtype("<u2")}
_CODE_BY_KIND = {np.dtype(np.float32): 1, np.dtype(np.uint16): 2}

_HEADER = struct.Struct("<4sBBH")


class TensorFormatError(ValueError):
    """A file does not conform to the container format."""


class BadMagicError(TensorFormatError):
    """The file does not start with the container magic."""


class TruncatedError(TensorFormatError):
    """The file ends before the declared header or payload is complete."""


class UnknownDtypeError(TensorFormatError):
    """The dtype code byte (or in-memory dtype) is not f32 or u16."""


class SizeMismatchError(TensorFormatError):
    """The payload size disagrees with the declared extents."""


def _check_dims(dims: tuple[int, ...]) -> None:
    if not 1 <= len(dims) <= MAX_NDIM:
        raise TensorFormatError(
            f"dimension count must be 1..{MAX_NDIM}, got {len(dims)}"
        )
    if any(d < 1 for d in dims):
        raise TensorFormatError(f"every extent must be >= 1, got {dims}")


def save_tensor(tensor: np.ndarray, path: str | Path) -> None:
    """Write ``tensor`` to ``path`` in the container format.

    Only float32 and uint16 arrays are accepted.  The write goes to a
    temporary file in the target directory followed by an atomic rename,
    so a crash never leaves a partial file at ``path``.
    """
    tensor = np.asarray(tensor)
    code = _CODE_BY_KIND.get(tensor.dtype.newbyteorder("="))
    if code is None:
        raise UnknownDtypeError(f"unsupported dtype {tensor.dtype}, need f32 or u16")
    _check_dims(tensor.shape)
    header = _HEADER.pack(MAGIC, code, tensor.ndim, 0)
    extents = struct.pack(f"<{tensor.ndim}Q", *tensor.shape)
    payload = np.ascontiguousarray(tensor).astype(_DTYPE_BY_CODE[code]).tobytes()
    atomic_write_bytes(path, header + extents + payload)


def load_tensor(path: str | Path) -> np.ndarray:
    """Read a container file and return its array in native byte order."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise TruncatedError(f"{path}: file shorter than the fixed header")
    magic, code, ndim, pad = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if pad != 0:
        raise TensorFormatError(f"{path}: nonzero header padding")
    dtype = _DTYPE_BY_CODE.get(code)
    if dtype is None:
        raise UnknownDtypeError(f"{path}: unknown dtype code {code}")
    if not 1 <= ndim <= MAX_NDIM:
        raise TensorFormatError(f"{path}: dimension count {ndim} out of range")
    offset = _HEADER.size + 8 * ndim
    if len(raw) < offset:
        raise TruncatedError(f"{path}: file ends inside the extents block")
    dims = struct.unpack_from(f"<{ndim}Q", raw, _HEADER.size)
    _check_dims(dims)
    expected = int(np.prod(dims, dtype=object)) * dtype.itemsize
    actual = len(raw) - offset
    if actual < expected:
        raise TruncatedError(
            f"{path}: payload holds {actual} bytes, header declares {expected}"
        )
    if actual > expected:
        raise SizeMismatchError(
            f"{path}: {actual - expected} trailing bytes after declared payload"
        )
    data = np.frombuffer(raw, dtype=dtype, count=expected // dtype.itemsize, offset=offset)
    return data.reshape(dims).astype(dtype.newbyteorder("="))


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a same-directory temp file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
