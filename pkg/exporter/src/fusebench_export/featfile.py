"""FEAT feature-file serialization.

Byte layout (little-endian): magic ``FEAT``; version u32 = 1; n u32;
d u32; n*d float32 row-major; n u32 sample ids.  Writes are atomic
(write to a temp file, then rename into place).
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"FEAT"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_feat(path: str, ids, features: np.ndarray) -> None:
    features = np.ascontiguousarray(features, dtype="<f4")
    ids = np.ascontiguousarray(ids, dtype="<u4")
    if features.ndim != 2 or features.shape[0] != len(ids):
        raise ValueError(f"need one id per feature row, got {len(ids)} ids for "
                         f"shape {features.shape}")
    if features.shape[0] < 1 or features.shape[1] < 1:
        raise ValueError("feature table must be non-empty")
    if len(np.unique(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    if not np.all(np.isfinite(features)):
        raise ValueError("refusing to write non-finite feature values")

    n, d = features.shape
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".feat-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, n, d))
            fh.write(features.tobytes())
            fh.write(ids.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_feat(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Returns (ids, features); used to verify our own output."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, n, d = _HEADER.unpack_from(data, 0)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"not a FEAT v{VERSION} file: {path}")
    expected = _HEADER.size + 4 * n * d + 4 * n
    if len(data) != expected:
        raise ValueError(f"expected {expected} bytes, found {len(data)}: {path}")
    features = np.frombuffer(data, dtype="<f4", count=n * d, offset=_HEADER.size)
    ids = np.frombuffer(data, dtype="<u4", count=n, offset=_HEADER.size + 4 * n * d)
    return ids.copy(), features.reshape(n, d).copy()
