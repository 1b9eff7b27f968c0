"""Standalone RFQF writer.

The format is the interchange contract with the sepqe toolkit: magic
b"RFQF", u32 version=1, u32 T, u32 D, then T*D little-endian float32
values row-major. Written here independently so any exporter in any
ecosystem can produce it; the sepqe reader is the validator of record.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"RFQF"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_rfqf(path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ValueError(f"feature matrix must be (T>=1, D>=1), got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("feature matrix contains non-finite values")
    t, d = matrix.shape
    payload = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    Path(path).write_bytes(_HEADER.pack(MAGIC, VERSION, t, d) + payload)
