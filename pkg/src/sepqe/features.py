"""Frame-feature matrices and the RFQF binary interchange format.

RFQF layout: magic b"RFQF", u32 version (=1), u32 T, u32 D, then T*D
float32 little-endian values in row-major order. The header is fixed-size
and seekable; the payload carries no compression. This format is one of
the toolkit's public data contracts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

RFQF_MAGIC = b"RFQF"
RFQF_VERSION = 1
_HEADER = struct.Struct("<4sIII")

DEFAULT_FRAME_RATE = 50.0


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """(T, D) matrix of frame features at a given frame rate."""

    data: np.ndarray
    frame_rate: float = DEFAULT_FRAME_RATE

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise FormatError(f"features must be a (T>=1, D>=1) matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise FormatError("features contain non-finite values")
        if self.frame_rate <= 0:
            raise FormatError(f"frame_rate must be positive, got {self.frame_rate}")

    @property
    def n_frames(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    def truncated(self, n_frames: int) -> "FeatureSequence":
        return FeatureSequence(self.data[:n_frames], self.frame_rate)


def write_features(path, feats: FeatureSequence) -> None:
    t, d = feats.data.shape
    header = _HEADER.pack(RFQF_MAGIC, RFQF_VERSION, t, d)
    payload = np.ascontiguousarray(feats.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_features(path, frame_rate: float = DEFAULT_FRAME_RATE) -> FeatureSequence:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    magic, version, t, d = _HEADER.unpack_from(blob)
    if magic != RFQF_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != RFQF_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + t * d * 4
    if len(blob) < expected:
        raise FormatError(
            f"{path}: truncated payload, header claims {t}x{d} "
            f"({expected} bytes) but file has {len(blob)}")
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing bytes after payload")
    data = np.frombuffer(blob, dtype="<f4", count=t * d, offset=_HEADER.size)
    return FeatureSequence(data.astype(np.float64).reshape(t, d), frame_rate)
