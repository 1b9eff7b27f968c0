"""Feature extraction front-end.

Two routes produce (T, D) frame features for the estimator: a small
learnable frame encoder (Hann-windowed frames through a linear projection
and GELU) and a file-backed loader for externally computed features in
RFQF form. Defaults of 400-sample frames with a 320-sample hop at 16 kHz
give the same ~50 Hz frame rate the file-backed route is expected to use,
so the two stay interchangeable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio import AudioSignal
from .autodiff import Tensor, add, gelu, matmul
from .errors import DataError
from .features import FeatureSequence, read_features
from .manifest import FEATURE_TRACKS, ManifestEntry

DEFAULT_FRAME_LEN = 400
DEFAULT_HOP = 320
DEFAULT_DIM = 64


@dataclass(frozen=True, eq=False)
class ToyEncoderParams:
    projection: np.ndarray  # (frame_len, dim)
    bias: np.ndarray        # (dim,)
    frame_len: int
    hop: int

    def __post_init__(self):
        if not self.frame_len > self.hop > 0:
            raise DataError(f"need frame_len > hop > 0, got {self.frame_len}, {self.hop}")
        if self.projection.shape[0] != self.frame_len or self.projection.ndim != 2:
            raise DataError(f"projection shape {self.projection.shape} does not "
                            f"match frame_len {self.frame_len}")
        if self.bias.shape != (self.projection.shape[1],):
            raise DataError("bias width does not match projection width")

    @property
    def dim(self) -> int:
        return int(self.projection.shape[1])


def init_encoder_params(rng: np.random.Generator, frame_len: int = DEFAULT_FRAME_LEN,
                        hop: int = DEFAULT_HOP, dim: int = DEFAULT_DIM) -> ToyEncoderParams:
    bound = 1.0 / np.sqrt(frame_len)
    projection = rng.uniform(-bound, bound, size=(frame_len, dim))
    return ToyEncoderParams(projection, np.zeros(dim), frame_len, hop)


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    if n_samples < frame_len:
        raise DataError(f"signal of {n_samples} samples is shorter than one "
                        f"{frame_len}-sample frame")
    return (n_samples - frame_len) // hop + 1


_HANN_CACHE: dict[int, np.ndarray] = {}


def _hann(frame_len: int) -> np.ndarray:
    window = _HANN_CACHE.get(frame_len)
    if window is None:
        window = _HANN_CACHE.setdefault(frame_len, np.hanning(frame_len))
    return window


def frame_samples(samples: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Hann-windowed frames, (T, frame_len)."""
    t = frame_count(samples.size, frame_len, hop)
    frames = sliding_window_view(samples, frame_len)[::hop][:t]
    return frames * _hann(frame_len)


def frame_signal(signal: AudioSignal, frame_len: int, hop: int) -> np.ndarray:
    return frame_samples(signal.samples, frame_len, hop)


def extract(signal: AudioSignal, params: ToyEncoderParams) -> FeatureSequence:
    """Frame features from the toy encoder; pure numpy, no graph."""
    frames = frame_signal(signal, params.frame_len, params.hop)
    pre = frames @ params.projection + params.bias
    feats = gelu(Tensor(pre)).data
    return FeatureSequence(feats, frame_rate=signal.sample_rate / params.hop)


def extract_graph(signal: AudioSignal, projection: Tensor, bias: Tensor,
                  frame_len: int, hop: int) -> Tensor:
    """Same computation as ``extract`` but differentiable in the params."""
    frames = Tensor(frame_signal(signal, frame_len, hop))
    return gelu(add(matmul(frames, projection), bias))


def load_triplet_features(entry: ManifestEntry, root) -> dict[str, FeatureSequence]:
    """Read the three RFQF files of an entry, check D, align T.

    All three tracks are truncated to the minimum frame count so they can
    be concatenated along the feature axis.
    """
    if entry.features is None:
        raise DataError(
            f"entry {entry.id} has no feature paths; extract features with the "
            "toy encoder instead, or run the export helper first")
    seqs = {}
    for track in FEATURE_TRACKS:
        path = entry.features.get(track)
        if path is None:
            raise DataError(
                f"entry {entry.id} is missing the {track!r} feature path; "
                "use the toy encoder instead")
        seqs[track] = read_features(root / path)
    dims = {track: seq.dim for track, seq in seqs.items()}
    if len(set(dims.values())) != 1:
        raise DataError(f"entry {entry.id}: feature dimension mismatch across tracks: {dims}")
    t_min = min(seq.n_frames for seq in seqs.values())
    return {track: seq.truncated(t_min) for track, seq in seqs.items()}


def extract_from_file(entry: ManifestEntry, track: str, root) -> FeatureSequence:
    if track not in FEATURE_TRACKS:
        raise DataError(f"unknown track {track!r}, expected one of {FEATURE_TRACKS}")
    return load_triplet_features(entry, root)[track]
