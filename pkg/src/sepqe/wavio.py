"""Mono 16-bit PCM WAV read/write (little-endian RIFF).

Quantization maps amplitude x to round(x * 32767) clipped to int16, so a
write/read round trip is exact on already-quantized data and within one
LSB otherwise. Corpus labels are computed on quantized samples for that
reason; see dataset.py.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .audio import AudioSignal
from .errors import FormatError

_FULL_SCALE = 32767.0


def quantize16(samples: np.ndarray) -> np.ndarray:
    q = np.clip(np.rint(samples * _FULL_SCALE), -32768, 32767)
    return q.astype("<i2")


def quantized(signal: AudioSignal) -> AudioSignal:
    """The signal as it will read back after a WAV round trip."""
    return AudioSignal(quantize16(signal.samples) / _FULL_SCALE, signal.sample_rate)


def write_wav(path, signal: AudioSignal) -> None:
    data = quantize16(signal.samples)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(signal.sample_rate)
        w.writeframes(data.tobytes())


def read_wav_int16(path) -> tuple[np.ndarray, int]:
    """Raw int16 samples and rate; the compact form used by batch caches."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise FormatError(f"{path}: expected mono, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit samples, got {8 * w.getsampwidth()}-bit")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from exc
    data = np.frombuffer(raw, dtype="<i2")
    if data.size == 0:
        raise FormatError(f"{path}: empty WAV payload")
    return data, rate


def read_wav(path) -> AudioSignal:
    data, rate = read_wav_int16(path)
    return AudioSignal(data.astype(np.float64) / _FULL_SCALE, rate)


def wav_duration_s(path) -> float:
    """Duration from the header alone, without decoding samples."""
    with wave.open(str(path), "rb") as w:
        return w.getnframes() / w.getframerate()
