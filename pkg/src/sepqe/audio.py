"""Audio containers, synthetic pseudo-speech, mixing, and degradation.

All signal math is double precision. Generation is deterministic under a
fixed seed, so corpora and their labels are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import onepole_lowpass
from .errors import DataError

DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True, eq=False)
class AudioSignal:
    """Mono sample vector (dimensionless amplitude) with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise DataError("samples must be a nonempty 1-D vector")
        if int(self.sample_rate) <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise DataError("samples contain non-finite values")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, eq=False)
class SeparationTriplet:
    """Mixture plus two estimated tracks, optionally with references."""

    mixture: AudioSignal
    estimates: tuple[AudioSignal, AudioSignal]
    references: tuple[AudioSignal, AudioSignal] | None = None
    ref_transcripts: tuple[list[str], list[str]] | None = None
    id: str = ""

    def __post_init__(self):
        signals = [self.mixture, *self.estimates]
        if self.references is not None:
            signals.extend(self.references)
        rates = {s.sample_rate for s in signals}
        if len(rates) != 1:
            raise DataError(f"triplet signals disagree on sample rate: {sorted(rates)}")
        n = len(self.mixture)
        for est in self.estimates:
            if len(est) != n:
                raise DataError("estimate length differs from mixture length")
        if self.references is not None:
            for ref in self.references:
                if len(ref) != n:
                    raise DataError("reference length differs from mixture length")


def _require_aligned(*signals: AudioSignal) -> None:
    rates = {s.sample_rate for s in signals}
    if len(rates) != 1:
        raise DataError(f"signals disagree on sample rate: {sorted(rates)}")
    lengths = {len(s) for s in signals}
    if len(lengths) != 1:
        raise DataError(f"signals disagree on length: {sorted(lengths)}")


def synth_source(seed: int, duration_s: float,
                 sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioSignal:
    """Deterministic pseudo-speech standing in for real utterances.

    Sum of 3..6 amplitude-modulated sinusoids with seeded random carrier,
    envelope rate, and phase, over a bed of low-passed noise; peak
    normalized to 0.5.
    """
    if duration_s <= 0:
        raise DataError(f"duration_s must be positive, got {duration_s}")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n, dtype=np.float64) / sample_rate
    sig = np.zeros(n, dtype=np.float64)
    for _ in range(int(rng.integers(3, 7))):
        carrier = rng.uniform(90.0, 2400.0)
        env_rate = rng.uniform(1.5, 7.0)
        amp = rng.uniform(0.4, 1.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        env_phase = rng.uniform(0.0, 2.0 * np.pi)
        env = 0.5 * (1.0 + np.sin(2.0 * np.pi * env_rate * t + env_phase))
        sig += amp * env * np.sin(2.0 * np.pi * carrier * t + phase)
    bed = onepole_lowpass(rng.standard_normal(n), 0.95)
    bed_peak = np.max(np.abs(bed))
    if bed_peak > 0:
        sig += 0.15 * bed / bed_peak
    sig *= 0.5 / np.max(np.abs(sig))
    return AudioSignal(sig, sample_rate)


def synth_noise(seed: int, duration_s: float,
                sample_rate: int = DEFAULT_SAMPLE_RATE) -> AudioSignal:
    """Low-passed white noise, peak normalized to 0.5, seeded."""
    if duration_s <= 0:
        raise DataError(f"duration_s must be positive, got {duration_s}")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    x = onepole_lowpass(rng.standard_normal(n), 0.9)
    x *= 0.5 / np.max(np.abs(x))
    return AudioSignal(x, sample_rate)


def mix(sources: tuple[AudioSignal, AudioSignal], noise: AudioSignal,
        snr_db: float) -> AudioSignal:
    """Sum the two sources and add noise scaled to the requested SNR.

    ``snr_db`` is the power ratio of (s1 + s2) to the scaled noise;
    ``math.inf`` disables the noise term entirely.
    """
    s1, s2 = sources
    _require_aligned(s1, s2, noise)
    summed = s1.samples + s2.samples
    if math.isinf(snr_db) and snr_db > 0:
        return AudioSignal(summed, s1.sample_rate)
    p_sig = float(np.mean(np.square(summed)))
    p_noise = float(np.mean(np.square(noise.samples)))
    if p_sig == 0.0:
        raise DataError("summed sources have zero power; finite SNR is undefined")
    if p_noise == 0.0:
        raise DataError("noise has zero power; cannot scale to a finite SNR")
    gain = math.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))
    return AudioSignal(summed + gain * noise.samples, s1.sample_rate)


# Degradation leak coefficients at delta=1; the seeded jitter keeps entries
# from collapsing onto one delta->SI-SNR curve.
_INTERFERENCE_LEAK = (0.55, 0.15)
_NOISE_LEAK = (0.35, 0.15)


def degrade(reference: AudioSignal, interference: AudioSignal,
            noise: AudioSignal, delta: float, seed: int) -> AudioSignal:
    """Simulate a separator output at degradation level ``delta`` in [0, 1].

    Returns (1 - 0.5*delta) * reference + a(delta) * interference +
    b(delta) * noise with a, b monotone in delta and a(0) = b(0) = 0, so
    delta=0 reproduces the reference exactly and larger delta leaks more
    of the competing source and noise.
    """
    if not 0.0 <= delta <= 1.0:
        raise DataError(f"delta must be in [0, 1], got {delta}")
    _require_aligned(reference, interference, noise)
    rng = np.random.default_rng(seed)
    a = delta * (_INTERFERENCE_LEAK[0] + _INTERFERENCE_LEAK[1] * rng.random())
    b = delta * (_NOISE_LEAK[0] + _NOISE_LEAK[1] * rng.random())
    out = ((1.0 - 0.5 * delta) * reference.samples
           + a * interference.samples + b * noise.samples)
    return AudioSignal(out, reference.sample_rate)
