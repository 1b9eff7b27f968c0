"""Scale-invariant SNR oracle with utterance-level permutation resolution."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audio import AudioSignal
from .errors import DataError

SISNR_CLAMP_DB = 50.0
_EPS = 1e-12


@dataclass(frozen=True)
class SiSnrResult:
    """Per-source SI-SNR (dB), their mean, and the chosen pairing.

    ``permutation[k]`` is the estimate index paired with reference k.
    """

    per_source: tuple[float, float]
    average: float
    permutation: tuple[int, int]


def si_snr(reference: AudioSignal, estimate: AudioSignal) -> float:
    """SI-SNR of ``estimate`` against ``reference`` in dB, clamped to +-50.

    Both signals are zero-meaned; the reference is rescaled by the optimal
    projection coefficient before the energy ratio, so the result is
    invariant to rescaling of either argument.
    """
    if len(reference) != len(estimate):
        raise DataError(
            f"length mismatch: reference {len(reference)} vs estimate {len(estimate)}")
    if len(reference) < 2:
        raise DataError("signals must have at least 2 samples")
    s = reference.samples - np.mean(reference.samples)
    e = estimate.samples - np.mean(estimate.samples)
    s_energy = float(np.dot(s, s))
    if s_energy == 0.0:
        raise DataError("reference is constant (zero variance after mean removal)")
    alpha = float(np.dot(e, s)) / s_energy
    target = alpha * s
    err = e - target
    ratio = (float(np.dot(target, target)) + _EPS) / (float(np.dot(err, err)) + _EPS)
    value = 10.0 * math.log10(ratio)
    return max(-SISNR_CLAMP_DB, min(SISNR_CLAMP_DB, value))


def si_snr_pit(references: tuple[AudioSignal, AudioSignal],
               estimates: tuple[AudioSignal, AudioSignal]) -> SiSnrResult:
    """Evaluate both pairings and keep the one maximizing mean SI-SNR.

    Ties resolve to the identity pairing.
    """
    best: SiSnrResult | None = None
    for perm in ((0, 1), (1, 0)):
        vals = tuple(si_snr(references[k], estimates[perm[k]]) for k in (0, 1))
        avg = (vals[0] + vals[1]) / 2.0
        if best is None or avg > best.average:
            best = SiSnrResult(vals, avg, perm)
    return best
