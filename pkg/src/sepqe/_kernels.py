"""Hot numeric kernels: numba-jitted loops with pure-numpy fallbacks.

The two genuine scalar inner loops in this package live here: the
edit-distance table fill (O(m*n) over token ids) and the one-pole IIR
low-pass (sequential recurrence). Everything else in the package is
BLAS-bound and gains nothing from jitting.

Set SEPQE_NO_NUMBA=1 to force the numpy implementations. Both paths are
bit-identical (integer DP; same-order float recurrence) and both are
exercised by the test suite. ``benchmarks/bench_kernels.py`` compares them.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.signal import lfilter


def _numba_requested() -> bool:
    flag = os.environ.get("SEPQE_NO_NUMBA", "").strip().lower()
    return flag not in {"1", "true", "yes"}


NUMBA_ENABLED = False
if _numba_requested():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# Edit-distance DP table (unit costs). d[i, j] = distance between the first
# i reference tokens and the first j hypothesis tokens.
# ---------------------------------------------------------------------------

def edit_cost_matrix_numpy(ref_ids: np.ndarray, hyp_ids: np.ndarray) -> np.ndarray:
    """Row-vectorized Levenshtein table; exact integer math."""
    m, n = ref_ids.shape[0], hyp_ids.shape[0]
    d = np.empty((m + 1, n + 1), dtype=np.int32)
    d[0, :] = np.arange(n + 1, dtype=np.int32)
    d[:, 0] = np.arange(m + 1, dtype=np.int32)
    cols = np.arange(1, n + 1, dtype=np.int32)
    for i in range(1, m + 1):
        prev = d[i - 1]
        sub = prev[:-1] + (hyp_ids != ref_ids[i - 1])
        cand = np.minimum(sub, prev[1:] + 1)
        # Fold the left-to-right insertion chain in closed form:
        # d[i, j] = j + min(i, min_{k<=j} (cand[k] - k)).
        acc = np.minimum.accumulate(np.concatenate(([np.int32(i)], cand - cols)))
        d[i, 1:] = acc[1:] + cols
    return d


if NUMBA_ENABLED:

    @njit(cache=True)
    def _edit_cost_matrix_jit(ref_ids, hyp_ids):  # pragma: no cover - jitted
        m = ref_ids.shape[0]
        n = hyp_ids.shape[0]
        d = np.empty((m + 1, n + 1), dtype=np.int32)
        for j in range(n + 1):
            d[0, j] = j
        for i in range(1, m + 1):
            d[i, 0] = i
            ri = ref_ids[i - 1]
            for j in range(1, n + 1):
                cost = 0 if hyp_ids[j - 1] == ri else 1
                best = d[i - 1, j - 1] + cost
                dele = d[i - 1, j] + 1
                if dele < best:
                    best = dele
                ins = d[i, j - 1] + 1
                if ins < best:
                    best = ins
                d[i, j] = best
        return d


def edit_cost_matrix(ref_ids: np.ndarray, hyp_ids: np.ndarray) -> np.ndarray:
    ref_ids = np.ascontiguousarray(ref_ids, dtype=np.int32)
    hyp_ids = np.ascontiguousarray(hyp_ids, dtype=np.int32)
    if NUMBA_ENABLED:
        return _edit_cost_matrix_jit(ref_ids, hyp_ids)
    return edit_cost_matrix_numpy(ref_ids, hyp_ids)


# ---------------------------------------------------------------------------
# One-pole low-pass: y[t] = coeff * y[t-1] + (1 - coeff) * x[t], y[-1] = 0.
# ---------------------------------------------------------------------------

def onepole_lowpass_numpy(x: np.ndarray, coeff: float) -> np.ndarray:
    b = np.array([1.0 - coeff], dtype=np.float64)
    a = np.array([1.0, -coeff], dtype=np.float64)
    return lfilter(b, a, x)


if NUMBA_ENABLED:

    @njit(cache=True)
    def _onepole_lowpass_jit(x, coeff):  # pragma: no cover - jitted
        y = np.empty_like(x)
        gain = 1.0 - coeff
        prev = 0.0
        for t in range(x.shape[0]):
            prev = coeff * prev + gain * x[t]
            y[t] = prev
        return y


def onepole_lowpass(x: np.ndarray, coeff: float) -> np.ndarray:
    if not 0.0 <= coeff < 1.0:
        raise ValueError(f"filter coefficient must be in [0, 1), got {coeff}")
    x = np.ascontiguousarray(x, dtype=np.float64)
    if NUMBA_ENABLED:
        return _onepole_lowpass_jit(x, float(coeff))
    return onepole_lowpass_numpy(x, float(coeff))


def warmup() -> None:
    """Trigger jit compilation so timed sections do not pay for it."""
    edit_cost_matrix(np.array([0, 1], dtype=np.int32), np.array([1], dtype=np.int32))
    onepole_lowpass(np.zeros(4), 0.5)
