"""Compare the numba-jitted kernels against their pure-numpy fallbacks.

Run: python benchmarks/bench_kernels.py
The same comparison is what SEPQE_NO_NUMBA=1 switches at import time.
"""

import time

import numpy as np

from sepqe import _kernels


def bench(label, fn, *args, repeats=5):
    fn(*args)  # warm up (jit compilation, cache touch)
    best = min(_time(fn, *args) for _ in range(repeats))
    print(f"  {label:>12}: {best * 1e3:8.3f} ms")
    return best


def _time(fn, *args):
    t0 = time.perf_counter()
    fn(*args)
    return time.perf_counter() - t0


def main():
    rng = np.random.default_rng(0)

    print("edit_cost_matrix (500x500 tokens, alphabet 50):")
    ref = rng.integers(0, 50, size=500).astype(np.int32)
    hyp = rng.integers(0, 50, size=500).astype(np.int32)
    t_np = bench("numpy", _kernels.edit_cost_matrix_numpy, ref, hyp)
    if _kernels.NUMBA_ENABLED:
        t_nb = bench("numba", _kernels._edit_cost_matrix_jit, ref, hyp)
        assert np.array_equal(_kernels._edit_cost_matrix_jit(ref, hyp),
                              _kernels.edit_cost_matrix_numpy(ref, hyp))
        print(f"  speedup: {t_np / t_nb:.1f}x (results identical)")

    print("onepole_lowpass (10 s at 16 kHz):")
    x = rng.standard_normal(160000)
    t_np = bench("numpy", _kernels.onepole_lowpass_numpy, x, 0.95)
    if _kernels.NUMBA_ENABLED:
        t_nb = bench("numba", _kernels._onepole_lowpass_jit, x, 0.95)
        assert np.array_equal(_kernels._onepole_lowpass_jit(x, 0.95),
                              _kernels.onepole_lowpass_numpy(x, 0.95))
        print(f"  speedup: {t_np / t_nb:.1f}x (results identical)")

    if not _kernels.NUMBA_ENABLED:
        print("numba path disabled (SEPQE_NO_NUMBA set or numba missing); "
              "only the numpy fallback was timed.")
    print(f"active dispatch backend: {_kernels.backend_name()}")


if __name__ == "__main__":
    main()
