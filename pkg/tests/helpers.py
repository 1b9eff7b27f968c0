"""Shared test utilities: the central finite-difference gradient oracle."""

import numpy as np

from sepqe.autodiff import Tensor

FD_EPS = 1e-5
FD_RTOL = 1e-6


def finite_difference_grad(fn, tensors: dict[str, Tensor],
                           wrt: str, eps: float = FD_EPS) -> np.ndarray:
    """Central differences of the scalar fn output w.r.t. tensors[wrt].data."""
    base = tensors[wrt].data
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn().data.item()
        flat[i] = orig - eps
        lo = fn().data.item()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def check_gradients(fn, tensors: dict[str, Tensor], rtol: float = FD_RTOL) -> float:
    """Backprop fn() and compare every requires_grad tensor against FD.

    Returns the worst relative error seen.
    """
    for t in tensors.values():
        t.grad = None
    out = fn()
    out.backward()
    worst = 0.0
    for name, t in tensors.items():
        if not t.requires_grad:
            continue
        fd = finite_difference_grad(fn, tensors, name)
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        scale = max(np.max(np.abs(fd)), np.max(np.abs(analytic)), 1e-8)
        rel = np.max(np.abs(analytic - fd)) / scale
        assert rel < rtol, f"gradient mismatch for {name}: rel err {rel:.3e}"
        worst = max(worst, rel)
    return worst
