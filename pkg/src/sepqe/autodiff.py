"""Minimal reverse-mode differentiation over double-precision numpy arrays.

Exactly the operator set the metric estimator needs: dense matmul, bias
add, feature-axis concat, time-axis mean pooling, layer norm, GELU,
row-wise softmax, multi-head scaled dot-product attention, and MSE loss.
Gradients accumulate through a topologically sorted closure walk, the
micrograd pattern scaled up to ndarray values.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .errors import DataError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Node in the computation graph; ``data`` is always float64."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def backward(self) -> None:
        """Backpropagate from a scalar output."""
        if self.data.size != 1:
            raise DataError(f"backward requires a scalar output, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _result(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(node: Tensor, grad: np.ndarray, owned: bool = False) -> None:
    """Accumulate into node.grad; ``owned`` marks a freshly allocated array
    that may be adopted without copying."""
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = grad if owned else grad.copy()
    else:
        node.grad += grad


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --- operators ---------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[0]:
        raise DataError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T, owned=True)
        if b.requires_grad:
            if a.data.ndim == 1:
                _accum(b, np.outer(a.data, g), owned=True)
            else:
                _accum(b, a.data.T @ g, owned=True)

    return _result(out_data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also covers the (T, D) + (D,) bias broadcast."""
    if a.data.shape == b.data.shape:
        def backward(g):
            _accum(a, g)
            _accum(b, g)
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        def backward(g):
            _accum(a, g)
            _accum(b, g.sum(axis=0))
    else:
        raise DataError(f"add shape mismatch: {a.shape} + {b.shape}")
    return _result(a.data + b.data, (a, b), backward)


def mul_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _accum(a, c * g, owned=True)

    return _result(c * a.data, (a,), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, g.T)

    return _result(a.data.T, (a,), backward)


def concat_cols(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise DataError("concat of zero tensors")
    rows = {p.data.shape[0] for p in parts}
    if len(rows) != 1:
        raise DataError(f"concat row mismatch: {sorted(rows)}")
    widths = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(part, g[:, lo:hi])

    return _result(np.concatenate([p.data for p in parts], axis=1), parts, backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def backward(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        _accum(a, full)

    return _result(a.data[:, start:stop].copy(), (a,), backward)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    def backward(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        _accum(a, full)

    return _result(a.data[start:stop].copy(), (a,), backward)


def concat_rows(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise DataError("concat of zero tensors")
    cols = {p.data.shape[1] for p in parts}
    if len(cols) != 1:
        raise DataError(f"concat column mismatch: {sorted(cols)}")
    heights = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + heights)

    def backward(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(part, g[lo:hi])

    return _result(np.concatenate([p.data for p in parts], axis=0), parts, backward)


def mean_pool(a: Tensor) -> Tensor:
    """Mean over the time axis: (T, D) -> (D,)."""
    if a.data.ndim != 2:
        raise DataError(f"mean_pool expects a (T, D) matrix, got shape {a.shape}")
    t = a.data.shape[0]

    def backward(g):
        _accum(a, np.broadcast_to(g / t, a.data.shape).copy())

    return _result(a.data.mean(axis=0), (a,), backward)


def mean_pool_blocks(a: Tensor, block_len: int) -> Tensor:
    """Per-block time mean over row-stacked sequences: (B*T, D) -> (B, D)."""
    rows, d = a.data.shape
    if block_len < 1 or rows % block_len != 0:
        raise DataError(f"{rows} rows do not split into blocks of {block_len}")
    b = rows // block_len

    def backward(g):
        _accum(a, np.repeat(g / block_len, block_len, axis=0))

    return _result(a.data.reshape(b, block_len, d).mean(axis=1), (a,), backward)


def gelu(a: Tensor) -> Tensor:
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out_data = x * cdf

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        _accum(a, g * (cdf + x * pdf), owned=True)

    return _result(out_data, (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Row-wise softmax over the last axis."""
    x = a.data
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DataError("softmax over an empty axis")
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        _accum(a, y * (g - inner), owned=True)

    return _result(y, (a,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Row-wise normalization to zero mean / unit variance, then affine.

    eps only guards exactly-constant rows; it is small enough that rows of
    ordinary scale normalize to unit variance within 1e-9.
    """
    v = x.data
    if v.ndim != 2 or v.shape[1] == 0:
        raise DataError(f"layer_norm expects a nonempty (T, D) matrix, got shape {x.shape}")
    d = v.shape[1]
    mu = v.mean(axis=1, keepdims=True)
    centered = v - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).sum(axis=0), owned=True)
        if beta.requires_grad:
            _accum(beta, g.sum(axis=0), owned=True)
        if not x.requires_grad:
            return
        gx = g * gamma.data
        # d/dx of (x - mu) * inv_std with mu, var both functions of x.
        gsum = gx.sum(axis=1, keepdims=True)
        gdot = (gx * xhat).sum(axis=1, keepdims=True)
        _accum(x, inv_std * (gx - gsum / d - xhat * gdot / d), owned=True)

    return _result(out_data, (x, gamma, beta), backward)


def scaled_dot_attention(x: Tensor, wq: Tensor, wk: Tensor, wv: Tensor,
                         wo: Tensor, n_heads: int,
                         block_len: int | None = None) -> Tensor:
    """Multi-head self-attention over a (T, d) sequence.

    With ``block_len`` set, rows are treated as independent stacked
    sequences of that length (batched training); attention never crosses
    block boundaries. One fused op: the head split and both batched
    matmuls run as 3-D BLAS calls instead of per-head graph nodes.
    """
    rows, d = x.data.shape
    if d % n_heads != 0:
        raise DataError(f"model width {d} not divisible by {n_heads} heads")
    if block_len is None:
        block_len = rows
    if block_len < 1 or rows % block_len != 0:
        raise DataError(f"{rows} rows do not split into blocks of {block_len}")
    n_blocks = rows // block_len
    head_dim = d // n_heads
    scale = 1.0 / math.sqrt(head_dim)

    def split(mat):
        # (rows, d) -> (n_blocks * n_heads, block_len, head_dim)
        return (mat.reshape(n_blocks, block_len, n_heads, head_dim)
                .transpose(0, 2, 1, 3)
                .reshape(n_blocks * n_heads, block_len, head_dim))

    def merge(stack):
        return (stack.reshape(n_blocks, n_heads, block_len, head_dim)
                .transpose(0, 2, 1, 3)
                .reshape(rows, d))

    xd = x.data
    q = split(xd @ wq.data)
    k = split(xd @ wk.data)
    v = split(xd @ wv.data)
    scores = np.matmul(q, k.transpose(0, 2, 1)) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    att = np.exp(scores)
    att /= att.sum(axis=-1, keepdims=True)
    merged = merge(np.matmul(att, v))
    out_data = merged @ wo.data

    def backward(g):
        if wo.requires_grad:
            _accum(wo, merged.T @ g, owned=True)
        if not (x.requires_grad or wq.requires_grad or wk.requires_grad
                or wv.requires_grad):
            return
        g_merged = split(g @ wo.data.T)
        g_att = np.matmul(g_merged, v.transpose(0, 2, 1))
        g_v = np.matmul(att.transpose(0, 2, 1), g_merged)
        g_scores = att * (g_att - (g_att * att).sum(axis=-1, keepdims=True))
        g_scores *= scale
        g_q = merge(np.matmul(g_scores, k))
        g_k = merge(np.matmul(g_scores.transpose(0, 2, 1), q))
        g_v = merge(g_v)
        if wq.requires_grad:
            _accum(wq, xd.T @ g_q, owned=True)
        if wk.requires_grad:
            _accum(wk, xd.T @ g_k, owned=True)
        if wv.requires_grad:
            _accum(wv, xd.T @ g_v, owned=True)
        if x.requires_grad:
            _accum(x, g_q @ wq.data.T + g_k @ wk.data.T + g_v @ wv.data.T,
                   owned=True)

    return _result(out_data, (x, wq, wk, wv, wo), backward)


def mse_loss(pred: Tensor, target) -> Tensor:
    t = np.asarray(target, dtype=np.float64)
    if pred.data.shape != t.shape:
        raise DataError(f"mse shape mismatch: {pred.shape} vs {t.shape}")
    diff = pred.data - t
    n = diff.size

    def backward(g):
        _accum(pred, g * (2.0 / n) * diff, owned=True)

    return _result(np.mean(diff * diff), (pred,), backward)
