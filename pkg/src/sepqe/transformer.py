"""Single pre-norm transformer encoder layer built on the autodiff core.

Block structure: x + MHA(LN(x)), then + FFN(LN(.)) with a 4x hidden GELU
feed-forward. Dropout is deliberately absent so training runs are
deterministic. Positional encoding is off by default; a sinusoidal table
can be added by the caller before the layer.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, add, gelu, layer_norm, matmul, scaled_dot_attention
from .errors import DataError

FFN_RATIO = 4

# Parameter key -> shape builder; dim is the layer width.
_PARAM_SHAPES = {
    "ln1_gamma": lambda d: (d,),
    "ln1_beta": lambda d: (d,),
    "wq": lambda d: (d, d),
    "wk": lambda d: (d, d),
    "wv": lambda d: (d, d),
    "wo": lambda d: (d, d),
    "ln2_gamma": lambda d: (d,),
    "ln2_beta": lambda d: (d,),
    "w1": lambda d: (d, FFN_RATIO * d),
    "b1": lambda d: (FFN_RATIO * d,),
    "w2": lambda d: (FFN_RATIO * d, d),
    "b2": lambda d: (d,),
}


def init_transformer_params(rng: np.random.Generator, dim: int,
                            prefix: str = "tf.") -> dict[str, np.ndarray]:
    """Fan-in uniform weights, unit gains, zero shifts/biases."""
    params: dict[str, np.ndarray] = {}
    for name, shape_fn in _PARAM_SHAPES.items():
        shape = shape_fn(dim)
        if name.startswith("ln") and name.endswith("gamma"):
            value = np.ones(shape)
        elif len(shape) == 1:
            value = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            value = rng.uniform(-bound, bound, size=shape)
        params[prefix + name] = value
    return params


def transformer_layer(x: Tensor, params: dict[str, Tensor], n_heads: int,
                      block_len: int | None = None, prefix: str = "tf.") -> Tensor:
    """Apply the pre-norm encoder block to a (T, d) sequence.

    ``block_len`` marks row-stacked independent sequences (batched
    training); all sublayers except attention are row-wise anyway.
    """
    def p(name: str) -> Tensor:
        try:
            return params[prefix + name]
        except KeyError as exc:
            raise DataError(f"missing transformer parameter {prefix + name}") from exc

    d = x.data.shape[1]
    if d % n_heads != 0:
        raise DataError(f"layer width {d} not divisible by {n_heads} heads")
    attn_in = layer_norm(x, p("ln1_gamma"), p("ln1_beta"))
    attn = scaled_dot_attention(attn_in, p("wq"), p("wk"), p("wv"), p("wo"),
                                n_heads, block_len)
    h = add(x, attn)
    ffn_in = layer_norm(h, p("ln2_gamma"), p("ln2_beta"))
    hidden = gelu(add(matmul(ffn_in, p("w1")), p("b1")))
    ffn = add(matmul(hidden, p("w2")), p("b2"))
    return add(h, ffn)


def sinusoidal_encoding(n_frames: int, dim: int) -> np.ndarray:
    """Standard sin/cos positional table, (T, dim)."""
    position = np.arange(n_frames, dtype=np.float64)[:, None]
    idx = np.arange(dim, dtype=np.float64)[None, :]
    angle = position / np.power(10000.0, (2.0 * (idx // 2)) / dim)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return table
