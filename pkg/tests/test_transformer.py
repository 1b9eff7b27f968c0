import numpy as np
import pytest

from helpers import check_gradients

from sepqe.autodiff import Tensor, mse_loss
from sepqe.errors import DataError
from sepqe.transformer import (init_transformer_params, sinusoidal_encoding,
                               transformer_layer)


def make_tensors(dim=8, seed=0, zero_residual=False):
    rng = np.random.default_rng(seed)
    arrays = init_transformer_params(rng, dim)
    if zero_residual:
        arrays["tf.wo"] = np.zeros_like(arrays["tf.wo"])
        arrays["tf.w2"] = np.zeros_like(arrays["tf.w2"])
    return {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}


def test_zero_input_zero_projections_is_identity():
    params = make_tensors(zero_residual=True)
    x = Tensor(np.zeros((5, 8)))
    out = transformer_layer(x, params, n_heads=2)
    assert np.array_equal(out.data, x.data)


def test_zero_residual_projections_pass_input_through():
    # With wo = w2 = 0 both residual branches vanish for any input.
    params = make_tensors(seed=3, zero_residual=True)
    rng = np.random.default_rng(4)
    x = Tensor(rng.standard_normal((6, 8)))
    out = transformer_layer(x, params, n_heads=2)
    assert np.allclose(out.data, x.data, atol=1e-15)


def test_time_permutation_equivariance():
    params = make_tensors(seed=5)
    rng = np.random.default_rng(6)
    x = rng.standard_normal((7, 8))
    perm = rng.permutation(7)
    out = transformer_layer(Tensor(x), params, n_heads=2).data
    out_perm = transformer_layer(Tensor(x[perm]), params, n_heads=2).data
    assert np.allclose(out_perm, out[perm], atol=1e-12)


def test_full_layer_gradient_vs_finite_differences():
    params = make_tensors(seed=7)
    rng = np.random.default_rng(8)
    x = Tensor(rng.standard_normal((3, 8)), requires_grad=True)
    target = rng.standard_normal((3, 8))

    def fn():
        return mse_loss(transformer_layer(x, params, n_heads=2), target)

    check_gradients(fn, {"x": x, **params})


def test_head_divisibility_enforced():
    params = make_tensors()
    with pytest.raises(DataError):
        transformer_layer(Tensor(np.zeros((4, 8))), params, n_heads=3)


def test_deterministic_forward():
    params = make_tensors(seed=9)
    x = Tensor(np.random.default_rng(10).standard_normal((4, 8)))
    a = transformer_layer(x, params, n_heads=4).data
    b = transformer_layer(x, params, n_heads=4).data
    assert np.array_equal(a, b)


def test_sinusoidal_encoding_shape_and_range():
    table = sinusoidal_encoding(12, 8)
    assert table.shape == (12, 8)
    assert np.max(np.abs(table)) <= 1.0
    assert not np.array_equal(table[0], table[1])
