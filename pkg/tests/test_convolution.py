import numpy as np
import pytest
from spatial_attention_pyramid.exceptions import ShapeError
from spatial_attention_pyramid.utils import conv2d, conv2d_backward, conv2d_output_size


def loop_conv2d(x, weight, bias, stride, pad):
    channels, kernel = weight.shape[0], weight.shape[2]
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    height = (padded.shape[1] - kernel)//stride + 1
    width = (padded.shape[2] - kernel)//stride + 1
    out = np.zeros((channels, height, width))
    for c in range(channels):
        for i in range(height):
            for j in range(width):
                window = padded[:, i*stride:i*stride + kernel, j*stride:j*stride + kernel]
                out[c, i, j] = (window*weight[c]).sum() + bias[c]
    return out


def test_conv2d_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        stride, pad, kernel = rng.integers(1, 3), rng.integers(0, 2), rng.choice([1, 3])
        x = rng.standard_normal((2, 5, 6))
        weight = rng.standard_normal((3, 2, kernel, kernel))
        bias = rng.standard_normal(3)
        assert np.allclose(conv2d(x, weight, bias, stride, pad), loop_conv2d(x, weight, bias, stride, pad), atol=1e-12)


def test_conv2d_batch_matches_single():
    rng = np.random.default_rng(1)
    batch = rng.standard_normal((3, 2, 6, 6))
    weight, bias = rng.standard_normal((4, 2, 3, 3)), rng.standard_normal(4)
    out = conv2d(batch, weight, bias, 2, 1)
    assert out.shape == (3, 4, 3, 3)
    for index in range(3):
        assert np.allclose(out[index], conv2d(batch[index], weight, bias, 2, 1), atol=1e-12)


def test_conv2d_identity_kernel():
    x = np.random.default_rng(2).standard_normal((3, 4, 4))
    weight = np.eye(3)[:, :, None, None]
    assert np.array_equal(conv2d(x, weight, np.zeros(3)), x)


def test_conv2d_stride_arithmetic():
    assert conv2d_output_size(64, 3, 2, 1) == 32
    assert conv2d(np.zeros((3, 64, 64)), np.zeros((32, 3, 3, 3)), np.zeros(32), 2, 1).shape == (32, 32, 32)


def test_conv2d_backward_is_adjoint():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 7, 7))
    weight, bias = rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)
    grad = rng.standard_normal(conv2d(x, weight, bias, 2, 1).shape)
    grad_x, grad_weight, grad_bias = conv2d_backward(grad, x, weight, 2, 1)
    direction = rng.standard_normal(x.shape)
    linear = conv2d(direction, weight, np.zeros(4), 2, 1)
    assert np.isclose((grad*linear).sum(), (grad_x*direction).sum())
    assert np.allclose(grad_bias, grad.sum(axis=(0, 2, 3)))
    assert grad_weight.shape == weight.shape


def test_conv2d_shape_errors():
    with pytest.raises(ShapeError):
        conv2d(np.zeros((2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(ShapeError):
        conv2d(np.zeros((3, 2, 2)), np.zeros((1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(ShapeError):
        conv2d(np.zeros((3, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(2))


def test_conv2d_weight_gradient_oracle():
    rng = np.random.default_rng(4)
    for shape, stride, pad in (((2, 3, 8, 8), 2, 1), ((1, 2, 5, 6), 1, 0), ((3, 2, 6, 5), 2, 0)):
        x = rng.standard_normal(shape)
        weight, bias = rng.standard_normal((4, shape[1], 3, 3)), rng.standard_normal(4)
        grad = rng.standard_normal(conv2d(x, weight, bias, stride, pad).shape)
        grad_x, grad_weight, _ = conv2d_backward(grad, x, weight, stride, pad)
        expected = np.zeros_like(weight)
        for n in range(shape[0]):
            for c in range(4):
                unit = np.zeros_like(weight)
                for index in np.ndindex(weight.shape[1:]):
                    unit[:] = 0
                    unit[(c,) + index] = 1
                    response = loop_conv2d(x[n], unit, np.zeros(4), stride, pad)[c]
                    expected[(c,) + index] += (grad[n, c]*response).sum()
        assert np.allclose(grad_weight, expected, atol=1e-10)
        direction = rng.standard_normal(x.shape)
        linear = conv2d(direction, weight, np.zeros(4), stride, pad)
        assert np.isclose((grad*linear).sum(), (grad_x*direction).sum())


def test_conv2d_single_map_backward_keeps_rank():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 5, 5))
    weight = rng.standard_normal((3, 2, 3, 3))
    grad = rng.standard_normal((3, 5, 5))
    grad_x, grad_weight, grad_bias = conv2d_backward(grad, x, weight, 1, 1)
    assert grad_x.shape == x.shape
    assert grad_weight.shape == weight.shape
    assert grad_bias.shape == (3,)
