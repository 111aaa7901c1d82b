import numpy as np
import pytest
from spatial_attention_pyramid import PyramidConfig
from spatial_attention_pyramid.exceptions import ShapeError
from spatial_attention_pyramid.utils import avg_pool2d, avg_pool2d_backward, max_pool2d, max_pool2d_backward


def loop_pool(x, kernel, reduce):
    channels, height, width = x.shape
    out = np.zeros((channels, height - kernel + 1, width - kernel + 1))
    for c in range(channels):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                out[c, i, j] = reduce(x[c, i:i + kernel, j:j + kernel])
    return out


def test_pooling_oracles():
    rng = np.random.default_rng(0)
    for _ in range(100):
        height, width = rng.integers(1, 7, size=2)
        kernel = int(rng.integers(1, min(height, width) + 1))
        x = rng.standard_normal((2, height, width))
        assert np.allclose(avg_pool2d(x, kernel), loop_pool(x, kernel, np.mean), atol=1e-10)
        assert np.allclose(max_pool2d(x, kernel), loop_pool(x, kernel, np.max), atol=1e-10)


def test_pooling_edge_cases():
    x = np.random.default_rng(1).standard_normal((2, 5, 5))
    assert np.array_equal(avg_pool2d(x, 1), x)
    assert np.array_equal(max_pool2d(x, 1), x)
    assert np.allclose(avg_pool2d(x, 5)[:, 0, 0], x.mean(axis=(1, 2)))
    assert avg_pool2d(np.zeros((256, 38, 38)), 37).shape == (256, 2, 2)
    with pytest.raises(ShapeError):
        avg_pool2d(x, 6)
    with pytest.raises(ShapeError):
        max_pool2d(x, 0)


def test_detection_pyramid_shapes():
    shapes = PyramidConfig.detection().level_shapes(38, 38)
    assert [height for height, _ in shapes] == [36, 33, 30, 27, 24, 21, 18, 15, 12, 9, 6, 4, 2]


def test_pooling_backward():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 5, 5))
    grad = rng.standard_normal((1, 2, 3, 3))
    grad_avg = avg_pool2d_backward(grad, x.shape, 3)
    assert np.isclose((grad_avg*x).sum(), (grad*avg_pool2d(x, 3)).sum())
    grad_max = max_pool2d_backward(grad, x, 3)
    assert np.isclose(grad_max.sum(), grad.sum())
    assert np.isclose((grad_max*x).sum(), (grad*max_pool2d(x, 3)).sum())


def test_max_pool_ties_go_to_first_maximum():
    x = np.ones((1, 1, 2, 2))
    grad = max_pool2d_backward(np.ones((1, 1, 1, 1)), x, 2)
    assert grad[0, 0, 0, 0] == 1.0
    assert grad.sum() == 1.0
