import numpy as np
import pytest
from spatial_attention_pyramid.exceptions import ConfigurationError, ShapeError
from spatial_attention_pyramid import Tape
from spatial_attention_pyramid.layers import BatchNorm1d
from spatial_attention_pyramid.utils import RunningStats, batch_norm_vec


def test_batch_norm_train_statistics():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 3))*4 + 2
    stats = RunningStats.zeros(3)
    y = batch_norm_vec(x, np.ones(3), np.zeros(3), stats, "train")
    assert np.allclose(y.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(y.var(axis=0), 1, atol=1e-3)
    assert np.allclose(stats.mean, 0.1*x.mean(axis=0))
    assert np.allclose(stats.var, 0.9 + 0.1*x.var(axis=0, ddof=1))


def test_batch_norm_eval_uses_running_statistics():
    stats = RunningStats(np.array([1.0, 2.0]), np.array([4.0, 9.0]))
    y = batch_norm_vec(np.array([3.0, 5.0]), np.ones(2), np.zeros(2), stats, "eval")
    assert np.allclose(y, [2/np.sqrt(4 + 1e-5), 3/np.sqrt(9 + 1e-5)])
    assert np.array_equal(stats.mean, [1.0, 2.0])


def test_batch_norm_errors():
    stats = RunningStats.zeros(2)
    with pytest.raises(ShapeError):
        batch_norm_vec(np.ones((1, 2)), np.ones(2), np.zeros(2), stats, "train")
    with pytest.raises(ConfigurationError):
        batch_norm_vec(np.ones((3, 2)), np.ones(2), np.zeros(2), stats, "test")


def test_layer_matches_kernel():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 4))*3 - 1
    layer = BatchNorm1d("norm", 4)
    layer.gamma.value[:] = rng.uniform(0.5, 2, size=4)
    layer.beta.value[:] = rng.standard_normal(4)
    stats = RunningStats.zeros(4)
    expected = batch_norm_vec(x, layer.gamma.value, layer.beta.value, stats, "train")
    tape = Tape()
    y = layer(tape.constant(x), "train")
    assert np.array_equal(y.value, expected)
    assert np.array_equal(layer.stats.mean, stats.mean)
    assert np.array_equal(layer(Tape().constant(x), "eval").value, batch_norm_vec(x, layer.gamma.value, layer.beta.value, stats, "eval"))
    with pytest.raises(ShapeError):
        layer(Tape().constant(x[0]), "eval")
