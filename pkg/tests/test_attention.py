import numpy as np
import pytest
from spatial_attention_pyramid import Parameter, PyramidConfig, SpatialAttentionPyramid, Tape
from spatial_attention_pyramid import operations as F
from spatial_attention_pyramid.exceptions import ShapeError
from spatial_attention_pyramid.utils import attention_vector, equal_scale_weights, softmax, softmax_flat


def loop_attention_vector(features, mask):
    batch, channels, height, width = features.shape
    expected = np.zeros((batch, channels))
    for n in range(batch):
        for c in range(channels):
            for i in range(height):
                for j in range(width):
                    expected[n, c] += features[n, c, i, j]*mask[n, i, j]
    return expected


def test_attention_vector_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        batch, channels, height, width = rng.integers(1, 5, size=4)
        features = rng.standard_normal((batch, channels, height, width))
        mask = rng.uniform(size=(batch, height, width))
        expected = loop_attention_vector(features, mask)
        tape = Tape()
        vector = F.attention_vector(tape.constant(features), tape.constant(mask))
        assert np.allclose(vector.value, expected, atol=1e-10)
        assert np.allclose(attention_vector(features[0], mask[0]), expected[0], atol=1e-10)


def test_attention_vector_is_linear_in_masked_features():
    rng = np.random.default_rng(1)
    first, second = rng.standard_normal((2, 2, 3, 4, 5))
    mask = softmax_flat(rng.standard_normal((2, 20))*3).reshape(2, 4, 5)
    assert not np.allclose(mask, 1/20)
    a, b = 0.7, -2.5

    def vector(features, weights=mask):
        tape = Tape()
        return F.attention_vector(tape.constant(features), tape.constant(weights)).value

    assert np.allclose(vector(a*first + b*second), a*vector(first) + b*vector(second), atol=1e-12)
    assert np.allclose(vector(first), (first*mask[:, None]).sum(axis=(2, 3)), atol=1e-12)
    other = rng.uniform(size=mask.shape)
    assert np.allclose(vector(first, a*mask + b*other), a*vector(first) + b*vector(first, other), atol=1e-12)

    features = Parameter("features", first)
    tape = Tape()
    tape.backward(F.sum(F.attention_vector(tape.watch(features), tape.constant(mask))))
    assert np.allclose(features.grad, np.broadcast_to(mask[:, None], first.shape))


def test_attention_vector_uniform_mask_is_mean():
    features = np.random.default_rng(1).standard_normal((4, 3, 5))
    mask = np.full((3, 5), 1/15)
    assert np.allclose(attention_vector(features, mask), features.mean(axis=(1, 2)))
    with pytest.raises(ShapeError):
        attention_vector(features, np.ones((5, 3)))


def test_fuse_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        levels, batch, channels = rng.integers(1, 6, size=3)
        vectors = rng.standard_normal((levels, batch, channels))
        weights = rng.uniform(size=(levels, batch, channels))
        expected = np.zeros((batch, channels))
        for level in range(levels):
            for n in range(batch):
                for c in range(channels):
                    expected[n, c] += vectors[level, n, c]*weights[level, n, c]
        tape = Tape()
        fused = tape.apply("fuse", tape.constant(vectors), tape.constant(weights))
        assert np.allclose(fused.value, expected, atol=1e-10)
    tape = Tape()
    with pytest.raises(ShapeError):
        F.fuse(tape.constant(np.ones((1, 2, 3))), tape.constant(np.ones((1, 2, 4))))


def test_equal_weights_fuse_to_mean():
    pyramid = SpatialAttentionPyramid(
        PyramidConfig(sizes=(1, 2, 3), channels=4, use_channel_attention=False),
        in_channels=4,
        guide_channels=2
    )
    rng = np.random.default_rng(3)
    tape = Tape()
    vectors = [tape.constant(rng.standard_normal((2, 4))) for _ in range(3)]
    weights, compact = pyramid.channel_attention(vectors, "train")
    assert compact is None
    assert np.array_equal(weights.value, equal_scale_weights(3, (2, 4)))
    fused = pyramid.fuse(vectors, weights)
    assert np.array_equal(fused.value, np.stack([v.value for v in vectors]).mean(axis=0))
    assert np.allclose(F.fuse(F.stack(vectors), weights).value, fused.value, atol=1e-15)


def test_normalisation():
    """Masks and scale weights stay distributions for random inputs and parameters."""
    pyramid = SpatialAttentionPyramid(
        PyramidConfig(sizes=(1, 2, 4), channels=4),
        in_channels=6,
        guide_channels=3
    )
    parameters = pyramid.parameters()
    rng = np.random.default_rng(4)
    for _ in range(1000):
        for parameter in parameters:
            parameter.value = rng.standard_normal(parameter.shape)*rng.uniform(0.1, 3)
        features = rng.standard_normal((2, 6, 5, 5))*rng.uniform(0.1, 10)
        guided_map = softmax(rng.standard_normal((2, 3, 5, 5))*5, axis=1)
        tape = Tape()
        _, state = pyramid(tape.constant(features), tape.constant(guided_map))
        for mask in state.masks:
            assert np.all(mask >= 0)
            assert np.all(np.abs(mask.sum(axis=(1, 2)) - 1) < 1e-6)
        weights = np.stack(state.channel_weights)
        assert np.all(weights >= 0)
        assert np.all(np.abs(weights.sum(axis=0) - 1) < 1e-6)


def test_softmax_stability():
    probabilities = softmax(np.array([1000.0, 1000.0, -1000.0]))
    assert np.allclose(probabilities, [0.5, 0.5, 0.0])
    assert np.allclose(softmax(np.zeros((2, 4)), axis=1), 0.25)
    logits = np.random.default_rng(5).standard_normal(12)
    assert np.allclose(softmax_flat(logits + 40.0), softmax_flat(logits), atol=1e-9)
