import numpy as np
import pytest
from spatial_attention_pyramid import operations as F
from spatial_attention_pyramid.autodiff import (
    Parameter,
    Tape,
    finite_difference_check,
    grad_reverse,
    register_operation
)
from spatial_attention_pyramid.exceptions import ConfigurationError, ShapeError


def test_backward_accumulates_shared_uses():
    x = Parameter("x", np.array([1.0, -2.0, 3.0]))
    tape = Tape()
    watched = tape.watch(x)
    loss = F.sum(F.add(F.mul(watched, watched), F.scale(watched, 3.0)))
    gradients = tape.backward(loss)
    assert np.allclose(x.grad, 2*x.value + 3.0)
    assert np.array_equal(gradients["x"], x.grad)
    assert tape.parameters() == [x]


def test_backward_needs_a_scalar():
    tape = Tape()
    with pytest.raises(ShapeError):
        tape.backward(tape.constant(np.ones(3)))


def test_unknown_and_duplicated_operations():
    tape = Tape()
    with pytest.raises(ConfigurationError):
        tape.apply("teleport", tape.constant(np.ones(2)))
    with pytest.raises(ConfigurationError):
        register_operation("add", lambda a, b: (a + b, {}), lambda g, s: (g, g))


def test_variables_of_another_tape_are_rejected():
    with pytest.raises(ValueError):
        F.add(Tape().constant(np.ones(2)), Tape().constant(np.ones(2)))


def test_grad_reverse_contract():
    rng = np.random.default_rng(0)
    x = Parameter("x", rng.standard_normal((3, 4)))
    upstream = rng.standard_normal((3, 4))
    for lam in (0.0, 0.1, 1.0, 2.5):
        x.zero_grad()
        tape = Tape()
        reversed_ = grad_reverse(tape.watch(x), lam)
        assert np.array_equal(reversed_.value, x.value)
        tape.backward(F.sum(F.mul(reversed_, tape.constant(upstream))))
        assert np.array_equal(x.grad, -lam*upstream)


def test_grad_reverse_zero_kills_the_gradient():
    x = Parameter("x", np.ones(4))
    tape = Tape()
    tape.backward(F.sum(grad_reverse(tape.watch(x), 0.0)))
    assert not np.any(x.grad)


def test_grad_reverse_rejects_negative_factor():
    with pytest.raises(ConfigurationError):
        grad_reverse(Tape().constant(np.ones(2)), -1.0)


def test_finite_difference_check_detects_wrong_gradient():
    x = Parameter("x", np.random.default_rng(1).standard_normal(5))
    report = finite_difference_check(lambda tape: F.sum(F.sigmoid(tape.watch(x))), [x], tolerance=1e-6)
    assert report.passed
    # The reversal is an identity forward, so finite differences disagree with its backward.
    report = finite_difference_check(lambda tape: F.sum(grad_reverse(F.sigmoid(tape.watch(x)), 1.0)), [x])
    assert not report.passed
    assert report.failing == ["x"]


def test_stacked_grad_reverse_multiplies_factors():
    rng = np.random.default_rng(1)
    x = Parameter("x", rng.standard_normal(5))
    upstream = rng.standard_normal(5)
    for first, second in ((0.5, 2.0), (1.0, 0.1), (0.25, 0.0)):
        x.zero_grad()
        tape = Tape()
        reversed_ = grad_reverse(grad_reverse(tape.watch(x), first), second)
        assert np.array_equal(reversed_.value, x.value)
        tape.backward(F.sum(F.mul(reversed_, tape.constant(upstream))))
        assert np.allclose(x.grad, first*second*upstream, rtol=1e-14, atol=0)


def test_finite_difference_floor_bounds_small_gradients():
    x = Parameter("x", np.random.default_rng(2).standard_normal(4))

    def halved(tape):
        # Forward identity whose backward halves the gradient.
        return F.sum(F.scale(grad_reverse(grad_reverse(tape.watch(x), 1.0), 0.5), 1e-9))

    # A 5e-10 absolute error stays under the default bound tolerance·floor = 1e-9.
    assert finite_difference_check(halved, [x]).passed
    report = finite_difference_check(halved, [x], floor=1e-12)
    assert report.failing == ["x"]
    assert np.isclose(report.max_relative_error, 0.5, atol=1e-6)

    def scaled(tape):
        return F.sum(F.scale(tape.watch(x), 1e-9))

    assert finite_difference_check(scaled, [x], floor=1e-12).passed
