import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from creditgcn.errors import NumericError, ShapeError, ValidationError
from creditgcn.numeric import activation, conv2d_reference, grad_check, make_rng, matmul, softmax


def test_matmul_identity():
    m = np.array([[1.0, -2.0], [0.5, 3.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)


def test_matmul_zeros():
    out = matmul(np.zeros((2, 3)), np.arange(3.0).reshape(3, 1))
    np.testing.assert_array_equal(out, np.zeros((2, 1)))


def test_matmul_hand_value():
    np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[1], [1]]), [[3], [7]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 2)))


def test_matmul_associative(rng):
    for _ in range(20):
        a, b, c = (rng.standard_normal((4, 4)) for _ in range(3))
        np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), rtol=0, atol=1e-9)


def test_conv2d_all_ones():
    np.testing.assert_array_equal(conv2d_reference(np.ones((3, 3)), np.ones((3, 3))), [[9.0]])


def test_conv2d_delta_kernel_is_identity_on_interior(rng):
    img = rng.standard_normal((6, 7))
    k = np.zeros((3, 3))
    k[1, 1] = 1.0
    np.testing.assert_array_equal(conv2d_reference(img, k), img[1:-1, 1:-1])


def test_conv2d_one_by_one_kernel_doubles():
    img = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(conv2d_reference(img, [[2.0]]), 2 * img)


def test_conv2d_flips_kernel():
    # X[m-i, n-j] pairs the kernel's top-left with the bottom-right pixel
    img = np.zeros((3, 3))
    img[2, 2] = 1.0
    k = np.zeros((3, 3))
    k[0, 0] = 5.0
    assert conv2d_reference(img, k)[0, 0] == 5.0


def test_conv2d_errors():
    with pytest.raises(ValidationError):
        conv2d_reference(np.ones((4, 4)), np.ones((2, 2)))
    with pytest.raises(ShapeError):
        conv2d_reference(np.ones((2, 2)), np.ones((3, 3)))


def test_activations():
    np.testing.assert_array_equal(activation([-1.0, 2.0], "relu"), [0.0, 2.0])
    x = np.array([[-3.0, 0.2]])
    np.testing.assert_array_equal(activation(x, "identity"), x)
    assert activation([0.0], "sigmoid")[0] == 0.5
    np.testing.assert_allclose(activation([0.3], "tanh"), [math.tanh(0.3)])
    assert np.all(np.isfinite(activation([-1e4, 1e4], "sigmoid")))


@pytest.mark.parametrize("scores, expected", [
    ([0.0, 0.0], [0.5, 0.5]),
    ([math.log(3.0), 0.0], [0.75, 0.25]),
    ([7.0, 7.0, 7.0], [1 / 3, 1 / 3, 1 / 3]),
])
def test_softmax_examples(scores, expected):
    np.testing.assert_allclose(softmax(scores), expected, rtol=0, atol=1e-15)


def test_softmax_empty():
    with pytest.raises(ValidationError):
        softmax([])


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-500, 500)), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(s, c):
    p = softmax(s)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(softmax(s + c), p, rtol=0, atol=1e-12)


def test_grad_check_square():
    x = np.array([[3.0]])
    err = grad_check(lambda v: float(v[0, 0] ** 2), x, np.array([[6.0]]), eps=1e-4)
    assert err < 1e-6


def test_grad_check_constant():
    x = np.ones((2, 2))
    assert grad_check(lambda v: 4.0, x, np.zeros((2, 2)), eps=1e-4) == 0.0


def test_grad_check_sum(rng):
    x = rng.standard_normal((3, 2))
    assert grad_check(lambda v: float(v.sum()), x, np.ones((3, 2)), eps=1e-5) < 1e-8


def test_grad_check_non_finite():
    with pytest.raises(NumericError):
        grad_check(lambda v: float("nan"), np.ones((1, 1)), np.zeros((1, 1)))


def test_rng_identical_streams():
    a = make_rng(42).random(5)
    b = make_rng(42).random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, make_rng(43).random(5))


def test_rng_stream_identical_across_processes():
    code = "from creditgcn.numeric import make_rng; import sys; sys.stdout.write(make_rng(99).random(16).tobytes().hex())"
    runs = [subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
            for _ in range(2)]
    assert runs[0] == runs[1] == make_rng(99).random(16).tobytes().hex()
