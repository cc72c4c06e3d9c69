"""Agreement between the compiled and pure-numpy kernel backends.

Both implementation modules are imported directly so the test is independent
of the ATTNLINK_BACKEND selection made for the rest of the suite.
"""

import numpy as np
import pytest

from attnlink.kernels import _numpy

numba_kernels = pytest.importorskip("attnlink.kernels._numba")


def test_backend_names():
    assert _numpy.BACKEND_NAME == "numpy"
    assert numba_kernels.BACKEND_NAME == "numba"


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_forward_agrees(rng, stride, padding):
    x = rng.normal(size=(2, 3, 9, 9))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    a = _numpy.conv2d_forward(x, w, b, stride, padding)
    c = numba_kernels.conv2d_forward(x, w, b, stride, padding)
    np.testing.assert_allclose(a, c, atol=1e-12)


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_backward_agrees(rng, stride, padding):
    x = rng.normal(size=(2, 3, 9, 9))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    out = _numpy.conv2d_forward(x, w, b, stride, padding)
    gout = rng.normal(size=out.shape)
    dx1, dw1, db1 = _numpy.conv2d_backward(x, w, gout, stride, padding)
    dx2, dw2, db2 = numba_kernels.conv2d_backward(x, w, gout, stride, padding)
    np.testing.assert_allclose(dx1, dx2, atol=1e-10)
    np.testing.assert_allclose(dw1, dw2, atol=1e-10)
    np.testing.assert_allclose(db1, db2, atol=1e-10)


def test_maxpool_agrees(rng):
    x = rng.normal(size=(2, 4, 8, 8))
    out1, idx1 = _numpy.maxpool2_forward(x)
    out2, idx2 = numba_kernels.maxpool2_forward(x)
    np.testing.assert_allclose(out1, out2, atol=1e-15)
    gout = rng.normal(size=out1.shape)
    dx1 = _numpy.maxpool2_backward(gout, idx1, x.shape)
    dx2 = numba_kernels.maxpool2_backward(gout, idx2, x.shape)
    np.testing.assert_allclose(dx1, dx2, atol=1e-15)


@pytest.mark.parametrize("shape,target", [((6, 6), (8, 8)), ((32, 32), (8, 8)), ((5, 9), (9, 5))])
def test_bicubic_agrees(rng, shape, target):
    x = np.ascontiguousarray(rng.normal(size=(3,) + shape))
    a = _numpy.bicubic_resize_stack(x, *target)
    b = numba_kernels.bicubic_resize_stack(x, *target)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_float32_supported(rng):
    x = rng.normal(size=(1, 2, 6, 6)).astype(np.float32)
    w = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
    b = rng.normal(size=3).astype(np.float32)
    a = _numpy.conv2d_forward(x, w, b, 1, 1)
    c = numba_kernels.conv2d_forward(x, w, b, 1, 1)
    np.testing.assert_allclose(a, c, atol=1e-5)
