import os
import subprocess
import sys

import numpy as np
import pytest

from dfcdit import _kernels as K
from dfcdit.imageio import encode_hdr

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture
def numpy_backend():
    prev = K.USE_NUMBA
    K.set_backend(False)
    yield
    K.set_backend(prev)


@needs_numba
@pytest.mark.parametrize("shape,k,s", [((2, 3, 8, 8), 3, 1), ((1, 4, 10, 9), 4, 2), ((1, 2, 7, 7), 3, 2)])
def test_im2col_col2im_paths_agree(rng, shape, k, s):
    xp = rng.standard_normal(shape).astype(np.float32)
    a = K.im2col_numpy(xp, k, k, s, s)
    b = K.im2col_numba(xp, k, k, s, s)
    np.testing.assert_array_equal(a, b)
    cols = rng.standard_normal(a.shape).astype(np.float32)
    np.testing.assert_allclose(K.col2im_numpy(cols, shape, k, k, s, s), K.col2im_numba(cols, shape, k, k, s, s), atol=1e-5)


def test_col2im_is_adjoint_of_im2col(rng):
    shape = (1, 3, 9, 8)
    xp = rng.standard_normal(shape).astype(np.float64)
    cols = rng.standard_normal(K.im2col_numpy(xp, 3, 3, 2, 1).shape)
    lhs = np.sum(K.im2col_numpy(xp, 3, 3, 2, 1) * cols)
    rhs = np.sum(xp * K.col2im_numpy(cols, shape, 3, 3, 2, 1))
    assert lhs == pytest.approx(rhs, rel=1e-10)


@needs_numba
def test_maxpool_paths_agree(rng):
    x = rng.standard_normal((2, 3, 7, 6)).astype(np.float32)
    x[0, 0, :2, :2] = 1.0  # tie: first maximum wins on both paths
    oa, ia = K.maxpool2x2_numpy(x)
    ob, ib = K.maxpool2x2_numba(x)
    np.testing.assert_array_equal(oa, ob)
    np.testing.assert_array_equal(ia, ib)
    assert ia[0, 0, 0, 0] == 0
    g = rng.standard_normal(oa.shape).astype(np.float32)
    np.testing.assert_array_equal(K.maxpool2x2_backward_numpy(g, ia, x.shape), K.maxpool2x2_backward_numba(g, ib, x.shape))


def _rgbe_payload(rng, h, w, rle):
    hdr = (rng.uniform(0, 4, (h, w, 3)) ** 3).astype(np.float32)
    hdr[:, : w // 2] = hdr[:, :1]  # long runs for the RLE path
    data = encode_hdr(hdr, rle=rle)
    pos = data.index(b"\n\n") + 1
    pos = data.index(b"\n", pos + 1) + 1  # skip the resolution line
    return np.frombuffer(data, dtype=np.uint8), pos


@needs_numba
@pytest.mark.parametrize("rle", [True, False])
def test_rgbe_decoder_paths_agree(rng, rle):
    data, pos = _rgbe_payload(rng, 9, 40, rle)
    a, sa, wa = K.decode_rgbe_scanlines_python(data, pos, 40, 9)
    b, sb, wb = K.decode_rgbe_scanlines_numba(data, pos, 40, 9)
    assert sa == sb == K.RLE_OK and wa == wb == data.size
    np.testing.assert_array_equal(a, b)


def test_rgbe_decoder_reports_truncation(rng):
    data, pos = _rgbe_payload(rng, 4, 16, True)
    _, status, row = K.decode_rgbe_scanlines(data[:-5], pos, 16, 4)
    assert status == K.RLE_TRUNCATED and row == 3


def test_rgbe_decoder_reports_width_mismatch(rng):
    data, pos = _rgbe_payload(rng, 2, 16, True)
    _, status, row = K.decode_rgbe_scanlines(data, pos, 17, 2)
    assert status == K.RLE_WIDTH_MISMATCH and row == 0


def test_numpy_backend_gives_same_conv(rng, numpy_backend):
    from dfcdit.autodiff import conv2d, replication_pad

    x = rng.standard_normal((1, 3, 6, 6)).astype(np.float32)
    w = rng.standard_normal((2, 3, 3, 3)).astype(np.float32)
    a = conv2d(x, w, None, (1, 1), replication_pad(1))
    K.set_backend(True)
    b = conv2d(x, w, None, (1, 1), replication_pad(1))
    np.testing.assert_allclose(a, b, atol=1e-5)


@pytest.mark.parametrize("value,expected", [("0", "False"), ("off", "False"), ("1", str(K.HAVE_NUMBA))])
def test_env_flag_selects_backend(value, expected):
    env = dict(os.environ, DFC_DIT_NUMBA=value)
    out = subprocess.run(
        [sys.executable, "-c", "from dfcdit import _kernels as K; print(K.USE_NUMBA, K.im2col.__name__)"],
        env=env, capture_output=True, text=True, check=True,
    ).stdout.split()
    assert out[0] == expected
    assert out[1] == ("im2col_numba" if expected == "True" else "im2col_numpy")
