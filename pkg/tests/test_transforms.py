import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faceobf import transforms as T
from faceobf.image import make_grid


def const_img(v, h=16, w=16):
    return np.full((3, h, w), v, dtype=float)


@pytest.mark.parametrize("fn", [T.f1_mosaic, T.f2_hmean, T.f3_vmean])
def test_averaging_constant_fixed(fn):
    g = make_grid(16, 16, 4, 4)
    img = const_img(0.42)
    assert np.allclose(fn(img, g), img, atol=1e-15)


def test_f1_two_by_two():
    img = np.zeros((3, 8, 8))
    img[:, 0:4, 0:4] = np.repeat(np.repeat([[0, 0.5], [0.5, 1]], 2, 0), 2, 1)
    g = make_grid(8, 8, 2, 2)
    out = T.f1_mosaic(img, g)
    assert np.all(out[:, 0:4, 0:4] == 0.5)


def test_f1_idempotent(rng):
    g = make_grid(20, 20, 3, 3)
    img = rng.random((3, 20, 20))
    once = T.f1_mosaic(img, g)
    assert np.allclose(T.f1_mosaic(once, g), once, atol=1e-15)


def test_f2_f3_rows_and_columns(rng):
    img = np.zeros((3, 8, 8))
    img[:, 0:8:2, :] = 0.0
    img[:, 1:8:2, :] = 1.0
    assert np.array_equal(T.f2_hmean(img), img)
    cross = np.tile(np.array([[0.0, 1.0], [1.0, 0.0]]), (3, 4, 4))
    assert np.allclose(T.f2_hmean(cross), 0.5)
    assert np.allclose(T.f3_vmean(cross), 0.5)
    rnd = rng.random((3, 8, 8))
    assert np.allclose(T.f2_hmean(rnd)[1, 3], rnd[1, 3].mean())
    assert np.allclose(T.f3_vmean(rnd)[2, :, 5], rnd[2, :, 5].mean())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_averaging_in_hull(seed):
    r = np.random.default_rng(seed)
    img = r.random((3, 12, 15))
    g = make_grid(12, 15, 3, 4)
    lo = img.min(axis=(1, 2))[:, None, None]
    hi = img.max(axis=(1, 2))[:, None, None]
    for fn in (T.f1_mosaic, T.f2_hmean, T.f3_vmean):
        out = fn(img, g)
        assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_blend_partial():
    g = make_grid(8, 8, 1, 1)
    img = np.zeros((3, 8, 8))
    img[:, :, 4:] = 1.0
    out = T.f1_mosaic(img, g, np.full((1, 1, 3), 0.5))
    assert np.allclose(out, 0.5 * img + 0.25)


def test_warp_zero_identity(rng):
    g = make_grid(24, 24, 4, 4)
    img = rng.random((3, 24, 24))
    assert np.array_equal(T.f4_warp(img, g, np.zeros((3, 3, 2))), img)


def test_warp_constant(rng):
    g = make_grid(24, 24, 4, 4)
    t4 = rng.uniform(-0.3, 0.3, (3, 3, 2))
    assert np.allclose(T.f4_warp(const_img(0.3, 24, 24), g, t4), 0.3, atol=1e-15)


def test_warp_ramp_control_point():
    h = w = 16
    g = make_grid(h, w, 2, 2)
    ramp = np.broadcast_to(np.arange(w, dtype=float) / w, (3, h, w)).copy()
    out = T.f4_warp(ramp, g, np.array([[[0.3, 0.0]]]))
    dx = g.col_widths[1]
    assert out[0, 8, 8] == pytest.approx(ramp[0, 8, 8] - 0.3 * dx / w, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_warp_in_hull_and_border_fixed(seed):
    r = np.random.default_rng(seed)
    g = make_grid(20, 18, 3, 4)
    img = r.random((3, 20, 18))
    out = T.f4_warp(img, g, r.uniform(-0.3, 0.3, (2, 3, 2)))
    assert out.min() >= img.min() - 1e-12 and out.max() <= img.max() + 1e-12
    assert np.array_equal(out[:, 0, :], img[:, 0, :])
    assert np.array_equal(out[:, :, 0], img[:, :, 0])


def test_sinusoid_examples():
    g = make_grid(16, 16, 1, 1)
    n = T.f5_sinusoid(g, np.zeros((1, 1, 3)))
    assert n[0, 5, 2] == pytest.approx(0.0, abs=1e-15)
    assert n[0, 5, 1] == pytest.approx(0.2, abs=1e-15)
    g = make_grid(32, 32, 2, 2)
    n = T.f5_sinusoid(g, np.random.default_rng(0).uniform(0, np.pi, (2, 2, 3)))
    for y0 in (0, 16):
        for x0 in (0, 16):
            assert np.all(n[:, y0, x0] == 0)
    assert np.abs(n).max() <= 0.2


def test_checkerboard():
    g = make_grid(32, 32, 2, 2)
    n = T.f6_checkerboard(g, np.ones((2, 2, 3)))
    assert set(np.unique(n)) == {-0.3, 0.3}
    assert n[:, :16, :16].sum() == pytest.approx(0.0, abs=1e-12)
    assert np.all(n[0, 0, 0:4] == n[0, 0, 0]) and n[0, 0, 4] == -n[0, 0, 0]
    assert n[0, 4, 0] == -n[0, 0, 0]


def test_checkerboard_thin_blocks():
    g = make_grid(9, 9, 3, 3)
    n = T.f6_checkerboard(g, np.ones((3, 3, 3)))
    assert set(np.unique(np.abs(n))) == {0.3}


def test_speckle():
    g = make_grid(16, 16, 1, 2)
    const = T.f7_speckle(g, np.full((1, 2, 3), 0.25))
    assert np.allclose(const, 0.25, atol=1e-15)
    theta = np.zeros((1, 2, 3))
    theta[0, :, 0] = [0.1, 0.3]
    n = T.f7_speckle(g, theta)
    # centers at x = 4 and x = 12
    assert n[0, 8, 4] == pytest.approx(0.1) and n[0, 8, 12] == pytest.approx(0.3)
    assert n[0, 3, 8] == pytest.approx(0.2)
    assert n[0, 0, 0] == pytest.approx(0.1) and n[0, 0, 15] == pytest.approx(0.3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_noise_bounds(seed):
    r = np.random.default_rng(seed)
    g = make_grid(22, 19, 3, 4)
    assert np.abs(T.f5_sinusoid(g, r.uniform(0, np.pi, (3, 4, 3)))).max() <= 0.2
    assert np.abs(T.f7_speckle(g, r.uniform(-0.5, 0.5, (3, 4, 3)))).max() <= 0.5 + 1e-15


def test_colorscale(rng):
    g = make_grid(16, 16, 2, 2)
    img = rng.random((3, 16, 16))
    assert np.array_equal(T.f8_colorscale(img, g, np.ones((2, 2, 3))), img)
    out = T.f8_colorscale(const_img(0.5), g, np.full((2, 2, 3), 1.1))
    assert np.allclose(out, 0.55)
    theta = rng.uniform(10 / 11, 1.1, (2, 2, 3))
    back = T.f8_colorscale(T.f8_colorscale(img, g, theta), g, 1 / theta)
    assert np.allclose(back, img, rtol=1e-15, atol=1e-15)
