import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faceobf.errors import DimensionError, FormatError
from faceobf.image import (block_mean, decode_ppm, encode_ppm, load_ppm, make_grid, psnr,
                           save_ppm)


def test_grid_default_112():
    g = make_grid(112, 112, 7, 7)
    assert g.row_heights == (16,) * 7 and g.col_widths == (16,) * 7
    assert len(g.blocks(np.zeros((3, 112, 112)))) == 49


def test_grid_single_block():
    g = make_grid(8, 8, 1, 1)
    assert g.row_heights == (8,) and g.col_widths == (8,)


def test_grid_remainder_goes_last():
    g = make_grid(10, 10, 3, 3)
    assert g.row_heights == (3, 3, 4)
    assert g.col_widths == (3, 3, 4)
    assert list(g.y_edges) == [0, 3, 6, 10]


def test_grid_rejects_too_many_blocks():
    with pytest.raises(DimensionError):
        make_grid(8, 8, 9, 2)
    with pytest.raises(DimensionError):
        make_grid(8, 8, 2, 9)


@settings(max_examples=60, deadline=None)
@given(h=st.integers(8, 40), w=st.integers(8, 40), data=st.data())
def test_grid_tiles_and_round_trips(h, w, data):
    m = data.draw(st.integers(1, h))
    n = data.draw(st.integers(1, w))
    g = make_grid(h, w, m, n)
    assert sum(g.row_heights) == h and sum(g.col_widths) == w
    assert min(g.row_heights) >= 1 and min(g.col_widths) >= 1
    img = np.arange(3 * h * w, dtype=float).reshape(3, h, w)
    assert np.array_equal(g.assemble(g.blocks(img)), img)


def test_block_mean_values():
    img = np.zeros((3, 8, 8))
    img[0, :2, :2] = [[0, 0.5], [0.5, 1]]
    g = make_grid(8, 8, 4, 4)
    assert block_mean(img, g, (0, 0), 0) == 0.5
    img[1] = 0.37
    assert block_mean(img, g, (2, 3), 1) == pytest.approx(0.37, abs=1e-15)


def test_block_mean_ramp():
    h = w = 8
    ramp = np.linspace(0, 1, h * w).reshape(h, w)
    img = np.broadcast_to(ramp, (3, h, w))
    g = make_grid(h, w, 1, 1)
    assert abs(block_mean(img, g, (0, 0), 2) - 0.5) <= 1 / (2 * h * w)


def test_block_mean_permutation_invariant(rng):
    g = make_grid(16, 16, 2, 2)
    img = rng.random((3, 16, 16))
    before = block_mean(img, g, (1, 0), 1)
    blk = img[1, 8:16, 0:8].ravel()
    img[1, 8:16, 0:8] = rng.permutation(blk).reshape(8, 8)
    assert block_mean(img, g, (1, 0), 1) == pytest.approx(before, abs=1e-15)


def test_psnr():
    a = np.full((3, 8, 8), 0.5)
    assert psnr(a, a) == math.inf
    assert psnr(np.zeros((3, 8, 8)), np.ones((3, 8, 8))) == pytest.approx(0.0)
    assert psnr(a, np.full((3, 8, 8), 0.6)) == pytest.approx(20.0)
    with pytest.raises(DimensionError):
        psnr(a, np.zeros((3, 8, 9)))


def test_ppm_endpoints_and_clamp(tmp_path):
    img = np.zeros((3, 8, 8))
    img[0, 0, 0] = 1.0
    img[1, 0, 0] = 128 / 255
    img[2, 0, 0] = 1.7
    img[0, 1, 1] = -0.3
    save_ppm(img, tmp_path / "a.ppm")
    back = load_ppm(tmp_path / "a.ppm")
    assert back[0, 0, 0] == 1.0
    assert back[1, 0, 0] == 128 / 255
    assert back[2, 0, 0] == 1.0
    assert back[0, 1, 1] == 0.0


@settings(max_examples=40, deadline=None)
@given(h=st.integers(8, 20), w=st.integers(8, 20), data=st.data())
def test_ppm_round_trip_bytes(h, w, data):
    payload = data.draw(st.binary(min_size=3 * h * w, max_size=3 * h * w))
    blob = b"P6\n%d %d\n255\n" % (w, h) + payload
    assert encode_ppm(decode_ppm(blob)) == blob


def test_ppm_header_comments_accepted():
    blob = b"P6\n# made by hand\n8 8\n255\n" + bytes(range(192))
    assert decode_ppm(blob).shape == (3, 8, 8)


@pytest.mark.parametrize("blob", [
    b"P3\n8 8\n255\n" + bytes(192),
    b"P6\n8 8\n65535\n" + bytes(192),
    b"P6\n8 8\n255\n" + bytes(191),
    b"P6\n8 x\n255\n" + bytes(192),
    b"P6\n8 8\n255",
])
def test_ppm_malformed(blob):
    with pytest.raises(FormatError):
        decode_ppm(blob)


def test_ppm_too_small():
    with pytest.raises(DimensionError):
        decode_ppm(b"P6\n7 8\n255\n" + bytes(3 * 56))
