"""Forward evaluation of the eight obfuscating transformations.

Image-valued transforms return ``(3, H, W)`` arrays.  The three noising
transforms return additive noise maps of the same shape.  Per-block
parameters come in ``(M, N, 3)`` layout as stored in ``ParameterSet``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .image import BlockGrid

SINUSOID_AMPLITUDE = 0.2
CHECKER_MAGNITUDE = 0.3
CHECKER_CELLS = 4


def per_pixel(grid: BlockGrid, theta: np.ndarray) -> np.ndarray:
    """``(M, N, 3)`` block parameters to a ``(3, H, W)`` field."""
    return grid.expand(np.moveaxis(theta, -1, 0))


def blend(img: np.ndarray, degraded: np.ndarray, grid: BlockGrid,
          theta: np.ndarray | None) -> np.ndarray:
    if theta is None:
        return degraded
    t = per_pixel(grid, theta)
    return (1.0 - t) * img + t * degraded


def f1_mosaic(img: np.ndarray, grid: BlockGrid, theta: np.ndarray | None = None) -> np.ndarray:
    return blend(img, grid.expand(grid.block_average(img)), grid, theta)


def f2_hmean(img: np.ndarray, grid: BlockGrid | None = None,
             theta: np.ndarray | None = None) -> np.ndarray:
    deg = np.broadcast_to(img.mean(axis=2, keepdims=True), img.shape).copy()
    return blend(img, deg, grid, theta)


def f3_vmean(img: np.ndarray, grid: BlockGrid | None = None,
             theta: np.ndarray | None = None) -> np.ndarray:
    deg = np.broadcast_to(img.mean(axis=1, keepdims=True), img.shape).copy()
    return blend(img, deg, grid, theta)


# -- interpolation helpers --------------------------------------------------

def hat_matrix(nodes: np.ndarray, n: int) -> np.ndarray:
    """Piecewise-linear interpolation weights of pixels ``0..n-1`` onto
    strictly increasing ``nodes``; queries outside the node range clamp to the
    nearest node."""
    nodes = np.asarray(nodes, dtype=np.float64)
    q = np.arange(n, dtype=np.float64)
    mat = np.zeros((n, len(nodes)))
    if len(nodes) == 1:
        mat[:, 0] = 1.0
        return mat
    k = np.clip(np.searchsorted(nodes, q, side="right") - 1, 0, len(nodes) - 2)
    t = np.clip((q - nodes[k]) / (nodes[k + 1] - nodes[k]), 0.0, 1.0)
    rows = np.arange(n)
    mat[rows, k] = 1.0 - t
    mat[rows, k + 1] += t
    return mat


@lru_cache(maxsize=64)
def warp_basis(grid: BlockGrid) -> tuple[np.ndarray, np.ndarray]:
    """Interpolation matrices ``(H, M+1)`` and ``(W, N+1)`` of the warp lattice.

    Lattice nodes sit on the top-left pixel of each inner corner, with a
    zero-displacement border at pixel 0 and one past the last pixel.
    """
    ynodes = np.concatenate([[0], grid.y_edges[1:-1], [grid.height]])
    xnodes = np.concatenate([[0], grid.x_edges[1:-1], [grid.width]])
    return hat_matrix(ynodes, grid.height), hat_matrix(xnodes, grid.width)


def warp_steps(grid: BlockGrid) -> tuple[np.ndarray, np.ndarray]:
    """Block extents that scale each inner point's displacement, ``(M-1, N-1)``.

    An inner point uses the block it is the top-left corner of.
    """
    dy = np.asarray(grid.row_heights[1:], dtype=np.float64)
    dx = np.asarray(grid.col_widths[1:], dtype=np.float64)
    return (np.broadcast_to(dx[None, :], (grid.rows - 1, grid.cols - 1)),
            np.broadcast_to(dy[:, None], (grid.rows - 1, grid.cols - 1)))


def displacement(grid: BlockGrid, theta4: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(H, W)`` displacement fields (x, y) in pixels."""
    wy, wx = warp_basis(grid)
    stepx, stepy = warp_steps(grid)
    lat_x = np.zeros((grid.rows + 1, grid.cols + 1))
    lat_y = np.zeros_like(lat_x)
    lat_x[1:-1, 1:-1] = theta4[..., 0] * stepx
    lat_y[1:-1, 1:-1] = theta4[..., 1] * stepy
    return wy @ lat_x @ wx.T, wy @ lat_y @ wx.T


class BilinearSample:
    """Border-clamped bilinear sampling of a ``(3, H, W)`` image at ``(sy, sx)``.

    Keeps the cell indices and fractions needed by the adjoint.
    """

    def __init__(self, img: np.ndarray, sx: np.ndarray, sy: np.ndarray):
        _, h, w = img.shape
        self.shape = img.shape
        self.inside_x = (sx >= 0) & (sx <= w - 1)
        self.inside_y = (sy >= 0) & (sy <= h - 1)
        cx = np.clip(sx, 0.0, w - 1.0)
        cy = np.clip(sy, 0.0, h - 1.0)
        self.x0 = np.minimum(np.floor(cx).astype(np.intp), w - 2)
        self.y0 = np.minimum(np.floor(cy).astype(np.intp), h - 2)
        self.fx = cx - self.x0
        self.fy = cy - self.y0
        x0, y0 = self.x0, self.y0
        self.c00 = img[:, y0, x0]
        self.c01 = img[:, y0, x0 + 1]
        self.c10 = img[:, y0 + 1, x0]
        self.c11 = img[:, y0 + 1, x0 + 1]
        fx, fy = self.fx, self.fy
        self.top = (1.0 - fx) * self.c00 + fx * self.c01
        self.bottom = (1.0 - fx) * self.c10 + fx * self.c11
        self.value = (1.0 - fy) * self.top + fy * self.bottom

    def grad_position(self) -> tuple[np.ndarray, np.ndarray]:
        """d value / d sx and d value / d sy, zero where the coordinate clamps."""
        fx, fy = self.fx, self.fy
        dx = (1.0 - fy) * (self.c01 - self.c00) + fy * (self.c11 - self.c10)
        dy = self.bottom - self.top
        return dx * self.inside_x, dy * self.inside_y

    def scatter(self, g: np.ndarray) -> np.ndarray:
        """Adjoint with respect to the sampled image."""
        c, h, w = self.shape
        fx, fy = self.fx, self.fy
        out = np.empty(self.shape)
        idx00 = (self.y0 * w + self.x0).ravel()
        weights = (((1 - fy) * (1 - fx)), ((1 - fy) * fx), (fy * (1 - fx)), (fy * fx))
        offsets = (0, 1, w, w + 1)
        for ch in range(c):
            acc = np.zeros(h * w)
            gc = g[ch]
            for wt, off in zip(weights, offsets):
                acc += np.bincount(idx00 + off, weights=(gc * wt).ravel(), minlength=h * w)
            out[ch] = acc.reshape(h, w)
        return out


def sample_coordinates(grid: BlockGrid, theta4: np.ndarray):
    disp_x, disp_y = displacement(grid, theta4)
    ys, xs = np.mgrid[0:grid.height, 0:grid.width].astype(np.float64)
    return xs - disp_x, ys - disp_y


def f4_warp(img: np.ndarray, grid: BlockGrid, theta4: np.ndarray) -> np.ndarray:
    """Backward warp: each output pixel samples the input at its position
    minus the interpolated lattice displacement."""
    sx, sy = sample_coordinates(grid, theta4)
    return BilinearSample(img, sx, sy).value


# -- noising ----------------------------------------------------------------

@lru_cache(maxsize=64)
def sinusoid_period(grid: BlockGrid) -> np.ndarray:
    """``(H, W)`` field of the per-block period, a quarter of the shorter side."""
    side = np.minimum.outer(np.asarray(grid.row_heights), np.asarray(grid.col_widths))
    return grid.expand(side / 4.0)


def sinusoid_phase(grid: BlockGrid, theta5: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return the sine argument and the pixel-wise angle field."""
    angle = per_pixel(grid, theta5)
    lx = grid.local_x[None, None, :].astype(np.float64)
    ly = grid.local_y[None, :, None].astype(np.float64)
    arg = 2.0 * np.pi * (lx * np.cos(angle) + ly * np.sin(angle)) / sinusoid_period(grid)
    return arg, angle


def f5_sinusoid(grid: BlockGrid, theta5: np.ndarray) -> np.ndarray:
    arg, _ = sinusoid_phase(grid, theta5)
    return SINUSOID_AMPLITUDE * np.sin(arg)


def _cell_index(local: np.ndarray, sizes: tuple[int, ...]) -> np.ndarray:
    side = np.repeat(np.asarray(sizes), sizes)
    step = side // CHECKER_CELLS
    # blocks thinner than the cell count get one-pixel cells
    return np.where(step > 0, np.minimum(local // np.maximum(step, 1), CHECKER_CELLS - 1),
                    np.minimum(local, CHECKER_CELLS - 1))


@lru_cache(maxsize=64)
def checker_sign(grid: BlockGrid) -> np.ndarray:
    cy = _cell_index(grid.local_y, grid.row_heights)
    cx = _cell_index(grid.local_x, grid.col_widths)
    return np.where((cy[:, None] + cx[None, :]) % 2 == 0, 1.0, -1.0)


def f6_checkerboard(grid: BlockGrid, theta6: np.ndarray) -> np.ndarray:
    return CHECKER_MAGNITUDE * per_pixel(grid, theta6) * checker_sign(grid)


@lru_cache(maxsize=64)
def speckle_basis(grid: BlockGrid) -> tuple[np.ndarray, np.ndarray]:
    """Interpolation matrices ``(H, M)`` and ``(W, N)`` from block centers."""
    cy = grid.y_edges[:-1] + np.asarray(grid.row_heights) // 2
    cx = grid.x_edges[:-1] + np.asarray(grid.col_widths) // 2
    return hat_matrix(cy, grid.height), hat_matrix(cx, grid.width)


def f7_speckle(grid: BlockGrid, theta7: np.ndarray) -> np.ndarray:
    wy, wx = speckle_basis(grid)
    return np.einsum("ym,mnc,xn->cyx", wy, theta7, wx, optimize=True)


def f8_colorscale(img: np.ndarray, grid: BlockGrid, theta8: np.ndarray) -> np.ndarray:
    return img * per_pixel(grid, theta8)

