"""Deterministic synthetic inputs for tests, demos and sweeps."""
from __future__ import annotations

import numpy as np

from .rng import SplitMix64


def random_image(height: int, width: int, seed: int) -> np.ndarray:
    """I.i.d. uniform pixels in [0, 1)."""
    return SplitMix64(seed).uniform01(3 * height * width).reshape(3, height, width)


def checkerboard(height: int, width: int, cell: int = 1) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    board = (((yy // cell) + (xx // cell)) % 2).astype(np.float64)
    return np.broadcast_to(board, (3, height, width)).copy()


def synthetic_face(height: int = 112, width: int = 112, seed: int = 0) -> np.ndarray:
    """A crude face: tinted background, skin ellipse, hair cap, eyes, mouth.

    Layout and colors vary with ``seed`` so different seeds act as different
    identities.
    """
    u = iter(SplitMix64(seed).uniform01(32))
    nxt = lambda lo, hi: lo + (hi - lo) * next(u)  # noqa: E731
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= height
    xx /= width

    bg = np.array([nxt(0.1, 0.9), nxt(0.1, 0.9), nxt(0.1, 0.9)])
    img = bg[:, None, None] * (0.8 + 0.4 * xx)[None]

    cx, cy = nxt(0.42, 0.58), nxt(0.45, 0.58)
    rx, ry = nxt(0.25, 0.36), nxt(0.32, 0.42)
    skin = np.array([nxt(0.55, 0.95), nxt(0.35, 0.75), nxt(0.25, 0.6)])
    face = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    img = np.where(face[None], skin[:, None, None] * (1.05 - 0.3 * (yy - cy))[None], img)

    hair = np.array([nxt(0.0, 0.5), nxt(0.0, 0.4), nxt(0.0, 0.3)])
    cap = face & (yy < cy - ry * nxt(0.35, 0.65))
    img = np.where(cap[None], hair[:, None, None], img)

    eye_dx, eye_y, eye_r = nxt(0.09, 0.15), cy - ry * nxt(0.05, 0.25), nxt(0.03, 0.05)
    iris = np.array([nxt(0.0, 0.4), nxt(0.0, 0.4), nxt(0.0, 0.5)])
    for side in (-1.0, 1.0):
        eye = (xx - (cx + side * eye_dx)) ** 2 + (yy - eye_y) ** 2 <= eye_r ** 2
        img = np.where(eye[None], iris[:, None, None], img)

    mouth_y, mouth_w = cy + ry * nxt(0.4, 0.6), nxt(0.08, 0.16)
    lips = np.array([nxt(0.5, 0.9), nxt(0.1, 0.4), nxt(0.1, 0.4)])
    mouth = (np.abs(xx - cx) <= mouth_w) & (np.abs(yy - mouth_y) <= nxt(0.012, 0.03))
    img = np.where(mouth[None], lips[:, None, None], img)
    return np.clip(img, 0.0, 1.0)
