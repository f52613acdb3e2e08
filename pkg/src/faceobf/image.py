"""Pixel containers, block partitions, pixel metrics and PPM I/O.

Images are plain ``numpy`` arrays of shape ``(3, H, W)`` in float64, channel
order R, G, B.  Values are nominally in [0, 1] but intermediates are allowed
to leave that range; clamping happens only when an image is saved.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError

MIN_SIDE = 8
CHANNELS = 3


def split_extent(length: int, parts: int) -> tuple[int, ...]:
    """Split ``length`` into ``parts`` runs of ``length // parts``; the last
    run absorbs the remainder."""
    base = length // parts
    sizes = [base] * parts
    sizes[-1] += length - base * parts
    return tuple(sizes)


@dataclass(frozen=True)
class BlockGrid:
    """An M x N partition of an H x W image."""

    height: int
    width: int
    rows: int
    cols: int
    row_heights: tuple[int, ...]
    col_widths: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @cached_property
    def y_edges(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.row_heights)]).astype(np.intp)

    @cached_property
    def x_edges(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.col_widths)]).astype(np.intp)

    @cached_property
    def areas(self) -> np.ndarray:
        return np.outer(self.row_heights, self.col_widths).astype(np.float64)

    @cached_property
    def local_y(self) -> np.ndarray:
        """Row offset of every pixel row from the top of its block."""
        return np.arange(self.height) - np.repeat(self.y_edges[:-1], self.row_heights)

    @cached_property
    def local_x(self) -> np.ndarray:
        return np.arange(self.width) - np.repeat(self.x_edges[:-1], self.col_widths)

    def block_slices(self, i: int, j: int) -> tuple[slice, slice]:
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(f"block ({i}, {j}) outside {self.rows}x{self.cols} grid")
        y, x = self.y_edges, self.x_edges
        return slice(y[i], y[i + 1]), slice(x[j], x[j + 1])

    def block_sum(self, a: np.ndarray) -> np.ndarray:
        """Sum ``(..., H, W)`` over every block, giving ``(..., M, N)``."""
        s = np.add.reduceat(a, self.y_edges[:-1], axis=-2)
        return np.add.reduceat(s, self.x_edges[:-1], axis=-1)

    def block_average(self, a: np.ndarray) -> np.ndarray:
        return self.block_sum(a) / self.areas

    def expand(self, b: np.ndarray) -> np.ndarray:
        """Broadcast per-block values ``(..., M, N)`` back to ``(..., H, W)``."""
        b = np.repeat(b, self.row_heights, axis=-2)
        return np.repeat(b, self.col_widths, axis=-1)

    def blocks(self, img: np.ndarray) -> list[np.ndarray]:
        """Views of every block in row-major order."""
        return [img[(...,) + self.block_slices(i, j)]
                for i in range(self.rows) for j in range(self.cols)]

    def assemble(self, blocks: list[np.ndarray]) -> np.ndarray:
        """Inverse of :meth:`blocks`."""
        if len(blocks) != self.rows * self.cols:
            raise DimensionError("block count does not match grid")
        rows = [np.concatenate(blocks[i * self.cols:(i + 1) * self.cols], axis=-1)
                for i in range(self.rows)]
        return np.concatenate(rows, axis=-2)


def make_grid(height: int, width: int, rows: int, cols: int) -> BlockGrid:
    if rows < 1 or cols < 1:
        raise DimensionError(f"block counts must be positive, got {rows}x{cols}")
    if rows > height or cols > width:
        raise DimensionError(
            f"{rows}x{cols} blocks do not fit a {height}x{width} image")
    return BlockGrid(height, width, rows, cols,
                     split_extent(height, rows), split_extent(width, cols))


def grid_for(img: np.ndarray, rows: int, cols: int) -> BlockGrid:
    return make_grid(img.shape[-2], img.shape[-1], rows, cols)


def check_image(img: np.ndarray, min_side: int = 1) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != CHANNELS:
        raise DimensionError(f"expected a (3, H, W) image, got shape {img.shape}")
    if img.shape[1] < min_side or img.shape[2] < min_side:
        raise DimensionError(
            f"image {img.shape[1]}x{img.shape[2]} is smaller than {min_side}x{min_side}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def block_mean(img: np.ndarray, grid: BlockGrid, block: tuple[int, int], channel: int) -> float:
    if not 0 <= channel < CHANNELS:
        raise IndexError(f"channel {channel} out of range")
    ys, xs = grid.block_slices(*block)
    return float(img[channel, ys, xs].mean())


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB after clamping both images to [0, 1].

    Identical images give ``math.inf``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((np.clip(a, 0.0, 1.0) - np.clip(b, 0.0, 1.0)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def to_bytes(img: np.ndarray) -> np.ndarray:
    """Quantize to uint8 with clamping and round-half-away-from-zero."""
    v = np.clip(img, 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


_TOKEN = re.compile(rb"(?:\s|#[^\n\r]*)*(\S+)")


def decode_ppm(data: bytes) -> np.ndarray:
    if not data.startswith(b"P6"):
        raise FormatError("not a binary PPM (missing P6 magic)")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None or not m.group(1).isdigit():
            raise FormatError("malformed PPM header")
        fields.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 255 is accepted")
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise FormatError("missing whitespace after PPM header")
    pos += 1
    payload = data[pos:]
    if len(payload) != 3 * width * height:
        raise FormatError(
            f"expected {3 * width * height} pixel bytes, found {len(payload)}")
    if width < MIN_SIDE or height < MIN_SIDE:
        raise DimensionError(f"image {height}x{width} below minimum {MIN_SIDE}x{MIN_SIDE}")
    pix = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return pix.transpose(2, 0, 1).astype(np.float64) / 255.0


def encode_ppm(img: np.ndarray) -> bytes:
    img = check_image(img)
    _, h, w = img.shape
    header = b"P6\n%d %d\n255\n" % (w, h)
    return header + to_bytes(img).transpose(1, 2, 0).tobytes()


def load_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


def save_ppm(img: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_ppm(img))


def load_image(path) -> np.ndarray:
    """Load PPM natively; other formats go through Pillow when it is installed."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm", ""):
        return load_ppm(path)
    try:
        from PIL import Image as PILImage
    except ImportError as exc:  # pragma: no cover
        raise FormatError(f"cannot read {path.suffix} without Pillow") from exc
    try:
        with PILImage.open(path) as im:
            pix = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise FormatError(str(exc)) from exc
    if pix.shape[0] < MIN_SIDE or pix.shape[1] < MIN_SIDE:
        raise DimensionError(f"image {pix.shape[0]}x{pix.shape[1]} below minimum")
    return pix.transpose(2, 0, 1).astype(np.float64) / 255.0


def save_image(img: np.ndarray, path) -> None:
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm", ""):
        save_ppm(img, path)
        return
    from PIL import Image as PILImage
    PILImage.fromarray(to_bytes(check_image(img)).transpose(1, 2, 0)).save(path)
