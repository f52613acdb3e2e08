"""The composite pipeline: averaging superposition, warp, noise
superposition, color scaling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import transforms as T
from .errors import ConfigError, DimensionError
from .image import BlockGrid
from .params import CATEGORIES, ParameterSet

CLAMP_MODES = ("render", "forward")


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return z / np.sum(z, axis=axis, keepdims=True)


def softmax3(a: float, b: float, c: float) -> tuple[float, float, float]:
    out = softmax(np.array([a, b, c], dtype=np.float64))
    return float(out[0]), float(out[1]), float(out[2])


@dataclass(frozen=True)
class PipelineOptions:
    categories: frozenset = frozenset(CATEGORIES)
    clamp: str = "render"

    def __post_init__(self):
        bad = set(self.categories) - set(CATEGORIES)
        if bad:
            raise ConfigError(f"unknown transform categories {sorted(bad)}")
        if not self.categories:
            raise ConfigError("at least one transform category must be enabled")
        if self.clamp not in CLAMP_MODES:
            raise ConfigError(f"clamp mode must be one of {CLAMP_MODES}")
        object.__setattr__(self, "categories", frozenset(self.categories))

    def enabled(self, category: str) -> bool:
        return category in self.categories


@dataclass
class PipelineTrace:
    grid: BlockGrid
    options: PipelineOptions
    image: np.ndarray
    i_avg: np.ndarray
    i_warped: np.ndarray
    i_noi: np.ndarray
    i_out: np.ndarray
    # values before any in-forward clamp; equal to i_out in render mode
    i_scaled: np.ndarray
    averaged: tuple = ()
    noises: tuple = ()
    phi1_bar: np.ndarray | None = None
    phi2_bar: np.ndarray | None = None
    sampler: T.BilinearSample | None = None


def forward(img: np.ndarray, grid: BlockGrid, p: ParameterSet,
            options: PipelineOptions | None = None) -> PipelineTrace:
    options = options or PipelineOptions()
    if img.shape != (3, grid.height, grid.width):
        raise DimensionError(f"image {img.shape} does not match grid {grid.height}x{grid.width}")
    if (p.rows, p.cols) != grid.shape:
        raise DimensionError("parameter set and grid disagree on block counts")

    averaged: tuple = ()
    phi1_bar = None
    if options.enabled("averaging"):
        averaged = (T.f1_mosaic(img, grid, p.theta1),
                    T.f2_hmean(img, grid, p.theta2),
                    T.f3_vmean(img, grid, p.theta3))
        phi1_bar = softmax(p.phi1)
        i_avg = sum(T.per_pixel(grid, phi1_bar[..., k]) * averaged[k] for k in range(3))
    else:
        i_avg = img

    sampler = None
    if options.enabled("warping"):
        sx, sy = T.sample_coordinates(grid, p.theta4)
        sampler = T.BilinearSample(i_avg, sx, sy)
        i_warped = sampler.value
    else:
        i_warped = i_avg

    noises: tuple = ()
    phi2_bar = None
    if options.enabled("noising"):
        noises = (T.f5_sinusoid(grid, p.theta5),
                  T.f6_checkerboard(grid, p.theta6),
                  T.f7_speckle(grid, p.theta7))
        phi2_bar = softmax(p.phi2)
        i_noi = i_warped + sum(T.per_pixel(grid, phi2_bar[..., k]) * noises[k] for k in range(3))
    else:
        i_noi = i_warped

    i_scaled = T.f8_colorscale(i_noi, grid, p.theta8) if options.enabled("scaling") else i_noi
    i_out = np.clip(i_scaled, 0.0, 1.0) if options.clamp == "forward" else i_scaled

    return PipelineTrace(grid=grid, options=options, image=img, i_avg=i_avg,
                         i_warped=i_warped, i_noi=i_noi, i_out=i_out, i_scaled=i_scaled,
                         averaged=averaged, noises=noises, phi1_bar=phi1_bar,
                         phi2_bar=phi2_bar, sampler=sampler)


def render(trace: PipelineTrace) -> np.ndarray:
    return np.clip(trace.i_out, 0.0, 1.0)
