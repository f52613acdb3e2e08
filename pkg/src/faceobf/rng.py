"""SplitMix64 generator and parameter initialization."""
from __future__ import annotations

import numpy as np

from .image import BlockGrid
from .params import REGISTRY, ParameterSet, family_shape

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-style SplitMix64.  Output k is ``mix(seed + k * gamma)``, which lets
    blocks of draws be generated with vectorized uint64 arithmetic."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next_u64(self) -> int:
        return int(self.next_block(1)[0])

    def next_block(self, n: int) -> np.ndarray:
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + k * np.uint64(GOLDEN_GAMMA)
            out = _mix(states)
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return out

    def uniform01(self, n: int) -> np.ndarray:
        return (self.next_block(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def uniform(self, low: float, high: float, n: int) -> np.ndarray:
        return low + (high - low) * self.uniform01(n)


def init_parameters(grid: BlockGrid, seed: int) -> ParameterSet:
    """Randomly initialize a parameter set.

    Draw order: warp (inner points row-major, x before y), sinusoid, speckle,
    color scaling (brighten/darken bit before magnitude), then both composing
    weight families.
    """
    rows, cols = grid.shape
    rng = SplitMix64(seed)
    p = ParameterSet.neutral(rows, cols)

    for fam, tid in (("theta4", "f4"), ("theta5", "f5"), ("theta7", "f7")):
        shape = family_shape(fam, rows, cols)
        spec = REGISTRY[tid]
        setattr(p, fam, rng.uniform(spec.low, spec.high, int(np.prod(shape))).reshape(shape))

    shape = family_shape("theta8", rows, cols)
    n = int(np.prod(shape))
    draws = rng.uniform01(2 * n)
    brighten = draws[0::2] < 0.5
    mag = 1.0 + (REGISTRY["f8"].high - 1.0) * draws[1::2]
    p.theta8 = np.where(brighten, mag, 1.0 / mag).reshape(shape)

    for fam in ("phi1", "phi2"):
        shape = family_shape(fam, rows, cols)
        setattr(p, fam, rng.uniform01(int(np.prod(shape))).reshape(shape))
    return p
