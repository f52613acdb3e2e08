"""Transform registry, the parameter set and its flat optimization view."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, LengthError

CATEGORIES = ("averaging", "warping", "noising", "scaling")


@dataclass(frozen=True)
class TransformSpec:
    tid: str
    name: str
    category: str
    low: float
    high: float
    margin: float
    kind: str  # "fixed" | "uniform" | "color"

    def count(self, rows: int, cols: int) -> int:
        if self.tid == "f4":
            return (rows - 1) * (cols - 1) * 2
        return rows * cols * 3


REGISTRY: dict[str, TransformSpec] = {s.tid: s for s in (
    TransformSpec("f1", "mosaicking", "averaging", 1.0, 1.0, 0.0, "fixed"),
    TransformSpec("f2", "horizontal mean", "averaging", 1.0, 1.0, 0.0, "fixed"),
    TransformSpec("f3", "vertical mean", "averaging", 1.0, 1.0, 0.0, "fixed"),
    TransformSpec("f4", "warping", "warping", -0.3, 0.3, 0.05, "uniform"),
    TransformSpec("f5", "sinusoid", "noising", 0.0, math.pi, 0.0, "uniform"),
    TransformSpec("f6", "checkerboard", "noising", 1.0, 1.0, 0.0, "fixed"),
    TransformSpec("f7", "speckle", "noising", -0.5, 0.5, 0.1, "uniform"),
    TransformSpec("f8", "color scaling", "scaling", 10 / 11, 11 / 10, 1.05, "color"),
)}

FAMILIES = ("theta1", "theta2", "theta3", "theta4", "theta5", "theta6",
            "theta7", "theta8", "phi1", "phi2")
FIXED_FAMILIES = ("theta1", "theta2", "theta3", "theta6")
UNIFORM_FAMILIES = ("theta4", "theta5", "theta7")
COLOR_FAMILIES = ("theta8",)
COMPOSING_FAMILIES = ("phi1", "phi2")
# Order of the flat optimization vector.
FREE_FAMILIES = ("theta4", "theta5", "theta7", "theta8", "phi1", "phi2")

FAMILY_CATEGORY = {
    "theta1": "averaging", "theta2": "averaging", "theta3": "averaging",
    "phi1": "averaging", "theta4": "warping", "theta5": "noising",
    "theta6": "noising", "theta7": "noising", "phi2": "noising",
    "theta8": "scaling",
}


def family_tid(family: str) -> str | None:
    return "f" + family[5:] if family.startswith("theta") else None


def family_shape(family: str, rows: int, cols: int) -> tuple[int, ...]:
    if family == "theta4":
        return (rows - 1, cols - 1, 2)
    if family.startswith("phi"):
        return (rows, cols, 3, 3)
    return (rows, cols, 3)


def resolve_margins(overrides: dict[str, float] | None = None) -> dict[str, float]:
    """Table margins merged with user overrides keyed by transform id."""
    margins = {tid: spec.margin for tid, spec in REGISTRY.items()}
    for tid, value in (overrides or {}).items():
        spec = REGISTRY.get(tid)
        if spec is None or spec.kind == "fixed":
            raise ConfigError(f"no adjustable margin for transform {tid!r}")
        if spec.kind == "color" and value < 1.0:
            raise ConfigError(f"color margin must be >= 1, got {value}")
        if value < 0:
            raise ConfigError(f"margin must be non-negative, got {value}")
        margins[tid] = float(value)
    return margins


@dataclass
class ParameterSet:
    """All transformation and composing parameters for one M x N grid.

    Per-block arrays are indexed ``[block_row, block_col, channel]``.  The warp
    family is ``[inner_row, inner_col, axis]`` with axis 0 = x, 1 = y.  Composing
    weights are raw (pre-softmax) and indexed ``[row, col, channel, weight]``.
    """

    rows: int
    cols: int
    theta1: np.ndarray
    theta2: np.ndarray
    theta3: np.ndarray
    theta4: np.ndarray
    theta5: np.ndarray
    theta6: np.ndarray
    theta7: np.ndarray
    theta8: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray

    @classmethod
    def neutral(cls, rows: int, cols: int) -> "ParameterSet":
        """Fixed families at 1, warp/speckle at 0, scaling at 1, uniform weights."""
        arrays = {}
        for fam in FAMILIES:
            shape = family_shape(fam, rows, cols)
            fill = 1.0 if fam in FIXED_FAMILIES or fam == "theta8" else 0.0
            arrays[fam] = np.full(shape, fill)
        return cls(rows, cols, **arrays)

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.rows, self.cols,
                            **{f: getattr(self, f).copy() for f in FAMILIES})

    def replace(self, **arrays) -> "ParameterSet":
        out = self.copy()
        for name, value in arrays.items():
            if name not in FAMILIES:
                raise KeyError(name)
            value = np.asarray(value, dtype=np.float64)
            if value.shape != family_shape(name, self.rows, self.cols):
                value = np.broadcast_to(value, family_shape(name, self.rows, self.cols)).copy()
            setattr(out, name, value)
        return out

    def families(self):
        for fam in FAMILIES:
            yield fam, getattr(self, fam)

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return (self.rows == other.rows and self.cols == other.cols
                and all(np.array_equal(a, getattr(other, f)) for f, a in self.families()))


@dataclass(frozen=True)
class IndexMap:
    """Per-coordinate metadata of the flat free-parameter vector."""

    rows: int
    cols: int
    slices: dict[str, slice]
    shapes: dict[str, tuple[int, ...]]
    family: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)
    margin: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.lower)

    def mask(self, families) -> np.ndarray:
        return np.isin(self.family, list(families))


def build_index(rows: int, cols: int, margins: dict[str, float] | None = None) -> IndexMap:
    """``margins`` is a full per-transform table as returned by
    :func:`resolve_margins`; ``None`` means the defaults."""
    if margins is None:
        margins = resolve_margins()
    slices, shapes = {}, {}
    fam_col, lo_col, hi_col, mg_col = [], [], [], []
    start = 0
    for fam in FREE_FAMILIES:
        shape = family_shape(fam, rows, cols)
        n = int(np.prod(shape))
        slices[fam] = slice(start, start + n)
        shapes[fam] = shape
        start += n
        tid = family_tid(fam)
        if tid is None:
            lo, hi, mg = -np.inf, np.inf, 0.0
        else:
            spec = REGISTRY[tid]
            lo, hi, mg = spec.low, spec.high, margins[tid]
        fam_col.append(np.full(n, fam, dtype="<U6"))
        lo_col.append(np.full(n, lo))
        hi_col.append(np.full(n, hi))
        mg_col.append(np.full(n, mg))
    return IndexMap(rows, cols, slices, shapes,
                    np.concatenate(fam_col), np.concatenate(lo_col),
                    np.concatenate(hi_col), np.concatenate(mg_col))


def flatten(p: ParameterSet, index: IndexMap | None = None) -> tuple[np.ndarray, IndexMap]:
    if index is None:
        index = build_index(p.rows, p.cols)
    vec = np.concatenate([getattr(p, f).ravel() for f in FREE_FAMILIES])
    return vec, index


def unflatten(vec: np.ndarray, index: IndexMap, template: ParameterSet) -> ParameterSet:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or len(vec) != index.size:
        raise LengthError(f"expected a vector of length {index.size}, got shape {vec.shape}")
    out = template.copy()
    for fam in FREE_FAMILIES:
        setattr(out, fam, vec[index.slices[fam]].reshape(index.shapes[fam]).copy())
    return out


def project_box(vec: np.ndarray, index: IndexMap) -> np.ndarray:
    return np.clip(vec, index.lower, index.upper)


# -- text serialization -----------------------------------------------------

def dumps_params(p: ParameterSet) -> str:
    """One line per family: ``<family> <d1>x<d2>x... <values...>``.

    Values use ``repr`` so that a load reproduces every float bit-exactly.
    """
    lines = [f"grid {p.rows}x{p.cols}"]
    for fam, arr in p.families():
        dims = "x".join(str(d) for d in arr.shape)
        vals = " ".join(repr(float(v)) for v in arr.ravel())
        lines.append(f"{fam} {dims} {vals}".rstrip())
    return "\n".join(lines) + "\n"


def loads_params(text: str) -> ParameterSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        tag, dims = lines[0].split()
        if tag != "grid":
            raise ValueError
        rows, cols = (int(d) for d in dims.split("x"))
        arrays = {}
        for ln in lines[1:]:
            parts = ln.split()
            fam, shape = parts[0], tuple(int(d) for d in parts[1].split("x"))
            if fam not in FAMILIES or shape != family_shape(fam, rows, cols):
                raise ValueError(f"bad record for {fam}")
            arrays[fam] = np.array([float(v) for v in parts[2:]], dtype=np.float64).reshape(shape)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"malformed parameter text: {exc}") from exc
    missing = set(FAMILIES) - set(arrays)
    if missing:
        raise FormatError(f"missing parameter families: {sorted(missing)}")
    return ParameterSet(rows, cols, **arrays)
