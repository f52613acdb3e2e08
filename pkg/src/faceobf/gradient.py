"""Reverse-mode gradients of the total energy with respect to the free
parameters, and a central finite-difference checker."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import transforms as T
from .composite import PipelineOptions, PipelineTrace, forward
from .energy import (TERMS, EnergyReport, color_hinge_grad, energy_c, energy_md, energy_total,
                     energy_u, uniform_hinge_grad)
from .errors import ConfigError, InvalidStep
from .params import (COLOR_FAMILIES, FAMILY_CATEGORY, FREE_FAMILIES, UNIFORM_FAMILIES,
                     IndexMap, ParameterSet, build_index, family_shape, family_tid, flatten,
                     resolve_margins, unflatten)


def _to_mnc(a: np.ndarray) -> np.ndarray:
    """``(3, M, N)`` block sums to ``(M, N, 3)`` parameter layout."""
    return np.moveaxis(a, 0, -1)


def softmax_vjp(weights: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return weights * (upstream - np.sum(weights * upstream, axis=-1, keepdims=True))


def pipeline_vjp(trace: PipelineTrace, p: ParameterSet, g_out: np.ndarray) -> dict:
    """Pull an image-space cotangent on the pipeline output back to every
    free parameter family.  Families of disabled stages get zeros."""
    grid, opts = trace.grid, trace.options
    grads = {f: np.zeros(family_shape(f, p.rows, p.cols)) for f in FREE_FAMILIES}
    g = g_out
    if opts.clamp == "forward":
        g = g * ((trace.i_scaled >= 0.0) & (trace.i_scaled <= 1.0))

    if opts.enabled("scaling"):
        grads["theta8"] = _to_mnc(grid.block_sum(g * trace.i_noi))
        g = g * T.per_pixel(grid, p.theta8)

    if opts.enabled("noising"):
        wbar = trace.phi2_bar
        inner = np.stack([_to_mnc(grid.block_sum(g * n)) for n in trace.noises], axis=-1)
        grads["phi2"] = softmax_vjp(wbar, inner)

        arg, angle = T.sinusoid_phase(grid, p.theta5)
        lx = grid.local_x[None, None, :]
        ly = grid.local_y[None, :, None]
        dnoise = (T.SINUSOID_AMPLITUDE * np.cos(arg) * (2.0 * np.pi / T.sinusoid_period(grid))
                  * (-lx * np.sin(angle) + ly * np.cos(angle)))
        w5 = T.per_pixel(grid, wbar[..., 0])
        grads["theta5"] = _to_mnc(grid.block_sum(g * w5 * dnoise))

        wy, wx = T.speckle_basis(grid)
        g7 = g * T.per_pixel(grid, wbar[..., 2])
        grads["theta7"] = np.einsum("ym,cyx,xn->mnc", wy, g7, wx, optimize=True)

    if opts.enabled("warping"):
        s = trace.sampler
        dx, dy = s.grad_position()
        # sample = pixel - displacement
        gdx = -np.sum(g * dx, axis=0)
        gdy = -np.sum(g * dy, axis=0)
        wy, wx = T.warp_basis(grid)
        stepx, stepy = T.warp_steps(grid)
        lat_x = wy.T @ gdx @ wx
        lat_y = wy.T @ gdy @ wx
        grads["theta4"] = np.stack([lat_x[1:-1, 1:-1] * stepx, lat_y[1:-1, 1:-1] * stepy], axis=-1)
        g = s.scatter(g)

    if opts.enabled("averaging"):
        inner = np.stack([_to_mnc(grid.block_sum(g * a)) for a in trace.averaged], axis=-1)
        grads["phi1"] = softmax_vjp(trace.phi1_bar, inner)
    return grads


def hi_families(options: PipelineOptions, energies) -> tuple[tuple, tuple]:
    """Uniform and color families that carry hinge energy under ``options``."""
    uni = tuple(f for f in UNIFORM_FAMILIES if options.enabled(FAMILY_CATEGORY[f])) \
        if "U" in energies else ()
    col = tuple(f for f in COLOR_FAMILIES if options.enabled(FAMILY_CATEGORY[f])) \
        if "C" in energies else ()
    return uni, col


def md_image_grad(extractors, i_out, parts, energies) -> np.ndarray:
    g = np.zeros_like(i_out)
    for ext, (_, gd, gs) in zip(extractors, parts):
        seed = np.zeros_like(gd)
        if "D" in energies:
            seed = seed + gd
        if "S" in energies:
            seed = seed + gs
        if np.any(seed):
            g += ext.vjp(i_out, seed)
    return g


def backward(trace: PipelineTrace, p: ParameterSet, extractors, feats_in,
             energies=TERMS, margins=None, weights=None,
             index: IndexMap | None = None, parts=None) -> np.ndarray:
    """Gradient of the enabled energy terms, aligned with :func:`flatten`."""
    margins = margins or resolve_margins()
    index = index or build_index(p.rows, p.cols, margins)
    grads = {f: np.zeros(family_shape(f, p.rows, p.cols)) for f in FREE_FAMILIES}
    if ("D" in energies or "S" in energies) and extractors:
        if parts is None:
            _, _, parts = energy_md(extractors, trace.i_out, feats_in, weights)
        g_img = md_image_grad(extractors, trace.i_out, parts, energies)
        grads = pipeline_vjp(trace, p, g_img)
    uni, col = hi_families(trace.options, energies)
    for f in uni:
        grads[f] = grads[f] + uniform_hinge_grad(getattr(p, f), margins[family_tid(f)])
    for f in col:
        grads[f] = grads[f] + color_hinge_grad(getattr(p, f), margins[family_tid(f)])
    return np.concatenate([grads[f].ravel() for f in FREE_FAMILIES])


class Objective:
    """Total energy of a parameter vector for one image and extractor list."""

    def __init__(self, image, grid, template: ParameterSet, extractors=(), weights=None,
                 energies=TERMS, margins=None, options: PipelineOptions | None = None):
        self.image = image
        self.grid = grid
        self.template = template
        self.extractors = list(extractors)
        self.weights = list(weights) if weights is not None else [1.0] * len(self.extractors)
        if len(self.weights) != len(self.extractors):
            raise ConfigError("one weight per extractor is required")
        self.energies = tuple(t for t in TERMS if t in set(energies))
        self.margins = resolve_margins() if margins is None else margins
        self.options = options or PipelineOptions()
        self.index = build_index(template.rows, template.cols, self.margins)
        self.uses_md = "D" in self.energies or "S" in self.energies
        if self.uses_md:
            if not self.extractors:
                raise ConfigError("machine-decipherability energies need an extractor")
            for ext in self.extractors:
                if not ext.supports_vjp:
                    raise ConfigError(f"extractor {ext.name} cannot be differentiated")
        self.feats_in = [e.extract(image) for e in self.extractors]
        self.hi_uniform, self.hi_color = hi_families(self.options, self.energies)
        self.evaluations = 0

    def x0(self) -> np.ndarray:
        return flatten(self.template, self.index)[0]

    def params(self, vec) -> ParameterSet:
        return unflatten(vec, self.index, self.template)

    def evaluate(self, vec, with_grad: bool = True):
        """Return ``(report, gradient or None, trace)``."""
        self.evaluations += 1
        p = self.params(vec)
        trace = forward(self.image, self.grid, p, self.options)
        e_u = energy_u(p, self.margins, self.hi_uniform)
        e_c = energy_c(p, self.margins, self.hi_color)
        e_d = e_s = 0.0
        parts = None
        if self.uses_md:
            e_d, e_s, parts = energy_md(self.extractors, trace.i_out, self.feats_in, self.weights)
        grad = None
        gnorm = 0.0
        if with_grad:
            grad = backward(trace, p, self.extractors, self.feats_in, self.energies,
                            self.margins, self.weights, self.index, parts)
            gnorm = float(np.linalg.norm(grad))
        report = energy_total(e_u, e_c, e_d, e_s, self.energies, grad_norm=gnorm)
        return report, grad, trace

    def value(self, vec) -> float:
        return self.evaluate(vec, with_grad=False)[0].total

    def value_and_grad(self, vec):
        report, grad, _ = self.evaluate(vec)
        return report.total, grad

    def kink_mask(self, vec, h: float) -> np.ndarray:
        """Coordinates whose central-difference stencil may straddle a hinge kink."""
        vec = np.asarray(vec, dtype=np.float64)
        mask = np.zeros(len(vec), dtype=bool)
        idx = self.index
        uni = idx.mask(self.hi_uniform)
        lam = idx.margin
        mask |= uni & ((np.abs(vec) <= h) | (np.abs(np.abs(vec) - lam) <= h))
        col = idx.mask(self.hi_color)
        with np.errstate(divide="ignore"):
            mask |= col & ((np.abs(vec - 1.0) <= h) | (np.abs(vec - lam) <= h)
                           | (np.abs(vec - 1.0 / lam) <= h))
        return mask


@dataclass
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    errors: np.ndarray
    kink: np.ndarray
    tolerance: float
    h: float

    @property
    def checked(self) -> np.ndarray:
        return ~self.kink

    @property
    def pass_fraction(self) -> float:
        n = int(self.checked.sum())
        return float((self.errors[self.checked] <= self.tolerance).sum()) / n if n else 1.0

    @property
    def max_error(self) -> float:
        return float(self.errors[self.checked].max()) if self.checked.any() else 0.0

    @property
    def mean_error(self) -> float:
        return float(self.errors[self.checked].mean()) if self.checked.any() else 0.0

    def summary(self) -> dict:
        return {"coordinates": int(len(self.errors)), "kink_adjacent": int(self.kink.sum()),
                "pass_fraction": self.pass_fraction, "max_error": self.max_error,
                "mean_error": self.mean_error, "tolerance": self.tolerance, "h": self.h}


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(1e-6, np.abs(a) + np.abs(b))


def check_gradient(fun, grad, x, h: float = 1e-4, tolerance: float = 1e-3,
                   kink=None) -> GradCheckReport:
    """Compare ``grad(x)`` with central differences of ``fun`` coordinate-wise."""
    if not h > 0:
        raise InvalidStep(f"finite-difference step must be positive, got {h}")
    x = np.array(x, dtype=np.float64)
    analytic = np.asarray(grad(x), dtype=np.float64)
    numeric = np.empty_like(analytic)
    for i in range(len(x)):
        xi = x[i]
        x[i] = xi + h
        fp = fun(x)
        x[i] = xi - h
        fm = fun(x)
        x[i] = xi
        numeric[i] = (fp - fm) / (2.0 * h)
    kink = np.zeros(len(x), dtype=bool) if kink is None else np.asarray(kink, dtype=bool)
    return GradCheckReport(analytic, numeric, relative_error(analytic, numeric), kink,
                           tolerance, h)


def fd_check(img, grid, p: ParameterSet, extractors, h: float = 1e-4,
             tolerance: float = 1e-3, **objective_kw) -> GradCheckReport:
    if not h > 0:
        raise InvalidStep(f"finite-difference step must be positive, got {h}")
    obj = Objective(img, grid, p, extractors, **objective_kw)
    x0 = obj.x0()
    return check_gradient(obj.value, lambda v: obj.value_and_grad(v)[1], x0, h, tolerance,
                          obj.kink_mask(x0, h))


__all__ = ["Objective", "backward", "pipeline_vjp", "check_gradient", "fd_check",
           "GradCheckReport", "EnergyReport"]
