"""Command line interface, job orchestration and the desk-scale sweeps."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import secrets
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .composite import CLAMP_MODES, PipelineOptions, forward, render
from .energy import TERMS, cosine
from .errors import ConfigError, DimensionError, ExtractorError, FaceObfError, FormatError
from .extractor import open_extractor
from .gradient import Objective, backward, check_gradient
from .image import grid_for, load_image, psnr, save_image
from .optimizer import LbfgsConfig, optimize
from .params import (CATEGORIES, FREE_FAMILIES, REGISTRY, dumps_params, loads_params,
                     resolve_margins)
from .rng import MASK64, init_parameters
from .synthetic import random_image, synthetic_face

log = logging.getLogger("faceobf")

METRICS_FORMAT = "faceobf-metrics/1"
EXIT_OK, EXIT_IO, EXIT_EXTRACTOR, EXIT_CONFIG = 0, 2, 3, 4

ENERGY_ALIASES = {
    "all": TERMS,
    "none": (),
    "hi-only": ("U", "C"),
    "md-only": ("D", "S"),
}


def parse_energies(text: str) -> tuple:
    key = text.strip().lower()
    if key in ENERGY_ALIASES:
        return ENERGY_ALIASES[key]
    terms = {t.strip().upper().removeprefix("E_") for t in text.split(",") if t.strip()}
    bad = terms - set(TERMS)
    if bad:
        raise ConfigError(f"unknown energy terms {sorted(bad)}; use U, C, D, S")
    return tuple(t for t in TERMS if t in terms)


def parse_categories(text: str) -> frozenset:
    if text.strip().lower() == "all":
        return frozenset(CATEGORIES)
    cats = frozenset(c.strip().lower() for c in text.split(",") if c.strip())
    bad = cats - set(CATEGORIES)
    if bad:
        raise ConfigError(f"unknown categories {sorted(bad)}; choose from {CATEGORIES}")
    if not cats:
        raise ConfigError("at least one transform category must be enabled")
    return cats


def parse_margins(items) -> dict:
    out = {}
    for item in items or ():
        tid, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"margin override must look like f4=0.05, got {item!r}")
        try:
            out[tid.strip()] = float(value)
        except ValueError as exc:
            raise ConfigError(f"bad margin value in {item!r}") from exc
    resolve_margins(out)
    return out


@dataclass
class JobConfig:
    input: str | None = None
    output: str | None = None
    metrics: str | None = None
    seed: int | None = None
    blocks: tuple = (7, 7)
    extractors: tuple = ("builtin",)
    extractor_weights: tuple | None = None
    energies: tuple = TERMS
    categories: frozenset = frozenset(CATEGORIES)
    margins: dict = field(default_factory=dict)
    iters: int = 20
    memory: int = 10
    clamp: str = "render"
    retries: int = 0

    def validate(self) -> "JobConfig":
        m, n = self.blocks
        if m < 1 or n < 1:
            raise ConfigError(f"block counts must be >= 1, got {m}x{n}")
        if not self.categories:
            raise ConfigError("at least one transform category must be enabled")
        if set(self.categories) - set(CATEGORIES):
            raise ConfigError(f"unknown categories {sorted(set(self.categories) - set(CATEGORIES))}")
        if set(self.energies) - set(TERMS):
            raise ConfigError(f"unknown energy terms {sorted(set(self.energies) - set(TERMS))}")
        if ("D" in self.energies or "S" in self.energies) and not self.extractors:
            raise ConfigError("machine-decipherability energies need at least one extractor")
        if self.extractor_weights is not None and len(self.extractor_weights) != len(self.extractors):
            raise ConfigError("give one --extractor-weight per --extractor")
        if self.clamp not in CLAMP_MODES:
            raise ConfigError(f"clamp mode must be one of {CLAMP_MODES}")
        if self.iters < 0 or self.memory < 1 or self.retries < 0:
            raise ConfigError("iters and retries must be >= 0, memory >= 1")
        resolve_margins(self.margins)
        return self

    @property
    def options(self) -> PipelineOptions:
        return PipelineOptions(frozenset(self.categories), self.clamp)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["blocks"] = list(self.blocks)
        d["extractors"] = list(self.extractors)
        d["extractor_weights"] = None if self.extractor_weights is None else list(self.extractor_weights)
        d["energies"] = list(self.energies)
        d["categories"] = [c for c in CATEGORIES if c in self.categories]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "JobConfig":
        d = dict(d)
        d["blocks"] = tuple(d["blocks"])
        d["extractors"] = tuple(d["extractors"])
        if d.get("extractor_weights") is not None:
            d["extractor_weights"] = tuple(d["extractor_weights"])
        d["energies"] = tuple(d["energies"])
        d["categories"] = frozenset(d["categories"])
        return cls(**d)


@dataclass
class JobResult:
    seed: int
    params: object
    history: list
    image: np.ndarray
    initial_cosine: list
    final_cosine: list
    psnr: float
    attempts: list
    wall_time: float = 0.0

    @property
    def initial_md(self) -> float:
        return self.history[0].md

    @property
    def final_md(self) -> float:
        return self.final.md

    @property
    def final(self):
        return min(self.history, key=lambda r: r.total) if self.history else None


def read_input(spec: str) -> np.ndarray:
    """Load an image path, or build one from ``synthetic:<seed>`` / ``random:<seed>``."""
    kind, sep, arg = spec.partition(":")
    if sep and kind in ("synthetic", "random") and arg.isdigit():
        maker = synthetic_face if kind == "synthetic" else random_image
        size = (112, 112) if kind == "synthetic" else (56, 56)
        return maker(*size, int(arg))
    return load_image(spec)


def open_extractors(config: JobConfig) -> list:
    opened = []
    try:
        for spec in config.extractors:
            opened.append(open_extractor(spec))
    except Exception:
        for ext in opened:
            ext.close()
        raise
    return opened


def _close_all(extractors):
    for ext in extractors:
        ext.close()


def _single_attempt(img, grid, config, extractors, seed):
    p0 = init_parameters(grid, seed)
    weights = list(config.extractor_weights) if config.extractor_weights else None
    obj = Objective(img, grid, p0, extractors, weights=weights, energies=config.energies,
                    margins=resolve_margins(config.margins), options=config.options)
    cfg = LbfgsConfig(max_iters=config.iters, memory=config.memory)
    best, history = optimize(img, grid, p0, objective=obj, config=cfg)
    return p0, best, history, obj


def run_job(img: np.ndarray, config: JobConfig, extractors=None) -> JobResult:
    """Initialize, optimize and render one image; the caller owns I/O."""
    config.validate()
    t0 = time.perf_counter()
    grid = grid_for(img, *config.blocks)
    seed = config.seed if config.seed is not None else secrets.randbits(64)
    own = extractors is None
    extractors = open_extractors(config) if own else extractors
    try:
        attempts, chosen = [], None
        for k in range(config.retries + 1):
            s = (seed + k) & MASK64
            p0, best, history, obj = _single_attempt(img, grid, config, extractors, s)
            attempts.append(s)
            md_on = obj.uses_md
            final = min(history, key=lambda r: r.total)
            md_gain = history[0].md - final.md
            if chosen is None or (md_on and md_gain > chosen[4]):
                chosen = (s, p0, best, history, md_gain)
            if not md_on or md_gain > 0:
                break
            log.info("seed %d did not improve machine decipherability; retrying", s)
        s, p0, best, history, _ = chosen
        out = render(forward(img, grid, best, config.options))
        init_cos, final_cos = [], []
        i0 = forward(img, grid, p0, config.options).i_out
        i1 = forward(img, grid, best, config.options).i_out
        for ext in extractors:
            f_in = ext.extract(img)
            init_cos.append(cosine(ext.extract(i0), f_in))
            final_cos.append(cosine(ext.extract(i1), f_in))
    finally:
        if own:
            _close_all(extractors)
    return JobResult(s, best, history, out, init_cos, final_cos, psnr(img, out), attempts,
                     time.perf_counter() - t0)


def _finite(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def metrics_document(config: JobConfig, result: JobResult) -> dict:
    return {
        "format": METRICS_FORMAT,
        "seed": result.seed,
        "attempts": result.attempts,
        "config": config.to_dict(),
        "history": [r.to_dict() for r in result.history],
        "extractors": [{"name": name, "initial_cosine": a, "final_cosine": b}
                       for name, a, b in zip(config.extractors, result.initial_cosine,
                                             result.final_cosine)],
        "psnr": _finite(result.psnr),
        "wall_time_s": result.wall_time,
        "parameters": dumps_params(result.params).splitlines(),
    }


def rerender(img: np.ndarray, doc: dict) -> np.ndarray:
    """Rebuild the saved image from a metrics document without optimizing."""
    config = JobConfig.from_dict(doc["config"])
    params = loads_params("\n".join(doc["parameters"]) + "\n")
    grid = grid_for(img, params.rows, params.cols)
    return render(forward(img, grid, params, config.options))


def write_json(doc, path):
    text = json.dumps(doc, indent=1, sort_keys=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ExtractorError):
        return EXIT_EXTRACTOR
    if isinstance(exc, ConfigError) or (isinstance(exc, ValueError)
                                        and not isinstance(exc, (FormatError, DimensionError))):
        return EXIT_CONFIG
    return EXIT_IO


def _guard(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (FaceObfError, OSError, ValueError) as exc:
            log.error("%s", exc)
            return _exit_code(exc)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_guard
def cmd_obfuscate(config: JobConfig) -> int:
    config.validate()
    if config.input is None or config.output is None:
        raise ConfigError("obfuscate needs --input and --output")
    img = read_input(config.input)
    result = run_job(img, config)
    save_image(result.image, config.output)
    if config.metrics:
        write_json(metrics_document(config, result), config.metrics)
    log.info("seed %d: E_D+E_S %.4f -> %.4f, PSNR %.2f dB", result.seed,
             result.initial_md, result.final_md, result.psnr)
    return EXIT_OK


def eval_pair(a: np.ndarray, b: np.ndarray, extractors) -> dict:
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    rows = []
    for ext in extractors:
        fa, fb = ext.extract(a), ext.extract(b)
        rows.append({"extractor": ext.name, "cosine": cosine(fa, fb),
                     "distance": float(np.linalg.norm(fa - fb))})
    return {"extractors": rows, "psnr": psnr(a, b)}


@_guard
def cmd_eval_pair(path_a: str, path_b: str, extractor_specs, out=None) -> int:
    out = out or sys.stdout
    a, b = read_input(path_a), read_input(path_b)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    extractors = [open_extractor(s) for s in extractor_specs]
    try:
        res = eval_pair(a, b, extractors)
    finally:
        _close_all(extractors)
    for row in res["extractors"]:
        out.write(f"{row['extractor']}\tcosine={row['cosine']:.6f}\tdistance={row['distance']:.6f}\n")
    out.write(f"psnr={res['psnr']:.4f}\n")
    return EXIT_OK


def grad_check(img, config: JobConfig, h: float = 1e-4, tolerance: float = 1e-3,
               extractors=None) -> dict:
    config.validate()
    grid = grid_for(img, *config.blocks)
    p0 = init_parameters(grid, 1 if config.seed is None else config.seed)
    own = extractors is None
    extractors = open_extractors(config) if own else extractors
    try:
        weights = list(config.extractor_weights) if config.extractor_weights else None
        obj = Objective(img, grid, p0, extractors, weights=weights, energies=config.energies,
                        margins=resolve_margins(config.margins), options=config.options)
        x0 = obj.x0()
        report = check_gradient(obj.value, lambda v: obj.value_and_grad(v)[1], x0, h,
                                tolerance, obj.kink_mask(x0, h))
        trace = forward(img, grid, p0, config.options)
        md_terms = tuple(t for t in config.energies if t in ("D", "S"))
        md_grad = backward(trace, p0, extractors, obj.feats_in, md_terms, obj.margins,
                           obj.weights, obj.index) if md_terms else np.zeros(obj.index.size)
    finally:
        if own:
            _close_all(extractors)
    summary = report.summary()
    summary["md_gradient_max_abs"] = {
        f: float(np.max(np.abs(md_grad[obj.index.slices[f]]), initial=0.0)) for f in FREE_FAMILIES}
    return summary


@_guard
def cmd_grad_check(config: JobConfig, h: float = 1e-4, tolerance: float = 1e-3, out=None) -> int:
    out = out or sys.stdout
    if not h > 0:
        raise ConfigError(f"--h must be positive, got {h}")
    img = read_input(config.input or "random:1")
    summary = grad_check(img, config, h, tolerance)
    out.write(f"pass_fraction={summary['pass_fraction']:.6f}\n")
    out.write(f"max_error={summary['max_error']:.6g}\n")
    out.write(f"mean_error={summary['mean_error']:.6g}\n")
    out.write(f"checked={summary['coordinates'] - summary['kink_adjacent']}"
              f" kink_adjacent={summary['kink_adjacent']}\n")
    for fam, v in summary["md_gradient_max_abs"].items():
        out.write(f"md_grad_max_abs[{fam}]={v:.6g}\n")
    if config.metrics:
        write_json(summary, config.metrics)
    return EXIT_OK


# -- sweeps ------------------------------------------------------------------

SWEEP_AXES = ("blocks", "margin", "energies", "categories")


def energy_combinations() -> list:
    """All 16 subsets of the energy terms, by size then term order."""
    return [c for r in range(len(TERMS) + 1) for c in itertools.combinations(TERMS, r)]


def category_nesting() -> list:
    return [CATEGORIES[:k] for k in range(1, len(CATEGORIES) + 1)]


def parse_range(text: str, cast=float) -> list:
    """``start:stop:step`` (inclusive) or a comma list."""
    if ":" in text:
        start, stop, step = (cast(v) for v in text.split(":"))
        if step <= 0:
            raise ConfigError("range step must be positive")
        vals, v, k = [], start, 0
        while v <= stop + (1e-9 if cast is float else 0):
            vals.append(v)
            k += 1
            v = start + k * step
        return vals
    return [cast(v) for v in text.split(",") if v.strip()]


def sweep_points(axis: str, values=None, transform: str | None = None, config=None) -> list:
    """``(label, JobConfig)`` for every sweep row."""
    config = config or JobConfig()
    if axis == "blocks":
        values = values if values is not None else list(range(4, 29, 3))
        return [(f"{v}x{v}", replace(config, blocks=(int(v), int(v)))) for v in values]
    if axis == "margin":
        if transform not in REGISTRY or REGISTRY[transform].kind == "fixed":
            raise ConfigError("margin sweep needs --transform f4|f5|f7|f8")
        if values is None:
            raise ConfigError("margin sweep needs --values or --range")
        return [(f"{transform}={v:g}", replace(config, margins={**config.margins, transform: v}))
                for v in values]
    if axis == "energies":
        return [("".join(c) or "none", replace(config, energies=c)) for c in energy_combinations()]
    if axis == "categories":
        return [("+".join(c), replace(config, categories=frozenset(c)))
                for c in category_nesting()]
    raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


SWEEP_HEADER = ("axis", "value", "seed", "e_d", "e_s", "cosine", "psnr", "status")


def _sweep_row(args):
    axis, label, config, img = args
    try:
        res = run_job(img, config)
        fin = res.final
        cos = float(np.mean(res.final_cosine)) if res.final_cosine else float("nan")
        return (axis, label, res.seed, fin.e_d, fin.e_s, cos, res.psnr, "ok")
    except FaceObfError as exc:
        return (axis, label, config.seed, float("nan"), float("nan"), float("nan"),
                float("nan"), f"error: {exc}")


def run_sweep(img, axis, config: JobConfig, values=None, transform=None, workers: int = 1) -> list:
    if config.seed is None:
        config = replace(config, seed=secrets.randbits(64))
    points = sweep_points(axis, values, transform, config)
    jobs = [(axis, label, cfg, img) for label, cfg in points]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(j) for j in jobs]


def format_table(rows) -> str:
    lines = ["\t".join(SWEEP_HEADER)]
    for row in rows:
        cells = [f"{c:.6g}" if isinstance(c, float) else str(c) for c in row]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


@_guard
def cmd_sweep(axis: str, config: JobConfig, values=None, transform=None, workers: int = 1,
              out=None) -> int:
    if config.input is None:
        raise ConfigError("sweep needs --input")
    img = read_input(config.input)
    rows = run_sweep(img, axis, config, values, transform, workers)
    table = format_table(rows)
    if config.output:
        Path(config.output).write_text(table, encoding="utf-8")
    else:
        (out or sys.stdout).write(table)
    return EXIT_OK


@_guard
def cmd_render(input_path: str, metrics_path: str, output: str) -> int:
    img = read_input(input_path)
    doc = json.loads(Path(metrics_path).read_text(encoding="utf-8"))
    if doc.get("format") != METRICS_FORMAT:
        raise FormatError(f"{metrics_path} is not a faceobf metrics document")
    save_image(rerender(img, doc), output)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def _job_flags(p: argparse.ArgumentParser):
    p.add_argument("--input", help="image path, or synthetic:<seed> / random:<seed>")
    p.add_argument("--output", help="output image (obfuscate) or table (sweep)")
    p.add_argument("--metrics", help="write the metrics document here")
    p.add_argument("--seed", type=int, help="64-bit seed; random when omitted")
    p.add_argument("--blocks", nargs=2, type=int, metavar=("M", "N"), default=(7, 7))
    p.add_argument("--extractor", action="append", dest="extractors",
                   help="builtin | reference | external:<command>; repeatable")
    p.add_argument("--extractor-weight", action="append", type=float, dest="weights")
    p.add_argument("--energies", default="all", help="all | none | hi-only | md-only | U,C,D,S")
    p.add_argument("--categories", default="all",
                   help="all | comma list of averaging,warping,noising,scaling")
    p.add_argument("--margin", action="append", default=[], metavar="fN=VALUE")
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--memory", type=int, default=10, help="L-BFGS history size")
    p.add_argument("--clamp", choices=CLAMP_MODES, default="render")
    p.add_argument("--retries", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def config_from_args(ns) -> JobConfig:
    return JobConfig(
        input=ns.input, output=ns.output, metrics=ns.metrics, seed=ns.seed,
        blocks=tuple(ns.blocks), extractors=tuple(ns.extractors or ("builtin",)),
        extractor_weights=tuple(ns.weights) if ns.weights else None,
        energies=parse_energies(ns.energies), categories=parse_categories(ns.categories),
        margins=parse_margins(ns.margin), iters=ns.iters, memory=ns.memory,
        clamp=ns.clamp, retries=ns.retries,
    ).validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faceobf", description="Obfuscate face crops while keeping them machine-readable.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("obfuscate", help="obfuscate one image")
    _job_flags(p)

    p = sub.add_parser("eval-pair", help="feature cosine/distance and PSNR of two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--extractor", action="append", dest="extractors")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("grad-check", help="compare analytic and finite-difference gradients")
    _job_flags(p)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-3)

    p = sub.add_parser("sweep", help="run an ablation sweep and print a table")
    _job_flags(p)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", help="comma list, or start:stop:step (inclusive)")
    p.add_argument("--transform", help="transform id for the margin axis")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("render", help="re-render an output from a metrics document")
    p.add_argument("--input", required=True)
    p.add_argument("--metrics", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command == "eval-pair":
            return cmd_eval_pair(ns.image_a, ns.image_b, ns.extractors or ["builtin"])
        if ns.command == "render":
            return cmd_render(ns.input, ns.metrics, ns.output)
        config = config_from_args(ns)
        if ns.command == "obfuscate":
            return cmd_obfuscate(config)
        if ns.command == "grad-check":
            return cmd_grad_check(config, ns.h, ns.tol)
        if ns.command == "sweep":
            cast = int if ns.axis == "blocks" else float
            values = parse_range(ns.values, cast) if ns.values else None
            return cmd_sweep(ns.axis, config, values, ns.transform, ns.workers)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    parser.error(f"unknown command {ns.command}")
    return EXIT_CONFIG
