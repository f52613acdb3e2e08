"""Human-indecipherability hinge energies and machine-decipherability
feature energies."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .params import COLOR_FAMILIES, UNIFORM_FAMILIES, ParameterSet, family_tid, resolve_margins

TERMS = ("U", "C", "D", "S")
NORM_EPS = 1e-12


def uniform_hinge(theta, margin):
    return np.maximum(margin - np.abs(theta), 0.0)


def uniform_hinge_grad(theta, margin):
    theta = np.asarray(theta, dtype=np.float64)
    return np.where((theta > 0) & (theta < margin), -1.0,
                    np.where((theta < 0) & (theta > -margin), 1.0, 0.0))


def color_hinge(theta, margin):
    theta = np.asarray(theta, dtype=np.float64)
    up = np.where(theta > 1, margin - theta, 0.0)
    down = np.where(theta < 1, theta - 1.0 / margin, 0.0)
    return np.maximum(up, down)


def color_hinge_grad(theta, margin):
    theta = np.asarray(theta, dtype=np.float64)
    return np.where((theta > 1) & (theta < margin), -1.0,
                    np.where((theta < 1) & (theta > 1.0 / margin), 1.0, 0.0))


def energy_u(p: ParameterSet, margins=None, families=UNIFORM_FAMILIES) -> float:
    margins = margins or resolve_margins()
    return float(sum(uniform_hinge(getattr(p, f), margins[family_tid(f)]).sum()
                     for f in families))


def energy_u_grad(p: ParameterSet, margins=None, families=UNIFORM_FAMILIES) -> dict:
    margins = margins or resolve_margins()
    return {f: uniform_hinge_grad(getattr(p, f), margins[family_tid(f)]) for f in families}


def energy_c(p: ParameterSet, margins=None, families=COLOR_FAMILIES) -> float:
    margins = margins or resolve_margins()
    return float(sum(color_hinge(getattr(p, f), margins[family_tid(f)]).sum()
                     for f in families))


def energy_c_grad(p: ParameterSet, margins=None, families=COLOR_FAMILIES) -> dict:
    margins = margins or resolve_margins()
    return {f: color_hinge_grad(getattr(p, f), margins[family_tid(f)]) for f in families}


def feature_terms(feat_out: np.ndarray, feat_in: np.ndarray):
    """Distance and cosine energies of one extractor plus their gradients
    with respect to ``feat_out``."""
    diff = feat_out - feat_in
    dist = float(np.linalg.norm(diff))
    grad_d = diff / dist if dist > 0 else np.zeros_like(diff)
    na, nb = float(np.linalg.norm(feat_out)), float(np.linalg.norm(feat_in))
    if na < NORM_EPS or nb < NORM_EPS:
        return dist, 1.0, grad_d, np.zeros_like(diff)
    cos = float(feat_out @ feat_in) / (na * nb)
    grad_cos = feat_in / (na * nb) - cos * feat_out / (na * na)
    return dist, 1.0 - cos, grad_d, -grad_cos


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na < NORM_EPS or nb < NORM_EPS:
        return 0.0
    return float(a @ b) / (na * nb)


def energy_md(extractors, i_out: np.ndarray, feats_in, weights=None):
    """Weighted sums of the distance and cosine energies over extractors.

    Returns ``(E_D, E_S, per_extractor)`` where ``per_extractor`` holds
    ``(feat_out, grad_d, grad_s)`` for each extractor.
    """
    weights = weights if weights is not None else [1.0] * len(extractors)
    e_d = e_s = 0.0
    parts = []
    for ext, f_in, w in zip(extractors, feats_in, weights):
        f_out = ext.extract(i_out)
        d, s, gd, gs = feature_terms(f_out, f_in)
        e_d += w * d
        e_s += w * s
        parts.append((f_out, w * gd, w * gs))
    return e_d, e_s, parts


@dataclass
class EnergyReport:
    e_u: float = 0.0
    e_c: float = 0.0
    e_d: float = 0.0
    e_s: float = 0.0
    total: float = 0.0
    enabled: tuple = TERMS
    iteration: int = 0
    grad_norm: float = 0.0

    @property
    def md(self) -> float:
        return self.e_d + self.e_s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["enabled"] = list(self.enabled)
        return d


def energy_total(e_u=0.0, e_c=0.0, e_d=0.0, e_s=0.0, enabled=TERMS, iteration=0,
                 grad_norm=0.0) -> EnergyReport:
    values = {"U": e_u, "C": e_c, "D": e_d, "S": e_s}
    kept = {k: (float(v) if k in enabled else 0.0) for k, v in values.items()}
    total = kept["U"] + kept["C"] + kept["D"] + kept["S"]
    return EnergyReport(kept["U"], kept["C"], kept["D"], kept["S"], total,
                        tuple(t for t in TERMS if t in enabled), iteration, float(grad_norm))
