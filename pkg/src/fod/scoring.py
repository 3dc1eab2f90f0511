"""Patch anomaly scores, level fusion, image scores and AUROC."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.stats import rankdata

from .correlation import GridGeometry, layer_divergence
from .model import ForwardTrace
from .tensor import DimensionError
from .training import reconstruction_error

CRITERIA = ("rec", "div", "recdiv")


class UndefinedMetricError(ValueError):
    """AUROC needs both classes present."""


@dataclass
class AnomalyMap:
    values: np.ndarray  # (Himg, Wimg), finite and nonnegative
    levels: tuple[int, ...] = ()


@dataclass
class EvalRecord:
    image_id: int
    label: int
    score: float
    amap: AnomalyMap
    mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.mask.shape != self.amap.values.shape:
            raise DimensionError(f"mask {self.mask.shape} does not match map {self.amap.values.shape}")


def rec_scores(trace: ForwardTrace) -> np.ndarray:
    return reconstruction_error(trace.xhat.data, trace.x.data).data


def div_scores(trace: ForwardTrace) -> np.ndarray:
    """Layer-averaged symmetric KL on the inter branch (intra when there is no inter branch)."""
    if trace.s_e:
        ts, ss = trace.t_e, trace.s_e
    elif trace.s_g:
        ts, ss = trace.t_g, trace.s_g
    else:
        raise ValueError("trace carries no correlations to score; use the rec criterion")
    return layer_divergence([t.data for t in ts], [s.data for s in ss]).data


def _softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max())
    return e / e.sum()


def combine(rec: np.ndarray, div: np.ndarray) -> np.ndarray:
    """rec * (1 - softmax(-div)) with the softmax taken over the patches of one image."""
    return rec * (1.0 - _softmax(-div))


def patch_scores(trace: ForwardTrace, criterion: str = "recdiv") -> np.ndarray:
    if criterion == "rec":
        return rec_scores(trace)
    if criterion == "div":
        return div_scores(trace)
    if criterion == "recdiv":
        return combine(rec_scores(trace), div_scores(trace))
    raise ValueError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")


def _axis_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) bilinear interpolation matrix, half-pixel centers, edge-clamped."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    w = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(w, (rows, lo), 1.0 - frac)
    np.add.at(w, (rows, hi), frac)
    return w


def to_map(scores: np.ndarray, geom: GridGeometry, out_hw: tuple[int, int], sigma: float = 0.0) -> np.ndarray:
    """Reshape patch scores to the grid and upsample bilinearly; optional Gaussian smoothing."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (geom.n,):
        raise DimensionError(f"expected {geom.n} scores, got {scores.shape}")
    grid = scores.reshape(geom.height, geom.width)
    out = _axis_weights(geom.height, out_hw[0]) @ grid @ _axis_weights(geom.width, out_hw[1]).T
    if sigma > 0:
        out = gaussian_filter(out, sigma=sigma, mode="nearest")
    return out


def fuse_levels(level_maps: list[np.ndarray]) -> np.ndarray:
    """Min-max normalize each level over its whole test-set stack, then average.

    Each element is an (n_images, H, W) stack for one level; a level with zero
    range normalizes to all zeros.
    """
    if not level_maps:
        raise ValueError("nothing to fuse")
    shape = level_maps[0].shape
    normed = []
    for m in level_maps:
        if m.shape != shape:
            raise DimensionError(f"level map extents differ: {m.shape} vs {shape}")
        lo, hi = float(m.min()), float(m.max())
        normed.append((m - lo) / (hi - lo) if hi > lo else np.zeros_like(m))
    return sum(normed) / len(normed)


def image_score(amap: np.ndarray) -> float:
    return float(np.max(amap))


def auroc(scores, labels) -> float:
    """Mann-Whitney U / (n_pos * n_neg), ties counted one half."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise DimensionError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC is undefined when only one class is present")
    ranks = rankdata(s)  # midranks for ties
    # rank sums of half-integers are exact in binary floating point
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
