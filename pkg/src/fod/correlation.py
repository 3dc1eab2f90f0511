"""Correlation distributions: RBF targets, attention correlations, divergence, entropy.

All matrices here are row-stochastic: row ``i`` is the discrete distribution
of patch ``i`` over the columns (patches of the same image, or reference
features).  Divergence and entropy accept an optional leading head axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Tensor, as_tensor

PROB_FLOOR = 1e-12


class EmptyBankError(ValueError):
    """A reference bank with no entries was used."""


@dataclass(frozen=True)
class GridGeometry:
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DimensionError(f"grid extents must be positive, got {self.height}x{self.width}")

    @property
    def n(self) -> int:
        return self.height * self.width

    def positions(self) -> np.ndarray:
        """(N, 2) array of (row, col), row-major."""
        rows, cols = np.divmod(np.arange(self.n), self.width)
        return np.stack([rows, cols], axis=1)

    def index(self, row: int, col: int) -> int:
        return row * self.width + col


def squared_grid_distances(queries: np.ndarray, refs: np.ndarray) -> np.ndarray:
    q = np.asarray(queries, dtype=np.float64)
    r = np.asarray(refs, dtype=np.float64)
    diff = q[:, None, :] - r[None, :, :]
    return np.sum(diff * diff, axis=-1)


_distance_cache: dict[tuple, np.ndarray] = {}


def _cached_distances(geom: GridGeometry, refs: np.ndarray | None) -> np.ndarray:
    key = (geom.height, geom.width, None if refs is None else np.asarray(refs, dtype=np.int64).tobytes())
    d2 = _distance_cache.get(key)
    if d2 is None:
        queries = geom.positions()
        d2 = squared_grid_distances(queries, queries if refs is None else refs)
        d2.flags.writeable = False
        if len(_distance_cache) > 64:
            _distance_cache.clear()
        _distance_cache[key] = d2
    return d2


def kernel_sigmas(theta) -> tuple[float, float]:
    """(sigma_x, sigma_y) for an unconstrained log-scale pair."""
    th = as_tensor(theta).data
    return float(np.exp(th[0])), float(np.exp(th[1]))


def build_target_correlation(
    geom: GridGeometry,
    theta,
    ref_positions: np.ndarray | None = None,
    n_refs: int | None = None,
) -> Tensor:
    """Row-normalized RBF prior over grid distances.

    ``theta`` holds (log sigma_x, log sigma_y).  Without ``ref_positions`` the
    target is N x N over the grid itself.  With positions it is N x N_e over
    (query, reference) pairs.  Passing only ``n_refs`` means the references
    carry no positions, and the target falls back to uniform 1/N_e.
    """
    theta = as_tensor(theta)
    if ref_positions is None and n_refs is not None:
        if n_refs < 1:
            raise EmptyBankError("target correlation over an empty reference bank")
        return Tensor(np.full((geom.n, n_refs), 1.0 / n_refs))
    if ref_positions is not None and len(ref_positions) == 0:
        raise EmptyBankError("target correlation over an empty reference bank")
    d2 = _cached_distances(geom, ref_positions)
    # the 1/(2 pi sx sy) prefactor cancels under row normalization
    spread = T.sum_(T.exp(theta * 2.0))
    logits = T.mul(Tensor(-0.5 * d2), T.div(1.0, spread))
    return T.softmax_rows(logits)


def _project(x: Tensor, w: Tensor) -> Tensor:
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"feature width {x.shape[-1]} does not match projection {w.shape}")
    return T.matmul(x, w)


def split_heads(a: Tensor, heads: int) -> Tensor:
    """(N, H*d_h) -> (H, N, d_h); head h owns column block h."""
    n, width = a.shape
    if width % heads:
        raise DimensionError(f"{heads} heads do not divide width {width}")
    return T.transpose(T.reshape(a, (n, heads, width // heads)), (1, 0, 2))


def _attention(q: Tensor, k: Tensor, d_model: int, heads: int) -> Tensor:
    qh = split_heads(q, heads)
    kh = split_heads(k, heads)
    scores = T.matmul(qh, T.transpose(kh)) * (1.0 / math.sqrt(d_model))
    corr = T.softmax_rows(scores)
    return corr[0] if heads == 1 else corr


def intra_correlation(x, wq, wk, heads: int = 1) -> Tensor:
    """softmax((x wq)(x wk)^T / sqrt(d_m)) per head.

    ``wq``/``wk`` are (d_m, H*d_h); returns (N, N) for one head, else (H, N, N).
    """
    x, wq, wk = as_tensor(x), as_tensor(wq), as_tensor(wk)
    return _attention(_project(x, wq), _project(x, wk), x.shape[-1], heads)


def inter_correlation(x, bank_features, wq, wk, heads: int = 1) -> Tensor:
    """Queries from the image, keys from the reference features; N x N_e per head."""
    x, ref, wq, wk = as_tensor(x), as_tensor(bank_features), as_tensor(wq), as_tensor(wk)
    if ref.ndim != 2 or ref.shape[0] == 0:
        raise EmptyBankError("inter-correlation needs a non-empty reference bank")
    return _attention(_project(x, wq), _project(ref, wk), x.shape[-1], heads)


def symmetric_kl(t, s) -> Tensor:
    """Per-row KL(t||s) + KL(s||t); log arguments floored at 1e-12."""
    t, s = as_tensor(t), as_tensor(s)
    if t.shape != s.shape:
        raise DimensionError(f"correlation shapes differ: {t.shape} vs {s.shape}")
    log_ratio = T.log(T.clamp_min(t, PROB_FLOOR)) - T.log(T.clamp_min(s, PROB_FLOOR))
    return T.sum_((t - s) * log_ratio, axis=-1)


def correlation_entropy(s) -> Tensor:
    """Sum over all rows and columns of -s log s (0 log 0 = 0)."""
    s = as_tensor(s)
    return -T.sum_(s * T.log(T.clamp_min(s, PROB_FLOOR)))


def layer_divergence(targets: Sequence, corrs: Sequence) -> Tensor:
    """Per-row symmetric KL averaged over layers -> vector of length N."""
    if len(targets) != len(corrs) or not corrs:
        raise DimensionError("need one target per correlation and at least one layer")
    total = symmetric_kl(targets[0], corrs[0])
    for t, s in zip(targets[1:], corrs[1:]):
        total = total + symmetric_kl(t, s)
    return total * (1.0 / len(corrs))


def layer_entropy(corrs: Sequence) -> Tensor:
    if not corrs:
        raise DimensionError("need at least one layer")
    total = correlation_entropy(corrs[0])
    for s in corrs[1:]:
        total = total + correlation_entropy(s)
    return total * (1.0 / len(corrs))
