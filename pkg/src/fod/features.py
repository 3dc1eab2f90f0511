"""Deterministic multiscale patch features.

Stands in for a frozen pretrained backbone: each level cuts the image into
non-overlapping p x p patches, projects the flattened, mean-removed pixels
onto a fixed seeded orthonormal basis and appends the patch mean and standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correlation import GridGeometry
from .rng import child_rng
from .tensor import DimensionError

LEVELS = (8, 16)
DEFAULT_DIM = 32


@dataclass
class FeatureSequence:
    features: np.ndarray  # (N, d)
    geom: GridGeometry
    level: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != self.geom.n:
            raise DimensionError(
                f"{self.features.shape} features do not fit a {self.geom.height}x{self.geom.width} grid"
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def grid(self) -> np.ndarray:
        """Features as (H, W, d)."""
        return self.features.reshape(self.geom.height, self.geom.width, -1)


def projection_basis(in_dim: int, out_dim: int, seed: int, level: int) -> np.ndarray:
    """(in_dim, out_dim) matrix with orthonormal columns."""
    if out_dim > in_dim:
        raise DimensionError(f"cannot project {in_dim} pixel values onto {out_dim} orthonormal directions")
    g = child_rng(seed, "projection", level).standard_normal((in_dim, out_dim))
    q, r = np.linalg.qr(g)
    # sign convention makes the basis unique for a given draw
    return q * np.sign(np.diag(r))


def patchify(image: np.ndarray, p: int) -> np.ndarray:
    """(C, H, W) -> (H/p, W/p, C*p*p)."""
    c, h, w = image.shape
    blocks = image.reshape(c, h // p, p, w // p, p)
    return blocks.transpose(1, 3, 0, 2, 4).reshape(h // p, w // p, c * p * p)


def extract_features(
    image: np.ndarray,
    seed: int,
    dim: int = DEFAULT_DIM,
    levels: tuple[int, ...] = LEVELS,
) -> list[FeatureSequence]:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]
    if image.ndim != 3:
        raise DimensionError(f"expected a (C, H, W) image, got shape {image.shape}")
    c, h, w = image.shape
    stride = max(levels)
    if h % stride or w % stride:
        raise DimensionError(f"image extents {h}x{w} must be divisible by {stride}")
    out = []
    for p in levels:
        patches = patchify(image, p)
        gh, gw, flat = patches.shape
        basis = projection_basis(flat, dim, seed, p)
        rows = patches.reshape(-1, flat)
        mean = rows.mean(axis=1, keepdims=True)
        std = rows.std(axis=1, keepdims=True)
        # the mean has its own channel, so the projection sees only the patch's shape
        proj = (rows - mean) @ basis
        out.append(FeatureSequence(np.hstack([proj, mean, std]), GridGeometry(gh, gw), p))
    return out


def extract_stack(images: np.ndarray, seed: int, dim: int = DEFAULT_DIM) -> dict[int, list[FeatureSequence]]:
    """Features for a batch of images, grouped by level."""
    per_level: dict[int, list[FeatureSequence]] = {p: [] for p in LEVELS}
    for img in images:
        for seq in extract_features(img, seed, dim):
            per_level[seq.level].append(seq)
    return per_level
