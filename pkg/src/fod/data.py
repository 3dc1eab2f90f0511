"""Synthetic texture benchmark with injected anomalies and pixel masks.

Normal images all show one fixed "object": a smooth seeded template (the
same for every image of a dataset) overlaid with a fine texture whose
orientation drifts across the image.  Texture phase, or the texture itself
for the noise family, and pixel noise vary per image.  Three anomaly kinds are injected into test
images:

* ``local``: a contiguous square whose intensity is perturbed;
* ``global``: the texture frequency is shifted image-wide by a subtle factor;
* ``quadrant``: two diagonal quadrants are exchanged, so every patch is
  locally plausible but sits at the wrong place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import child_rng

TEXTURES = ("grating", "noise")
ANOMALY_KINDS = ("local", "global", "quadrant")


@dataclass(frozen=True)
class SyntheticSpec:
    height: int = 64
    width: int = 64
    texture: str = "grating"
    anomaly: str = "mixed"  # one of ANOMALY_KINDS, or "mixed" to cycle through them
    n_train: int = 32
    n_test: int = 40
    anomaly_fraction: float = 0.5
    template_cell: float = 10.0  # lattice spacing of the fixed object template, in pixels
    texture_amplitude: float = 0.06
    period: float = 6.0  # texture wavelength in pixels
    local_size: int = 12
    local_strength: float = 0.35
    freq_shift: float = 0.3
    noise: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.texture not in TEXTURES:
            raise ValueError(f"unknown texture {self.texture!r}; expected one of {TEXTURES}")
        if self.anomaly != "mixed" and self.anomaly not in ANOMALY_KINDS:
            raise ValueError(f"unknown anomaly kind {self.anomaly!r}")
        if not 0.0 <= self.anomaly_fraction <= 1.0:
            raise ValueError("anomaly_fraction must lie in [0, 1]")
        if self.height % 2 or self.width % 2:
            raise ValueError("image extents must be even so quadrants are well defined")
        if not 1 <= self.local_size <= min(self.height, self.width):
            raise ValueError("local_size must fit inside the image")

    @property
    def n_anomalous(self) -> int:
        return int(round(self.n_test * self.anomaly_fraction))


@dataclass
class Dataset:
    train: np.ndarray  # (n_train, 1, H, W)
    test: np.ndarray  # (n_test, 1, H, W)
    masks: np.ndarray  # (n_test, H, W) in {0, 1}
    labels: np.ndarray  # (n_test,) in {0, 1}
    kinds: list[str]  # "normal" or the anomaly kind, per test image


def _value_noise(rng: np.random.Generator, h: int, w: int, cell: float) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [0, 1]."""
    gh, gw = int(np.ceil(h / cell)) + 2, int(np.ceil(w / cell)) + 2
    lattice = rng.random((gh, gw))
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    fy, fx = yy / cell, xx / cell
    y0, x0 = np.floor(fy).astype(int), np.floor(fx).astype(int)
    ty, tx = fy - y0, fx - x0
    ty, tx = ty * ty * (3 - 2 * ty), tx * tx * (3 - 2 * tx)
    a = lattice[y0, x0] * (1 - tx) + lattice[y0, x0 + 1] * tx
    b = lattice[y0 + 1, x0] * (1 - tx) + lattice[y0 + 1, x0 + 1] * tx
    return a * (1 - ty) + b * ty


def layout(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """The fixed object every normal image shows: a smooth template and a texture-orientation field."""
    h, w = spec.height, spec.width
    rng = child_rng(spec.seed, "layout")
    template = 0.2 + 0.6 * _value_noise(rng, h, w, cell=spec.template_cell)
    yy, xx = np.mgrid[0:h, 0:w] / np.array([h, w], dtype=np.float64)[:, None, None]
    orientation = np.pi * (0.15 + 0.6 * xx * yy + 0.25 * yy)
    return template, orientation


def render_normal(spec: SyntheticSpec, rng: np.random.Generator, freq_scale: float = 1.0) -> np.ndarray:
    h, w = spec.height, spec.width
    template, theta = layout(spec)
    if spec.texture == "grating":
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        tex = np.sin(2.0 * np.pi * (freq_scale / spec.period) * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    else:
        tex = 2.0 * _value_noise(rng, h, w, cell=spec.period / (2.0 * freq_scale)) - 1.0
    img = template + spec.texture_amplitude * tex + spec.noise * rng.standard_normal((h, w))
    return np.clip(img, 0.0, 1.0)[None]


def inject_local(img: np.ndarray, spec: SyntheticSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    _, h, w = img.shape
    s = spec.local_size
    r0 = int(rng.integers(0, h - s + 1))
    c0 = int(rng.integers(0, w - s + 1))
    mask = np.zeros((h, w))
    mask[r0:r0 + s, c0:c0 + s] = 1.0
    sign = 1.0 if rng.random() < 0.5 else -1.0
    out = img.copy()
    out[0] = np.clip(out[0] + sign * spec.local_strength * mask, 0.0, 1.0)
    return out, mask


def swap_quadrants(img: np.ndarray) -> np.ndarray:
    """Exchange the top-left and bottom-right quadrants."""
    _, h, w = img.shape
    hh, hw = h // 2, w // 2
    out = img.copy()
    out[:, :hh, :hw] = img[:, hh:, hw:]
    out[:, hh:, hw:] = img[:, :hh, :hw]
    return out


def quadrant_mask(h: int, w: int) -> np.ndarray:
    mask = np.zeros((h, w))
    mask[: h // 2, : w // 2] = 1.0
    mask[h // 2:, w // 2:] = 1.0
    return mask


def generate_dataset(spec: SyntheticSpec) -> Dataset:
    h, w = spec.height, spec.width
    train = np.stack([render_normal(spec, child_rng(spec.seed, "train", i)) for i in range(spec.n_train)])
    n_anom = spec.n_anomalous
    test, masks, labels, kinds = [], [], [], []
    for i in range(spec.n_test):
        rng = child_rng(spec.seed, "test", i)
        if i < spec.n_test - n_anom:
            img, mask, kind = render_normal(spec, rng), np.zeros((h, w)), "normal"
        else:
            j = i - (spec.n_test - n_anom)
            kind = ANOMALY_KINDS[j % 3] if spec.anomaly == "mixed" else spec.anomaly
            if kind == "local":
                img, mask = inject_local(render_normal(spec, rng), spec, rng)
            elif kind == "global":
                img, mask = render_normal(spec, rng, freq_scale=1.0 + spec.freq_shift), np.ones((h, w))
            else:
                img, mask = swap_quadrants(render_normal(spec, rng)), quadrant_mask(h, w)
        test.append(img)
        masks.append(mask)
        labels.append(0 if kind == "normal" else 1)
        kinds.append(kind)
    return Dataset(train, np.stack(test), np.stack(masks), np.asarray(labels, dtype=np.int64), kinds)
