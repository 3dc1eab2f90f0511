"""Small factories shared by the test modules."""

import numpy as np

from fod.banks import ReferenceBank
from fod.correlation import GridGeometry
from fod.features import FeatureSequence
from fod.model import LevelModel, ModelConfig


def toy_sequence(rng, h=2, w=2, d=5, level=8):
    geom = GridGeometry(h, w)
    return FeatureSequence(rng.uniform(-1, 1, (geom.n, d)), geom, level)


def toy_bank(rng, n=3, d=5, positions=True, grid=(2, 2)):
    pos = None
    if positions:
        cells = GridGeometry(*grid).positions()
        pos = cells[rng.integers(0, len(cells), n)]
    return ReferenceBank(rng.uniform(-1, 1, (n, d)), pos, "mean" if positions else "coreset")


def toy_model(seed=0, in_dim=5, bank_dim=5, d_model=4, heads=2, layers=2, views="intra+inter"):
    m = LevelModel(ModelConfig(in_dim, bank_dim, d_model, heads, layers, views), seed=seed)
    # move kernel widths and norms off their symmetric starting points so every path is exercised
    rng = np.random.default_rng(seed + 1000)
    for p in m.params():
        if "theta" in p.name or "gamma" in p.name or "beta" in p.name or "_b" in p.name:
            p.data += rng.uniform(-0.3, 0.3, p.shape)
    return m
