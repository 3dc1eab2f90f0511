"""I2Correlation transformer for one feature level.

Each layer runs two attention branches side by side: intra (the image
attends to itself) and inter (the image queries a bank of normal reference
features).  The block output is the intra output minus the inter output,
followed by the usual residual + LayerNorm and feed-forward sublayers.  The
reconstruction is read from the last layer's post-attention hidden state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .banks import ReferenceBank
from .correlation import (
    GridGeometry,
    build_target_correlation,
    inter_correlation,
    intra_correlation,
    split_heads,
)
from .features import FeatureSequence
from .optim import Param
from .rng import child_rng
from .tensor import DimensionError, Tensor

VIEWS = ("patch", "intra", "inter", "intra+inter")


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int
    bank_dim: int
    d_model: int = 64
    heads: int = 8
    layers: int = 3
    views: str = "intra+inter"

    def __post_init__(self):
        if self.layers < 1:
            raise DimensionError("need at least one layer")
        if self.d_model % self.heads:
            raise DimensionError(f"{self.heads} heads do not divide d_model={self.d_model}")
        if self.views not in VIEWS:
            raise ValueError(f"unknown views {self.views!r}; expected one of {VIEWS}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    @property
    def use_intra(self) -> bool:
        return self.views != "inter"

    @property
    def use_inter(self) -> bool:
        return self.views in ("inter", "intra+inter")


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class LayerParams:
    """Weights of one I2Correlation layer.

    Each attention projection is one (in, d_m) matrix whose column block h
    belongs to head h.
    """

    NAMES = (
        "wq_g", "wk_g", "wv_g", "wq_e", "wk_e", "wv_e",
        "ff_w1", "ff_b1", "ff_w2", "ff_b2",
        "ln1_gamma", "ln1_beta", "ln2_gamma", "ln2_beta",
        "theta_g", "theta_e",
    )

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, prefix: str = ""):
        dm, de = cfg.d_model, cfg.bank_dim
        hidden = 2 * dm
        shapes = {
            "wq_g": ((dm, dm), dm), "wk_g": ((dm, dm), dm), "wv_g": ((dm, dm), dm),
            "wq_e": ((dm, dm), dm), "wk_e": ((de, dm), de), "wv_e": ((de, dm), de),
            "ff_w1": ((dm, hidden), dm), "ff_w2": ((hidden, dm), hidden),
        }
        for name in self.NAMES:
            if name in shapes:
                shape, fan_in = shapes[name]
                value = _uniform(rng, shape, fan_in)
            elif name == "ff_b1":
                value = np.zeros(hidden)
            elif name.endswith("gamma"):
                value = np.ones(dm)
            elif name.startswith("theta"):
                value = np.zeros(2)  # sigma = 1 grid unit
            else:
                value = np.zeros(dm)
            setattr(self, name, Param(value, name=prefix + name))

    def params(self) -> list[Param]:
        return [getattr(self, n) for n in self.NAMES]


class LevelModel:
    def __init__(self, cfg: ModelConfig, seed: int = 0, level: int = 0):
        self.cfg = cfg
        rng = child_rng(seed, "model", level)
        self.w_in = Param(_uniform(rng, (cfg.in_dim, cfg.d_model), cfg.in_dim), name="w_in")
        self.layers = [LayerParams(cfg, rng, prefix=f"layers.{k}.") for k in range(cfg.layers)]
        self.w_out = Param(_uniform(rng, (cfg.d_model, cfg.in_dim), cfg.d_model), name="w_out")

    def named_params(self) -> dict[str, Param]:
        out = {"w_in": self.w_in, "w_out": self.w_out}
        for layer in self.layers:
            for p in layer.params():
                out[p.name] = p
        return out

    def params(self) -> list[Param]:
        return list(self.named_params().values())

    def load(self, values: dict[str, np.ndarray]) -> None:
        params = self.named_params()
        missing = set(params) - set(values)
        if missing:
            raise KeyError(f"checkpoint lacks {sorted(missing)[:3]}...")
        for name, p in params.items():
            if values[name].shape != p.shape:
                raise DimensionError(f"{name}: checkpoint shape {values[name].shape} != {p.shape}")
            p.data[...] = values[name]


@dataclass
class BlockOutput:
    z: Tensor  # (N, d_m) intra minus inter branch output
    s_g: Tensor | None  # head-averaged correlations
    s_e: Tensor | None
    t_g: Tensor | None
    t_e: Tensor | None
    z_g: Tensor | None = None
    z_e: Tensor | None = None


def _merge_heads(z: Tensor) -> Tensor:
    h, n, dh = z.shape
    return T.reshape(T.transpose(z, (1, 0, 2)), (n, h * dh))


def inter_target(geom: GridGeometry, theta, bank: ReferenceBank) -> Tensor:
    if bank.positions is None:
        return build_target_correlation(geom, theta, n_refs=bank.size)
    return build_target_correlation(geom, theta, ref_positions=bank.positions)


def _head_mean(corr: Tensor) -> Tensor:
    return T.mean(corr, axis=0) if corr.ndim == 3 else corr


def _attend(corr: Tensor, values: Tensor, heads: int) -> Tensor:
    if heads == 1:
        return T.matmul(corr, values)
    return _merge_heads(T.matmul(corr, split_heads(values, heads)))


def i2correlation_block(
    x_prev: Tensor,
    bank: ReferenceBank | None,
    lp: LayerParams,
    geom: GridGeometry,
    heads: int = 1,
    use_intra: bool = True,
    use_inter: bool = True,
) -> BlockOutput:
    z_g = s_g = t_g = None
    z_e = s_e = t_e = None
    if use_intra:
        s_heads = intra_correlation(x_prev, lp.wq_g, lp.wk_g, heads)
        z_g = _attend(s_heads, T.matmul(x_prev, lp.wv_g), heads)
        s_g = _head_mean(s_heads)
        t_g = build_target_correlation(geom, lp.theta_g)
    if use_inter:
        if bank is None:
            raise ValueError("inter branch needs a reference bank")
        ref = Tensor(bank.features)
        s_heads = inter_correlation(x_prev, ref, lp.wq_e, lp.wk_e, heads)
        z_e = _attend(s_heads, T.matmul(ref, lp.wv_e), heads)
        s_e = _head_mean(s_heads)
        t_e = inter_target(geom, lp.theta_e, bank)
    if z_g is not None and z_e is not None:
        z = z_g - z_e
    elif z_g is not None:
        z = z_g
    else:
        z = -z_e
    return BlockOutput(z, s_g, s_e, t_g, t_e, z_g, z_e)


@dataclass
class ForwardTrace:
    x: Tensor  # input features (N, d)
    xhat: Tensor  # reconstruction (N, d)
    geom: GridGeometry
    s_g: list[Tensor] = field(default_factory=list)
    s_e: list[Tensor] = field(default_factory=list)
    t_g: list[Tensor] = field(default_factory=list)
    t_e: list[Tensor] = field(default_factory=list)


def forward(x: FeatureSequence, bank: ReferenceBank | None, m: LevelModel) -> ForwardTrace:
    cfg = m.cfg
    if x.dim != cfg.in_dim:
        raise DimensionError(f"model expects {cfg.in_dim}-dim features, got {x.dim}")
    xin = Tensor(x.features)
    h = T.matmul(xin, m.w_in)
    trace = ForwardTrace(x=xin, xhat=None, geom=x.geom)
    z = h
    for lp in m.layers:
        blk = i2correlation_block(h, bank, lp, x.geom, cfg.heads, cfg.use_intra, cfg.use_inter)
        z = T.layer_norm(blk.z + h, lp.ln1_gamma, lp.ln1_beta)
        ff = T.matmul(T.gelu(T.matmul(z, lp.ff_w1) + lp.ff_b1), lp.ff_w2) + lp.ff_b2
        h = T.layer_norm(ff + z, lp.ln2_gamma, lp.ln2_beta)
        for name in ("s_g", "s_e", "t_g", "t_e"):
            value = getattr(blk, name)
            if value is not None:
                getattr(trace, name).append(value)
    trace.xhat = T.matmul(z, m.w_out)
    return trace
