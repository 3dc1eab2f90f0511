"""Losses and optimization.

Two-phase mode (default) accumulates the gradients of two stop-gradient
losses before each Adam step:

    L1 = rec + l1 * Div(T_g, sg[S_g]) - l1 * Div(T_e, sg[S_e])
    L2 = rec - l1 * Div(sg[T_g], S_g) + l1 * Div(sg[T_e], S_e)
             - l2 * Ent(S_g) + l2 * Ent(S_e)

so the kernel variances are fitted in the first phase and the attention
projections in the second.  Direct mode instead minimizes
rec + (l1 Div_g - l2 Ent_g) + (-l1 Div_e + l2 Ent_e) with no stop-gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .banks import BANK_KINDS, BankSource, build_bank_source, make_stack
from .correlation import layer_divergence, layer_entropy
from .features import DEFAULT_DIM, LEVELS, FeatureSequence, extract_stack
from .model import VIEWS, ForwardTrace, LevelModel, ModelConfig, forward
from .optim import DEFAULT_LR, EPS, NumericError, Param, adam_step
from .rng import child_rng
from .tensor import Tensor, stop_gradient

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "l_rec", "div_g", "div_e", "ent_g", "ent_e")
COS_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.5
    lambda2: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.lambda1) and np.isfinite(self.lambda2)):
            raise ValueError("loss weights must be finite")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = DEFAULT_LR
    adam_eps: float = EPS
    seed: int = 0
    layers: int = 3
    heads: int = 8
    d_model: int = 64
    feature_dim: int = DEFAULT_DIM
    lambda1: float = 0.5
    lambda2: float = 0.5
    entropy: bool = True
    opt: str = "two-phase"
    views: str = "intra+inter"
    bank: str = "mean"
    nearest_window: int = 3
    coreset_budget: int = 0
    prototypes: int = 4
    prototype_iters: int = 20
    codebook_size: int = 64
    codebook_epochs: int = 20
    codebook_lr: float = 0.05

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.opt not in ("two-phase", "direct"):
            raise ValueError(f"unknown optimization mode {self.opt!r}")
        if self.views not in VIEWS:
            raise ValueError(f"unknown views {self.views!r}; expected one of {VIEWS}")
        if self.bank not in BANK_KINDS:
            raise ValueError(f"unknown bank kind {self.bank!r}; expected one of {BANK_KINDS}")
        if not (self.lr >= 0 and self.adam_eps > 0):
            raise ValueError("lr must be >= 0 and adam_eps > 0")

    def weights(self) -> LossWeights:
        """Effective weights: entropy off zeroes lambda2, the patch-only view zeroes both."""
        if self.views == "patch":
            return LossWeights(0.0, 0.0)
        return LossWeights(self.lambda1, self.lambda2 if self.entropy else 0.0)

    def model_config(self, in_dim: int, bank_dim: int) -> ModelConfig:
        return ModelConfig(in_dim, bank_dim, self.d_model, self.heads, self.layers, self.views)


# ---------------------------------------------------------------------------
# losses


def reconstruction_error(xhat, x) -> Tensor:
    """Per-patch ||xhat - x|| + (1 - cos(xhat, x))."""
    xhat, x = T.as_tensor(xhat), T.as_tensor(x)
    dist = T.row_norm(xhat - x)
    cos = T.sum_(xhat * x, axis=-1) / T.clamp_min(T.row_norm(xhat) * T.row_norm(x), COS_FLOOR)
    return dist + (1.0 - cos)


def reconstruction_loss(xhat, x) -> Tensor:
    return T.mean(reconstruction_error(xhat, x))


def _div(targets, corrs) -> Tensor:
    return T.mean(layer_divergence(targets, corrs))


def _zero() -> Tensor:
    return Tensor(0.0)


def intra_loss(trace: ForwardTrace, w: LossWeights) -> Tensor:
    if not trace.s_g:
        return _zero()
    return w.lambda1 * _div(trace.t_g, trace.s_g) - w.lambda2 * layer_entropy(trace.s_g)


def inter_loss(trace: ForwardTrace, w: LossWeights) -> Tensor:
    if not trace.s_e:
        return _zero()
    return -w.lambda1 * _div(trace.t_e, trace.s_e) + w.lambda2 * layer_entropy(trace.s_e)


def total_loss(trace: ForwardTrace, w: LossWeights) -> Tensor:
    return reconstruction_loss(trace.xhat, trace.x) + intra_loss(trace, w) + inter_loss(trace, w)


def phase_losses(trace: ForwardTrace, w: LossWeights) -> tuple[Tensor, Tensor]:
    rec = reconstruction_loss(trace.xhat, trace.x)
    sg = lambda mats: [stop_gradient(m) for m in mats]  # noqa: E731
    l1, l2 = rec, rec
    if trace.s_g:
        l1 = l1 + w.lambda1 * _div(trace.t_g, sg(trace.s_g))
        l2 = l2 - w.lambda1 * _div(sg(trace.t_g), trace.s_g) - w.lambda2 * layer_entropy(trace.s_g)
    if trace.s_e:
        l1 = l1 - w.lambda1 * _div(trace.t_e, sg(trace.s_e))
        l2 = l2 + w.lambda1 * _div(sg(trace.t_e), trace.s_e) + w.lambda2 * layer_entropy(trace.s_e)
    return l1, l2


def _check_finite(loss: Tensor, context: str) -> None:
    if not np.isfinite(loss.data).all():
        raise NumericError(f"non-finite loss {context}")


def accumulate_two_phase(trace: ForwardTrace, w: LossWeights, context: str = "") -> tuple[float, float]:
    """Accumulate the gradients of both phase losses into the parameters' grads (no update).

    The two phases share one graph, so a single sweep over L1 + L2 deposits
    exactly the sum of the two per-phase gradients.
    """
    l1, l2 = phase_losses(trace, w)
    _check_finite(l1, f"(phase 1) {context}")
    _check_finite(l2, f"(phase 2) {context}")
    T.backward(l1 + l2)
    return l1.item(), l2.item()


def two_phase_step(
    trace: ForwardTrace, w: LossWeights, params: list[Param], lr: float, context: str = "", eps: float = EPS
) -> None:
    accumulate_two_phase(trace, w, context)
    for p in params:
        adam_step(p, lr, eps=eps)


def direct_step(
    trace: ForwardTrace, w: LossWeights, params: list[Param], lr: float, context: str = "", eps: float = EPS
) -> None:
    loss = total_loss(trace, w)
    _check_finite(loss, context)
    T.backward(loss)
    for p in params:
        adam_step(p, lr, eps=eps)


@dataclass
class StepStats:
    l_rec: float
    div_g: float
    div_e: float
    ent_g: float
    ent_e: float


def trace_stats(trace: ForwardTrace) -> StepStats:
    def div(ts, ss):
        return float(np.mean(layer_divergence([t.data for t in ts], [s.data for s in ss]).data)) if ss else 0.0

    def ent(ss):
        return layer_entropy([s.data for s in ss]).item() if ss else 0.0

    return StepStats(
        reconstruction_loss(trace.xhat.data, trace.x.data).item(),
        div(trace.t_g, trace.s_g),
        div(trace.t_e, trace.s_e),
        ent(trace.s_g),
        ent(trace.s_e),
    )


# ---------------------------------------------------------------------------
# training loop


@dataclass
class LevelRun:
    model: LevelModel
    source: BankSource
    history: list[tuple] = field(default_factory=list)


@dataclass
class TrainResult:
    config: TrainConfig
    levels: dict[int, LevelRun]


def train_level(seqs: list[FeatureSequence], source: BankSource, config: TrainConfig, level: int) -> LevelRun:
    in_dim = seqs[0].dim
    bank_dim = (source.bank.dim if source.bank is not None else source.stack.shape[-1])
    model = LevelModel(config.model_config(in_dim, bank_dim), seed=config.seed, level=level)
    params = model.params()
    w = config.weights()
    step = two_phase_step if config.opt == "two-phase" else direct_step
    banks = [source.for_query(s) for s in seqs] if source.kind == "nearest" else None
    run = LevelRun(model, source)
    for epoch in range(1, config.epochs + 1):
        order = child_rng(config.seed, "order", level, epoch).permutation(len(seqs))
        stats = []
        for i in order:
            bank = banks[i] if banks is not None else source.bank
            trace = forward(seqs[i], bank, model)
            stats.append(trace_stats(trace))
            step(trace, w, params, config.lr, f"at level {level} epoch {epoch} image {i}", config.adam_eps)
        row = (epoch,) + tuple(float(np.mean([getattr(s, f) for s in stats])) for f in HISTORY_COLUMNS[1:])
        run.history.append(row)
        log.debug("level %d epoch %d l_rec=%.5f", level, epoch, row[1])
    return run


def build_sources(features: dict[int, list[FeatureSequence]], config: TrainConfig) -> dict[int, BankSource]:
    return {
        level: build_bank_source(
            config.bank,
            make_stack(seqs),
            seed=config.seed,
            window=config.nearest_window,
            coreset_budget=config.coreset_budget,
            prototypes=config.prototypes,
            prototype_iters=config.prototype_iters,
            codebook_size=config.codebook_size,
            codebook_epochs=config.codebook_epochs,
            codebook_lr=config.codebook_lr,
        )
        for level, seqs in features.items()
    }


def train(
    images: np.ndarray,
    config: TrainConfig,
    sources: dict[int, BankSource] | None = None,
) -> TrainResult:
    """Train one model per feature level on normal images only."""
    if len(images) == 0:
        raise ValueError("training set is empty")
    features = extract_stack(images, config.seed, config.feature_dim)
    if sources is None:
        sources = build_sources(features, config)
    levels = {level: train_level(features[level], sources[level], config, level) for level in LEVELS}
    return TrainResult(config, levels)
