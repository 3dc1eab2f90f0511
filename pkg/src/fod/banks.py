"""External reference features built from the normal training set.

Five constructions are provided: per-position mean, per-query nearest
neighbour inside a window, greedy k-center coreset, per-position prototypes
updated by weighted memory writes, and a vector-quantization codebook.
Mean, nearest and prototype banks keep a grid position per entry; coreset and
codebook banks do not, which makes the inter-branch target fall back to
uniform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .correlation import EmptyBankError, GridGeometry
from .features import FeatureSequence
from .optim import Adam, Param
from .rng import child_rng
from .tensor import DimensionError, Tensor, stop_gradient

BANK_KINDS = ("mean", "nearest", "coreset", "prototype", "codebook")


class BankConfigError(ValueError):
    """Bank construction parameters out of range."""


class BankUsageError(ValueError):
    """Operation applied to the wrong kind of bank."""


@dataclass
class ReferenceBank:
    features: np.ndarray  # (N_e, d_e)
    positions: np.ndarray | None  # (N_e, 2) int rows/cols, or None
    kind: str

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise EmptyBankError(f"reference bank needs at least one entry, got shape {self.features.shape}")
        if self.positions is not None:
            self.positions = np.asarray(self.positions, dtype=np.int64)
            if self.positions.shape != (self.features.shape[0], 2):
                raise DimensionError("one (row, col) position per bank entry is required")
        if self.kind not in BANK_KINDS:
            raise BankConfigError(f"unknown bank kind {self.kind!r}")

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def make_stack(seqs: list[FeatureSequence]) -> np.ndarray:
    """Training features as (n_images, H, W, d)."""
    if not seqs:
        raise BankConfigError("feature stack needs at least one image")
    return np.stack([s.grid() for s in seqs])


def _grid_positions(h: int, w: int) -> np.ndarray:
    return GridGeometry(h, w).positions()


# ---------------------------------------------------------------------------
# mean


def mean_bank(stack: np.ndarray) -> ReferenceBank:
    n, h, w, d = stack.shape
    # sorting along the image axis makes the floating-point sum independent
    # of image order, so permuted training sets give bit-identical banks
    avg = np.sort(stack, axis=0).sum(axis=0) / n
    return ReferenceBank(avg.reshape(h * w, d), _grid_positions(h, w), "mean")


# ---------------------------------------------------------------------------
# nearest


def nearest_bank(stack: np.ndarray, query: FeatureSequence, window: int = 3) -> ReferenceBank:
    """Per query position, the closest stored feature within a window x window neighbourhood."""
    if window < 1 or window % 2 == 0:
        raise BankConfigError(f"nearest-bank window must be odd and >= 1, got {window}")
    n, h, w, d = stack.shape
    if (query.geom.height, query.geom.width) != (h, w) or query.dim != d:
        raise DimensionError("query grid does not match the training feature stack")
    r = window // 2
    q = query.grid()
    out = np.empty((h, w, d))
    for i in range(h):
        r0, r1 = max(0, i - r), min(h, i + r + 1)
        for j in range(w):
            c0, c1 = max(0, j - r), min(w, j + r + 1)
            cand = stack[:, r0:r1, c0:c1, :].reshape(-1, d)
            diff = cand - q[i, j]
            out[i, j] = cand[np.argmin(np.sum(diff * diff, axis=1))]
    return ReferenceBank(out.reshape(h * w, d), _grid_positions(h, w), "nearest")


# ---------------------------------------------------------------------------
# coreset


def greedy_coreset(features: np.ndarray, budget: int, start: int) -> np.ndarray:
    """Indices picked by iterated argmax-of-min-distance, beginning at ``start``."""
    n = features.shape[0]
    if not 1 <= budget <= n:
        raise BankConfigError(f"coreset budget must be in [1, {n}], got {budget}")
    selected = np.empty(budget, dtype=np.int64)
    selected[0] = start
    diff = features - features[start]
    mins = np.sqrt(np.sum(diff * diff, axis=1))
    mins[start] = -1.0
    for t in range(1, budget):
        pick = int(np.argmax(mins))
        selected[t] = pick
        diff = features - features[pick]
        mins = np.minimum(mins, np.sqrt(np.sum(diff * diff, axis=1)))
        mins[selected[: t + 1]] = -1.0
    return selected


def coreset_start(n: int, seed: int) -> int:
    return int(child_rng(seed, "coreset").permutation(n)[0])


def coreset_bank(stack: np.ndarray, budget: int, seed: int) -> ReferenceBank:
    flat = stack.reshape(-1, stack.shape[-1])
    if not 1 <= budget <= flat.shape[0]:
        raise BankConfigError(f"coreset budget must be in [1, {flat.shape[0]}], got {budget}")
    idx = greedy_coreset(flat, budget, coreset_start(flat.shape[0], seed))
    return ReferenceBank(flat[idx], None, "coreset")


# ---------------------------------------------------------------------------
# prototypes


def _l2_normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0.0, n, 1.0)


def _softmax(a: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(a - a.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def prototype_update(x: np.ndarray, protos: np.ndarray) -> np.ndarray:
    """One memory write at a single position.

    x: (K, d) inputs, protos: (M, d) unit vectors.  Each input joins the
    prototype it matches best; a prototype moves toward its members weighted
    by their softmax affinity (over inputs), rescaled so the strongest member
    has weight 1, then is renormalized.  Prototypes with no members stay put.
    """
    sims = x @ protos.T  # (K, M)
    owner = np.argmax(sims, axis=1)
    nu = _softmax(sims, axis=0)
    out = protos.copy()
    for m in range(protos.shape[0]):
        members = np.flatnonzero(owner == m)
        if members.size == 0:
            continue
        w = nu[members, m] / nu[members, m].max()
        out[m] = _l2_normalize(protos[m] + w @ x[members])
    return out


def prototype_bank(
    stack: np.ndarray,
    n_protos: int = 4,
    iters: int = 20,
    seed: int = 0,
    init: np.ndarray | None = None,
) -> ReferenceBank:
    """M unit-norm prototypes per grid position; entries ordered position-major."""
    if n_protos < 1:
        raise BankConfigError(f"need at least one prototype per position, got {n_protos}")
    n, h, w, d = stack.shape
    if init is None:
        init = _l2_normalize(child_rng(seed, "prototype").standard_normal((h * w, n_protos, d)))
    protos = np.array(init, dtype=np.float64).reshape(h * w, n_protos, d)
    per_pos = stack.reshape(n, h * w, d)
    for _ in range(iters):
        for pos in range(h * w):
            protos[pos] = prototype_update(per_pos[:, pos, :], protos[pos])
    positions = np.repeat(_grid_positions(h, w), n_protos, axis=0)
    return ReferenceBank(protos.reshape(h * w * n_protos, d), positions, "prototype")


# ---------------------------------------------------------------------------
# codebook


def nearest_code(x: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """Index of the nearest codebook row per input row; ties go to the lower index."""
    diff = x[:, None, :] - codebook[None, :, :]
    return np.argmin(np.sum(diff * diff, axis=-1), axis=1)


@dataclass
class CodebookFit:
    codebook: np.ndarray
    decoder_w: np.ndarray
    decoder_b: np.ndarray
    quant_distance: list[float]  # mean ||x - e_k|| before each epoch's update


def codebook_objective(x: np.ndarray, codebook: Tensor, dec_w: Tensor, dec_b: Tensor) -> Tensor:
    """Negated objective: -cos(decode(z), x) + ||sg[x] - e|| + ||x - sg[e]||, averaged over rows."""
    idx = nearest_code(x, codebook.data)
    e = codebook[idx]
    xt = Tensor(x)
    # straight-through: value of e, gradient routed to x (constant here)
    z = xt + stop_gradient(e - xt)
    o = T.matmul(z, dec_w) + dec_b
    cos = T.sum_(o * xt, axis=-1) / T.clamp_min(T.row_norm(o) * T.row_norm(xt), 1e-12)
    commit_code = T.row_norm(stop_gradient(xt) - e)
    commit_input = T.row_norm(xt - stop_gradient(e))
    return T.mean(-cos + commit_code + commit_input)


def train_codebook(
    features: np.ndarray,
    size: int = 64,
    epochs: int = 20,
    seed: int = 0,
    lr: float = 0.05,
) -> CodebookFit:
    if size < 1:
        raise BankConfigError(f"codebook size must be >= 1, got {size}")
    x = np.asarray(features, dtype=np.float64)
    rng = child_rng(seed, "codebook")
    d = x.shape[1]
    spread = x.std(axis=0) + 1e-6
    codebook = Param(x.mean(axis=0) + 0.1 * spread * rng.standard_normal((size, d)), name="codebook")
    bound = 1.0 / np.sqrt(d)
    dec_w = Param(rng.uniform(-bound, bound, (d, d)), name="decoder_w")
    dec_b = Param(np.zeros(d), name="decoder_b")
    opt = Adam([codebook, dec_w, dec_b], lr=lr)
    history = []
    for _ in range(epochs):
        idx = nearest_code(x, codebook.data)
        history.append(float(np.mean(np.linalg.norm(x - codebook.data[idx], axis=1))))
        loss = codebook_objective(x, codebook, dec_w, dec_b)
        T.backward(loss)
        opt.step()
    return CodebookFit(codebook.data.copy(), dec_w.data.copy(), dec_b.data.copy(), history)


def codebook_bank(stack: np.ndarray, size: int = 64, epochs: int = 20, seed: int = 0, lr: float = 0.05) -> ReferenceBank:
    flat = stack.reshape(-1, stack.shape[-1])
    fit = train_codebook(flat, size, epochs, seed, lr)
    return ReferenceBank(fit.codebook, None, "codebook")


def quantize(x: FeatureSequence, bank: ReferenceBank) -> FeatureSequence:
    if bank.kind != "codebook":
        raise BankUsageError(f"quantize needs a codebook bank, got {bank.kind!r}")
    idx = nearest_code(x.features, bank.features)
    return FeatureSequence(bank.features[idx], x.geom, x.level)


# ---------------------------------------------------------------------------
# dispatch


@dataclass
class BankSource:
    """Fixed bank, or the training stack for per-query nearest banks."""

    kind: str
    bank: ReferenceBank | None = None
    stack: np.ndarray | None = None
    window: int = 3

    def for_query(self, query: FeatureSequence) -> ReferenceBank:
        if self.kind == "nearest":
            return nearest_bank(self.stack, query, self.window)
        return self.bank


def build_bank_source(
    kind: str,
    stack: np.ndarray,
    seed: int,
    window: int = 3,
    coreset_budget: int = 0,
    prototypes: int = 4,
    prototype_iters: int = 20,
    codebook_size: int = 64,
    codebook_epochs: int = 20,
    codebook_lr: float = 0.05,
) -> BankSource:
    """``coreset_budget`` of 0 means one entry per grid position."""
    if kind == "mean":
        return BankSource(kind, bank=mean_bank(stack))
    if kind == "nearest":
        if window < 1 or window % 2 == 0:
            raise BankConfigError(f"nearest-bank window must be odd and >= 1, got {window}")
        return BankSource(kind, stack=stack, window=window)
    if kind == "coreset":
        budget = coreset_budget or stack.shape[1] * stack.shape[2]
        return BankSource(kind, bank=coreset_bank(stack, budget, seed))
    if kind == "prototype":
        return BankSource(kind, bank=prototype_bank(stack, prototypes, prototype_iters, seed))
    if kind == "codebook":
        return BankSource(kind, bank=codebook_bank(stack, codebook_size, codebook_epochs, seed, codebook_lr))
    raise BankConfigError(f"unknown bank kind {kind!r}; expected one of {', '.join(BANK_KINDS)}")
