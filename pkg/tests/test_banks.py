import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fod.banks import (
    BankConfigError,
    BankUsageError,
    ReferenceBank,
    build_bank_source,
    codebook_objective,
    coreset_bank,
    coreset_start,
    greedy_coreset,
    mean_bank,
    nearest_bank,
    nearest_code,
    prototype_bank,
    prototype_update,
    quantize,
    train_codebook,
)
from fod.correlation import EmptyBankError, GridGeometry
from fod.features import FeatureSequence
from fod.optim import Param
from fod.tensor import DimensionError


def seq_from_grid(g):
    h, w, d = g.shape
    return FeatureSequence(g.reshape(h * w, d), GridGeometry(h, w), 8)


def test_bank_invariants():
    with pytest.raises(EmptyBankError):
        ReferenceBank(np.zeros((0, 3)), None, "mean")
    with pytest.raises(DimensionError):
        ReferenceBank(np.zeros((2, 3)), np.zeros((3, 2)), "mean")
    with pytest.raises(BankConfigError):
        ReferenceBank(np.zeros((2, 3)), None, "sparse")


# --- mean ---------------------------------------------------------------------


def test_mean_single_image_and_cancellation():
    rng = np.random.default_rng(0)
    one = rng.normal(size=(1, 2, 3, 4))
    b = mean_bank(one)
    np.testing.assert_array_equal(b.features, one.reshape(6, 4))
    np.testing.assert_array_equal(b.positions, GridGeometry(2, 3).positions())
    v = rng.normal(size=(1, 2, 2, 3))
    assert (mean_bank(np.concatenate([v, -v])).features == 0).all()


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 7))
def test_mean_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    stack = rng.normal(size=(n, 2, 2, 3))
    perm = rng.permutation(n)
    assert mean_bank(stack).features.tobytes() == mean_bank(stack[perm]).features.tobytes()


# --- nearest ---------------------------------------------------------------


def brute_nearest(stack, q, window):
    n, h, w, d = stack.shape
    r = window // 2
    out = np.empty((h, w, d))
    for i in range(h):
        for j in range(w):
            best, arg = np.inf, None
            for k in range(n):
                for a in range(h):
                    for b in range(w):
                        if abs(a - i) <= r and abs(b - j) <= r:
                            dist = np.sum((stack[k, a, b] - q[i, j]) ** 2)
                            if dist < best:
                                best, arg = dist, stack[k, a, b]
            out[i, j] = arg
    return out


def test_nearest_self_match():
    stack = np.random.default_rng(1).normal(size=(3, 3, 3, 4))
    b = nearest_bank(stack, seq_from_grid(stack[1]), 3)
    np.testing.assert_array_equal(b.features, stack[1].reshape(9, 4))


def test_nearest_window_one_stays_in_place():
    rng = np.random.default_rng(2)
    stack = rng.normal(size=(4, 3, 3, 2))
    q = rng.normal(size=(3, 3, 2))
    b = nearest_bank(stack, seq_from_grid(q), 1).features.reshape(3, 3, 2)
    for i in range(3):
        for j in range(3):
            assert any((b[i, j] == stack[k, i, j]).all() for k in range(4))


@pytest.mark.parametrize("shape,window", [((2, 3, 3, 4), 3), ((3, 8, 8, 3), 3), ((2, 5, 4, 2), 5), ((2, 8, 8, 2), 1)])
def test_nearest_matches_exhaustive_search(shape, window):
    rng = np.random.default_rng(sum(shape))
    stack = rng.normal(size=shape)
    q = rng.normal(size=shape[1:])
    got = nearest_bank(stack, seq_from_grid(q), window).features.reshape(shape[1:])
    np.testing.assert_array_equal(got, brute_nearest(stack, q, window))


def test_nearest_never_worse_than_same_position():
    rng = np.random.default_rng(3)
    stack, q = rng.normal(size=(3, 4, 4, 3)), rng.normal(size=(4, 4, 3))
    got = nearest_bank(stack, seq_from_grid(q), 3).features.reshape(4, 4, 3)
    d_got = np.linalg.norm(got - q, axis=-1)
    d_same = np.linalg.norm(stack - q, axis=-1).min(axis=0)
    assert (d_got <= d_same).all()


@pytest.mark.parametrize("window", [0, 2, -1])
def test_nearest_window_validation(window):
    stack = np.zeros((1, 2, 2, 1))
    with pytest.raises(BankConfigError):
        nearest_bank(stack, seq_from_grid(stack[0]), window)


# --- coreset ----------------------------------------------------------------


def test_coreset_one_dimensional_example():
    pts = np.array([[0.0], [1.0], [2.0], [10.0]])
    assert sorted(pts[greedy_coreset(pts, 2, 0)].ravel()) == [0.0, 10.0]


def rescan_check(features, picked):
    for t in range(1, len(picked)):
        chosen = features[picked[:t]]
        rest = [i for i in range(len(features)) if i not in picked[:t]]
        dmin = {i: min(np.linalg.norm(features[i] - c) for c in chosen) for i in rest}
        best = max(dmin.values())
        assert dmin[int(picked[t])] == best


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 256), d=st.integers(1, 5))
def test_coreset_every_step_is_argmax_min(seed, n, d):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(n, d))
    budget = int(rng.integers(1, min(n, 12) + 1))
    picked = greedy_coreset(feats, budget, int(rng.integers(n)))
    assert len(set(picked.tolist())) == budget
    rescan_check(feats, picked)


def test_coreset_full_budget_is_permutation_and_budget_one_is_start():
    stack = np.random.default_rng(4).normal(size=(2, 2, 2, 3))
    flat = stack.reshape(-1, 3)
    full = coreset_bank(stack, 8, seed=5)
    assert sorted(map(tuple, full.features)) == sorted(map(tuple, flat))
    assert full.positions is None
    one = coreset_bank(stack, 1, seed=5)
    np.testing.assert_array_equal(one.features[0], flat[coreset_start(8, 5)])


@pytest.mark.parametrize("budget", [0, 9])
def test_coreset_budget_range(budget):
    with pytest.raises(BankConfigError):
        coreset_bank(np.zeros((2, 2, 2, 1)), budget, 0)


# --- prototypes ------------------------------------------------------------


def test_prototype_fixed_point():
    x = np.array([[3.0, 4.0]])
    p = x / 5.0
    np.testing.assert_allclose(prototype_update(x, p), p, rtol=0, atol=1e-15)


def test_prototypes_unit_norm_every_iteration():
    rng = np.random.default_rng(6)
    stack = rng.normal(size=(6, 2, 2, 4))
    protos = None
    for it in range(1, 6):
        b = prototype_bank(stack, n_protos=3, iters=it, seed=1)
        assert b.size == 12 and b.positions.shape == (12, 2)
        np.testing.assert_allclose(np.linalg.norm(b.features, axis=1), 1.0, atol=1e-9)
        protos = b
    np.testing.assert_array_equal(protos.positions[:3], [[0, 0]] * 3)


def test_prototypes_find_two_clusters():
    rng = np.random.default_rng(7)
    angles = np.concatenate([rng.normal(0.3, 0.1, 20), rng.normal(2.2, 0.1, 20)])
    pts = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    stack = pts.reshape(40, 1, 1, 2)
    init = np.array([[[np.cos(1.0), np.sin(1.0)], [np.cos(1.6), np.sin(1.6)]]])
    b = prototype_bank(stack, n_protos=2, iters=20, init=init)
    means = np.stack([pts[:20].mean(0), pts[20:].mean(0)])
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    cos = b.features @ means.T
    assert cos[0, 0] > cos[0, 1] and cos[1, 1] > cos[1, 0]


def test_prototype_count_validation():
    with pytest.raises(BankConfigError):
        prototype_bank(np.zeros((1, 1, 1, 2)), n_protos=0)


# --- codebook and quantization --------------------------------------------------


def test_perfect_codebook_has_zero_quantization_and_commitment():
    x = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 0.0]])
    cb = Param(np.array([[1.0, 0.0], [0.0, 2.0]]))
    w = Param(np.eye(2))
    b = Param(np.zeros(2))
    # the decoder is the identity, so cosine is 1 and the objective is exactly -1
    assert codebook_objective(x, cb, w, b).item() == pytest.approx(-1.0, abs=1e-15)
    np.testing.assert_array_equal(cb.data[nearest_code(x, cb.data)], x)


def test_nearest_code_example_and_ties():
    cb = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert nearest_code(np.array([[0.9, 0.8]]), cb).tolist() == [1]
    assert nearest_code(np.array([[0.5, 0.5]]), cb).tolist() == [0]


def test_codebook_training_reduces_quantization_distance():
    rng = np.random.default_rng(8)
    x = np.concatenate([rng.normal(-3, 0.1, (30, 2)), rng.normal(3, 0.1, (30, 2))])
    fit = train_codebook(x, size=2, epochs=20, seed=0, lr=0.2)
    assert fit.quant_distance[-1] < fit.quant_distance[0]


def test_quantize_matches_exhaustive_scan():
    rng = np.random.default_rng(9)
    cb = ReferenceBank(rng.normal(size=(7, 3)), None, "codebook")
    x = seq_from_grid(rng.normal(size=(4, 4, 3)))
    q = quantize(x, cb).features
    for row, got in zip(x.features, q):
        dists = [np.linalg.norm(row - c) for c in cb.features]
        assert np.linalg.norm(row - got) == min(dists)
        np.testing.assert_array_equal(got, cb.features[int(np.argmin(dists))])
    np.testing.assert_array_equal(quantize(seq_from_grid(cb.features[:4].reshape(2, 2, 3)), cb).features, cb.features[:4])


def test_quantize_requires_codebook():
    with pytest.raises(BankUsageError):
        quantize(seq_from_grid(np.zeros((1, 1, 2))), ReferenceBank(np.zeros((1, 2)), None, "coreset"))


@pytest.mark.parametrize("kind", ["mean", "nearest", "coreset", "prototype", "codebook"])
def test_build_bank_source_dispatch(kind):
    stack = np.random.default_rng(10).normal(size=(3, 2, 2, 3))
    src = build_bank_source(kind, stack, seed=0, prototype_iters=2, codebook_epochs=2, codebook_size=4)
    bank = src.for_query(seq_from_grid(stack[0]))
    assert bank.kind == kind and bank.dim == 3
    assert (bank.positions is None) == (kind in ("coreset", "codebook"))


def test_build_bank_source_unknown():
    with pytest.raises(BankConfigError):
        build_bank_source("sparse", np.zeros((1, 1, 1, 1)), 0)
