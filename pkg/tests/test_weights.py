"""Weight construction, stacked-operator algebra, and log-determinants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdpd.core import InputError
from sdpd.weights import (
    BlockOperator,
    WeightSequence,
    apply_block,
    apply_s,
    apply_w1,
    apply_w2,
    apply_w3,
    build_weight_sequence,
    compose_weights,
    economic_kernel,
    eigenvalue_cache,
    grid_contiguity,
    log_det_S,
    log_det_S_from_eigs,
    row_normalize,
    solve_s,
    spectral_guard,
)

SWAP2 = np.array([[0.0, 1.0], [1.0, 0.0]])


def dense_w(seq: WeightSequence, kind: str) -> np.ndarray:
    """Dense stacked operator built independently from the per-period blocks."""
    n, T, L = seq.n, seq.T, seq.n * seq.T
    M = np.zeros((L, L))
    if kind == "W1":
        for t in range(T):
            M[t * n : (t + 1) * n, t * n : (t + 1) * n] = seq.W[t + 1]
    elif kind == "W2":
        for t in range(1, T):
            M[t * n : (t + 1) * n, (t - 1) * n : t * n] = np.eye(n)
    elif kind == "W3":
        for t in range(1, T):
            M[t * n : (t + 1) * n, (t - 1) * n : t * n] = seq.W[t]
    else:
        raise ValueError(kind)
    return M


def dense_s(seq: WeightSequence, eta) -> np.ndarray:
    lam, gamma, rho = eta
    L = seq.n * seq.T
    return (
        np.eye(L)
        - lam * dense_w(seq, "W1")
        - gamma * dense_w(seq, "W2")
        - rho * dense_w(seq, "W3")
    )


def random_sequence(n=4, T=3, seed=0) -> WeightSequence:
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((T + 1, n, 1))
    return build_weight_sequence(Z, Wd=np.ones((n, n)) - np.eye(n))


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def test_grid_degrees_rook_and_queen():
    rook = grid_contiguity(9, "rook")
    queen = grid_contiguity(9, "queen")
    assert sorted(rook.sum(axis=1)) == [2, 2, 2, 2, 3, 3, 3, 3, 4]
    assert sorted(queen.sum(axis=1)) == [3, 3, 3, 3, 5, 5, 5, 5, 8]
    np.testing.assert_array_equal(rook, rook.T)
    np.testing.assert_array_equal(np.diag(queen), np.zeros(9))


def test_grid_rejects_non_square_and_bad_scheme():
    with pytest.raises(InputError):
        grid_contiguity(10, "queen")
    with pytest.raises(InputError):
        grid_contiguity(9, "hexagon")


def test_economic_kernel_scalar_drivers():
    W = economic_kernel(np.array([1.0, 2.0, 4.0]))
    np.testing.assert_allclose(W[0, 1], 1.0)
    np.testing.assert_allclose(W[0, 2], 1.0 / 3.0)
    np.testing.assert_allclose(W[1, 2], 0.5)
    np.testing.assert_array_equal(W, W.T)
    np.testing.assert_array_equal(np.diag(W), np.zeros(3))


def test_economic_kernel_two_column_drivers():
    z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    W = economic_kernel(z)
    np.testing.assert_allclose(W[0, 1], 1.0 / np.sqrt(2.0))
    np.testing.assert_allclose(W[0, 2], 1.0)
    np.testing.assert_allclose(W[1, 2], 1.0)


def test_economic_kernel_coincident_drivers():
    with pytest.raises(InputError):
        economic_kernel(np.array([1.0, 1.0, 2.0]))


def test_row_normalize():
    W = row_normalize(np.array([[0.0, 2.0, 2.0], [1.0, 0.0, 3.0], [0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(W.sum(axis=1), [1.0, 1.0, 0.0])
    with pytest.raises(InputError):
        row_normalize(np.array([[0.0, -1.0], [1.0, 0.0]]))


def test_compose_respects_contiguity_zeros():
    Wd = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    We = economic_kernel(np.array([1.0, 2.0, 4.0]))
    W = compose_weights(Wd, We)
    assert W[0, 2] == 0.0 and W[2, 0] == 0.0
    np.testing.assert_allclose(W.sum(axis=1), np.ones(3))


def test_build_weight_sequence_shapes_and_stochastic_rows():
    seq = random_sequence(n=5, T=4, seed=2)
    assert seq.T == 4 and seq.n == 5 and len(seq.W) == 5
    assert seq.has_initial
    for t in range(0, 5):
        np.testing.assert_allclose(seq.W[t].sum(axis=1), np.ones(5), atol=1e-12)
        np.testing.assert_array_equal(np.diag(seq.W[t]), np.zeros(5))


def test_weight_sequence_validation():
    with pytest.raises(InputError):
        WeightSequence(n=2, T=1, W=(None, np.eye(2)))  # nonzero diagonal
    with pytest.raises(InputError):
        WeightSequence(n=2, T=1, W=(None, -SWAP2))  # negative entries
    with pytest.raises(InputError):
        WeightSequence(n=2, T=2, W=(None, SWAP2))  # missing a period
    with pytest.raises(InputError):
        WeightSequence(n=2, T=2, W=(None, None, SWAP2))  # None after period 0
    seq = WeightSequence(n=2, T=1, W=(None, SWAP2))
    assert not seq.has_initial


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    n, T = 5, 3
    Z = rng.standard_normal((T + 1, n, 1))
    Wd = np.ones((n, n)) - np.eye(n)
    perm = rng.permutation(n)
    seq = build_weight_sequence(Z, Wd=Wd)
    seq_p = build_weight_sequence(Z[:, perm, :], Wd=Wd[np.ix_(perm, perm)])
    for t in range(T + 1):
        np.testing.assert_allclose(
            seq_p.W[t], seq.W[t][np.ix_(perm, perm)], atol=1e-12
        )


# ---------------------------------------------------------------------------
# Stacked operators
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kind,apply", [("W1", apply_w1), ("W2", apply_w2), ("W3", apply_w3)])
def test_apply_matches_dense(kind, apply):
    seq = random_sequence(n=4, T=3, seed=5)
    rng = np.random.default_rng(9)
    v = rng.standard_normal(12)
    V = rng.standard_normal((12, 2))
    M = dense_w(seq, kind)
    np.testing.assert_allclose(apply(seq, v), M @ v, atol=1e-12)
    np.testing.assert_allclose(apply(seq, V), M @ V, atol=1e-12)


def test_apply_s_and_solve_s_are_inverse():
    seq = random_sequence(n=4, T=4, seed=1)
    eta = (0.3, 0.2, -0.1)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(16)
    np.testing.assert_allclose(apply_s(seq, eta, solve_s(seq, eta, v)), v, atol=1e-10)
    np.testing.assert_allclose(
        solve_s(seq, eta, v), np.linalg.solve(dense_s(seq, eta), v), atol=1e-10
    )


def test_block_operator_g_kinds():
    seq = random_sequence(n=3, T=3, seed=4)
    eta = (0.25, 0.1, 0.05)
    rng = np.random.default_rng(2)
    v = rng.standard_normal(9)
    Sinv = np.linalg.inv(dense_s(seq, eta))
    for j, kind in enumerate(("G1", "G2", "G3"), start=1):
        op = BlockOperator(kind, seq, eta)
        dense = dense_w(seq, f"W{j}") @ Sinv
        np.testing.assert_allclose(apply_block(op, v), dense @ v, atol=1e-10)
    with pytest.raises(InputError):
        BlockOperator("Q1", seq)


# ---------------------------------------------------------------------------
# Determinants and the stability region
# ---------------------------------------------------------------------------


def test_log_det_swap_example():
    # each period contributes ln det(I - 0.5 * swap) = ln(0.75)
    seq = WeightSequence(n=2, T=2, W=(SWAP2, SWAP2, SWAP2))
    np.testing.assert_allclose(
        log_det_S((0.5, 0.0, 0.0), seq), 2.0 * np.log(0.75), atol=1e-14
    )


def test_log_det_matches_dense_and_ignores_lags():
    seq = random_sequence(n=4, T=3, seed=8)
    for eta in ((0.4, 0.0, 0.0), (0.4, 0.3, -0.2), (-0.6, 0.1, 0.2)):
        sign, logdet = np.linalg.slogdet(dense_s(seq, eta))
        assert sign > 0
        np.testing.assert_allclose(log_det_S(eta, seq), logdet, atol=1e-10)
    # block lower-triangular structure: gamma and rho cannot move it
    np.testing.assert_allclose(
        log_det_S((0.4, 0.9, 0.9), seq), log_det_S((0.4, 0.0, 0.0), seq), atol=1e-12
    )


def test_log_det_from_cached_eigenvalues():
    seq = random_sequence(n=5, T=4, seed=3)
    eigs = eigenvalue_cache(seq)
    for lam in (-0.7, -0.2, 0.0, 0.3, 0.8):
        np.testing.assert_allclose(
            log_det_S_from_eigs(lam, eigs), log_det_S((lam, 0.0, 0.0), seq), atol=1e-10
        )


def test_spectral_guard():
    seq = random_sequence(n=4, T=3, seed=6)  # row-stochastic: max row sum 1
    assert spectral_guard((0.0, 0.0, 0.0), seq)
    assert spectral_guard((0.3, 0.3, 0.3), seq)
    assert not spectral_guard((0.9, 0.2, 0.0), seq)
    assert not spectral_guard((0.0, 1.1, 0.0), seq)
