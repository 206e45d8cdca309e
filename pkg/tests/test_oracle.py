"""Finite-difference and dense-matrix reference implementations."""

import numpy as np
import pytest

from sdpd.core import InputError, PanelData, ParamVector
from sdpd.likelihood import concentrated_loglik
from sdpd.oracle import (
    DENSE_MAX_ROWS,
    DenseModel,
    dense_check,
    fd_gradient,
    fd_hessian,
)
from sdpd.weights import WeightSequence, build_weight_sequence

from conftest import make_panel


def quadratic_case(seed=0, m=5):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, m))
    A = A + A.T
    b = rng.standard_normal(m)
    x = rng.standard_normal(m)

    def f(v):
        return 0.5 * v @ A @ v + b @ v

    return f, A, b, x


def test_fd_gradient_exact_on_quadratic():
    f, A, b, x = quadratic_case(seed=1)
    np.testing.assert_allclose(fd_gradient(f, x), A @ x + b, atol=1e-8)


def test_fd_hessian_exact_on_quadratic():
    f, A, b, x = quadratic_case(seed=2)
    H = fd_hessian(f, x)
    np.testing.assert_array_equal(H, H.T)
    np.testing.assert_allclose(H, A, atol=1e-5)


@pytest.mark.parametrize("h", [0.0, -1e-6, 1e-9, 1e-3])
def test_fd_step_bounds(h):
    f, A, b, x = quadratic_case(seed=3)
    with pytest.raises(InputError):
        fd_gradient(f, x, h=h)
    with pytest.raises(InputError):
        fd_hessian(f, x, h=h)


def test_fd_hessian_step_robust_on_loglik():
    data, seq = make_panel(9, 4, "rook", seed=11, lambda0=0.2, gamma0=0.15, rho0=0.1, delta0=0.3)
    rng = np.random.default_rng(4)
    theta = ParamVector(
        lam=0.15,
        gamma=0.1,
        rho=0.05,
        beta=rng.standard_normal(1),
        delta=np.array([0.2]),
        kappa=np.array([[0.3]]),
        Gamma=np.array([[0.5]]),
        sigma_xi2=1.2,
        Sigma_eps=np.array([[0.9]]),
    )
    flat = theta.pack()

    def f(v):
        return concentrated_loglik(ParamVector.unpack(v, data.dims), data, seq)

    coarse = fd_hessian(f, flat, h=1e-4)
    fine = fd_hessian(f, flat, h=1e-5)
    # entrywise ratios are meaningless for true-zero entries (pure rounding
    # noise), so stability is judged at the matrix level
    assert np.linalg.norm(coarse - fine) / np.linalg.norm(fine) < 1e-3


def test_dense_model_size_cap():
    data, seq = make_panel(25, 3, "queen", seed=1)
    assert data.L > DENSE_MAX_ROWS
    with pytest.raises(InputError):
        dense_check(data, seq, None)


def test_dense_check_seeded_instance():
    data, seq = make_panel(9, 4, "rook", seed=7, lambda0=0.2, gamma0=0.15, rho0=0.1, delta0=0.3)
    rng = np.random.default_rng(5)
    theta = ParamVector(
        lam=0.2,
        gamma=0.1,
        rho=-0.05,
        beta=rng.standard_normal(1),
        delta=np.array([0.25]),
        kappa=np.array([[0.2]]),
        Gamma=np.array([[0.4]]),
        sigma_xi2=0.8,
        Sigma_eps=np.array([[1.1]]),
    )
    report = dense_check(data, seq, theta)
    assert set(report) >= {
        "within",
        "log_det",
        "solve",
        "loglik",
        "score",
        "masked_traces",
        "bias_a1",
        "bias_a2",
        "information",
    }
    for key, dev in report.items():
        assert dev < 1e-10, f"{key} deviates by {dev}"


def test_dense_model_closed_form_traces_at_null():
    rng = np.random.default_rng(6)
    n, T = 4, 3
    Z = rng.standard_normal((T + 1, n, 1))
    seq = build_weight_sequence(Z, Wd=np.ones((n, n)) - np.eye(n))
    data = PanelData(
        n=n,
        T=T,
        Y=rng.standard_normal(n * T),
        X1=rng.standard_normal((n * T, 1)),
        Z=Z[1:].reshape(n * T, 1),
        X2=rng.standard_normal((n * T, 1)),
        Y0=rng.standard_normal(n),
        Z0=Z[0],
        W0=seq.W[0],
    )
    dense = DenseModel(data, seq)
    eta0 = (0.0, 0.0, 0.0)
    # at eta=0 each G reduces to its W block
    for j, W in ((1, dense.W1), (2, dense.W2), (3, dense.W3)):
        np.testing.assert_allclose(dense.G(j, eta0), W, atol=1e-14)
    unit = np.kron(np.ones((T, T)) / T, np.eye(n) - np.ones((n, n)) / n)
    np.testing.assert_allclose(
        np.trace(dense.W2 @ unit), (T - 1) * (n - 1) / T, atol=1e-12
    )


def test_dense_model_zero_data():
    n, T = 2, 2
    SWAP2 = np.array([[0.0, 1.0], [1.0, 0.0]])
    seq = WeightSequence(n=n, T=T, W=(SWAP2, SWAP2, SWAP2))
    zeros = PanelData(
        n=n,
        T=T,
        Y=np.zeros(4),
        X1=np.zeros((4, 1)),
        Z=np.zeros((4, 1)),
        X2=np.zeros((4, 1)),
        Y0=np.zeros(n),
        Z0=np.zeros((n, 1)),
        W0=SWAP2,
    )
    theta = ParamVector(
        lam=0.0,
        gamma=0.0,
        rho=0.0,
        beta=np.zeros(1),
        delta=np.zeros(1),
        kappa=np.zeros((1, 1)),
        Gamma=np.zeros((1, 1)),
        sigma_xi2=1.0,
        Sigma_eps=np.eye(1),
    )
    dense = DenseModel(zeros, seq)
    xi, eps = dense.residuals(theta)
    np.testing.assert_array_equal(xi, np.zeros(4))
    np.testing.assert_array_equal(eps, np.zeros((4, 1)))
    np.testing.assert_allclose(dense.loglik(theta), -2.0 * np.log(2.0 * np.pi), atol=1e-12)
    np.testing.assert_allclose(dense.log_det_S((0.0, 0.0, 0.0)), 0.0, atol=1e-14)
