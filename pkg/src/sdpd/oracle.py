"""Independent dense reference implementations for small panels.

Everything here materializes the full ``nT x nT`` stacked operators and works
by plain matrix algebra: no block recursions, no profiled shortcuts. The
dense path exists to cross-check the block-structured implementations on
small problems and for finite-difference validation of analytic derivatives.
"""

from __future__ import annotations

import numpy as np

from .core import (
    BlockIndex,
    InputError,
    PanelData,
    ParamVector,
    alpha_basis,
    within_transform,
)
from .weights import WeightSequence

DENSE_MAX_ROWS = 64

FD_MIN_STEP = 1e-8
FD_MAX_STEP = 1e-4


def _check_step(h: float) -> float:
    h = float(h)
    if not (FD_MIN_STEP <= h <= FD_MAX_STEP):
        raise InputError(
            f"finite-difference step must lie in [{FD_MIN_STEP}, {FD_MAX_STEP}], got {h}"
        )
    return h


def fd_gradient(f, theta: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    h = _check_step(h)
    theta = np.asarray(theta, dtype=float)
    grad = np.empty(theta.size)
    for i in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (f(up) - f(dn)) / (2.0 * h)
    return grad


def fd_hessian(f, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference Hessian of a scalar function of a flat vector."""
    h = _check_step(h)
    theta = np.asarray(theta, dtype=float)
    m = theta.size
    H = np.empty((m, m))
    f0 = f(theta)
    for i in range(m):
        for j in range(i, m):
            if i == j:
                up = theta.copy()
                dn = theta.copy()
                up[i] += 2.0 * h
                dn[i] -= 2.0 * h
                H[i, i] = (f(up) - 2.0 * f0 + f(dn)) / (4.0 * h * h)
            else:
                pp = theta.copy()
                pm = theta.copy()
                mp = theta.copy()
                mm = theta.copy()
                pp[i] += h
                pp[j] += h
                pm[i] += h
                pm[j] -= h
                mp[i] -= h
                mp[j] += h
                mm[i] -= h
                mm[j] -= h
                H[i, j] = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h)
                H[j, i] = H[i, j]
    return H


class DenseModel:
    """Dense stacked-matrix version of the model for small panels."""

    def __init__(self, data: PanelData, seq: WeightSequence):
        if data.L > 2000:
            raise InputError(f"dense model limited to nT <= 2000, got {data.L}")
        if seq.n != data.n or seq.T != data.T:
            raise InputError("panel and weight sequence disagree on (n, T)")
        self.data = data
        self.seq = seq
        n, T, L = data.n, data.T, data.L
        ones_n = np.ones((n, n)) / n
        ones_T = np.ones((T, T)) / T
        J_n = np.eye(n) - ones_n
        J_T = np.eye(T) - ones_T
        self.J = np.kron(J_T, J_n)
        self.mask_unit = np.kron(np.ones((T, T)) / T, J_n)
        self.mask_time = np.kron(np.eye(T), ones_n)

        self.W1 = np.zeros((L, L))
        self.W2 = np.zeros((L, L))
        self.W3 = np.zeros((L, L))
        for t in range(1, T + 1):
            rows = slice((t - 1) * n, t * n)
            self.W1[rows, rows] = seq.W[t]
            if t >= 2:
                prev = slice((t - 2) * n, (t - 1) * n)
                self.W2[rows, prev] = np.eye(n)
                self.W3[rows, prev] = seq.W[t - 1]

        # stacked lag regressors, with the initial-period blocks included
        self.Ylag = self.W2 @ data.Y
        self.Ylag[:n] = data.Y0
        self.WYlag = None
        W0 = seq.W[0] if seq.has_initial else data.W0
        if W0 is not None:
            self.WYlag = self.W3 @ data.Y
            self.WYlag[:n] = W0 @ data.Y0
        self.W0 = W0

    # -- stacked operators -------------------------------------------------

    def S(self, eta) -> np.ndarray:
        lam, gamma, rho = (float(x) for x in eta)
        L = self.data.L
        return np.eye(L) - lam * self.W1 - gamma * self.W2 - rho * self.W3

    def G(self, j: int, eta) -> np.ndarray:
        Wj = (self.W1, self.W2, self.W3)[j - 1]
        return Wj @ np.linalg.inv(self.S(eta))

    def log_det_S(self, eta) -> float:
        sign, logdet = np.linalg.slogdet(self.S(eta))
        if sign <= 0:
            raise InputError("dense S has non-positive determinant")
        return float(logdet)

    def masked_trace(self, kind: str, mask: str, eta=(0.0, 0.0, 0.0)) -> float:
        ops = {
            "W1": self.W1,
            "W2": self.W2,
            "W3": self.W3,
            "G1": lambda: self.G(1, eta),
            "G2": lambda: self.G(2, eta),
            "G3": lambda: self.G(3, eta),
        }
        op = ops[kind]
        if callable(op):
            op = op()
        masks = {"J": self.J, "unit": self.mask_unit, "time": self.mask_time}
        return float(np.trace(op @ masks[mask]))

    # -- residuals and likelihood ------------------------------------------

    def ell0(self, gamma: float, rho: float) -> np.ndarray:
        out = np.zeros(self.data.L)
        out[: self.data.n] = gamma * self.data.Y0
        if rho != 0.0:
            if self.W0 is None:
                raise InputError("initial-period weights W0 required when rho is nonzero")
            out[: self.data.n] += rho * (self.W0 @ self.data.Y0)
        return out

    def residuals(self, theta: ParamVector) -> tuple[np.ndarray, np.ndarray]:
        data = self.data
        E = data.Z - data.K @ theta.phi2_matrix
        u = (
            self.S(theta.eta) @ data.Y
            - data.X1 @ theta.beta
            - E @ theta.delta
            - self.ell0(theta.gamma, theta.rho)
        )
        return u, E

    def loglik(self, theta: ParamVector) -> float:
        data = self.data
        L = data.L
        u, E = self.residuals(theta)
        Ju = self.J @ u
        JE = self.J @ E
        sig2 = float(theta.sigma_xi2)
        Sinv_eps = np.linalg.inv(theta.Sigma_eps)
        sign, logdet_sigma = np.linalg.slogdet(theta.Sigma_eps)
        return float(
            -0.5 * L * np.log(2.0 * np.pi)
            + self.log_det_S(theta.eta)
            - 0.5 * L * np.log(sig2)
            - 0.5 * L * logdet_sigma
            - 0.5 * np.trace(Sinv_eps @ E.T @ JE)
            - 0.5 * (u @ Ju) / sig2
        )

    def loglik_flat(self, flat: np.ndarray) -> float:
        return self.loglik(ParamVector.unpack(flat, self.data.dims))

    # -- analytic derivatives (dense path) ----------------------------------

    def score(self, theta: ParamVector) -> np.ndarray:
        data = self.data
        dims = data.dims
        idx = BlockIndex(dims)
        L = data.L
        sig2 = float(theta.sigma_xi2)
        Sinv = np.linalg.inv(theta.Sigma_eps)
        u, E = self.residuals(theta)
        Ju = self.J @ u
        JE = self.J @ E
        W1Y = self.W1 @ data.Y
        grad = np.zeros(dims.n_params)
        grad[idx.lam] = (W1Y @ Ju) / sig2 - np.trace(self.G(1, theta.eta))
        grad[idx.gamma] = (self.Ylag @ Ju) / sig2
        if self.WYlag is None:
            raise InputError("initial-period weights W0 required for the dense score")
        grad[idx.rho] = (self.WYlag @ Ju) / sig2
        grad[idx.beta] = (data.X1.T @ Ju) / sig2
        grad[idx.delta] = (E.T @ Ju) / sig2
        grad[idx.phi2] = (
            (data.K.T @ JE @ Sinv).ravel(order="F")
            - np.kron(theta.delta, data.K.T @ Ju) / sig2
        )
        grad[idx.sigma] = -0.5 * L / sig2 + 0.5 * (u @ Ju) / sig2**2
        M = Sinv @ (E.T @ JE) @ Sinv
        for k, B in enumerate(alpha_basis(dims.p)):
            grad[idx.alpha[k]] = -0.5 * L * np.trace(Sinv @ B) + 0.5 * np.trace(B @ M)
        return grad / L

    def bias_a1(self, theta: ParamVector) -> np.ndarray:
        data = self.data
        dims = data.dims
        idx = BlockIndex(dims)
        n, T = dims.n, dims.T
        Sinv = np.linalg.inv(theta.Sigma_eps)
        a = np.zeros(dims.n_params)
        for row, j in ((idx.lam, 1), (idx.gamma, 2), (idx.rho, 3)):
            a[row] = -np.trace(self.G(j, theta.eta) @ self.mask_unit) / (n - 1)
        ksum = sum(
            (T - 1 - j) * np.linalg.matrix_power(theta.kappa.T, j) for j in range(T - 1)
        )
        block = np.zeros((dims.p + dims.k2, dims.p))
        block[: dims.p] = -np.asarray(ksum, dtype=float) @ Sinv / T
        a[idx.phi2] = block.ravel(order="F")
        a[idx.sigma] = -0.5 / float(theta.sigma_xi2)
        for k, B in enumerate(alpha_basis(dims.p)):
            a[idx.alpha[k]] = -0.5 * np.trace(Sinv @ B)
        return a

    def bias_a2(self, theta: ParamVector) -> np.ndarray:
        dims = self.data.dims
        idx = BlockIndex(dims)
        Sinv = np.linalg.inv(theta.Sigma_eps)
        a = np.zeros(dims.n_params)
        a[idx.lam] = -np.trace(self.G(1, theta.eta) @ self.mask_time) / dims.T
        a[idx.sigma] = -0.5 / float(theta.sigma_xi2)
        for k, B in enumerate(alpha_basis(dims.p)):
            a[idx.alpha[k]] = -0.5 * np.trace(Sinv @ B)
        return a

    def information(self, theta: ParamVector) -> np.ndarray:
        data = self.data
        dims = data.dims
        idx = BlockIndex(dims)
        n, T, L = data.n, data.T, data.L
        sig2 = float(theta.sigma_xi2)
        Sinv = np.linalg.inv(theta.Sigma_eps)
        _, E = self.residuals(theta)
        JE = self.J @ E
        W1Y = self.W1 @ data.Y
        JW1Y = self.J @ W1Y
        R = np.column_stack([self.Ylag, self.WYlag, data.X1])
        JR = self.J @ R
        K = data.K
        JK = self.J @ K
        G1 = self.G(1, theta.eta)

        m = dims.n_params
        Jm = np.zeros((m, m))
        phi1 = np.concatenate([idx.gamma, idx.rho, idx.beta])
        Jm[idx.lam, idx.lam] = W1Y @ JW1Y + sig2 * np.trace(G1 @ G1)
        Jm[np.ix_(phi1, idx.lam)] = (R.T @ JW1Y)[:, None]
        Jm[np.ix_(phi1, phi1)] = R.T @ JR
        Jm[np.ix_(idx.delta, idx.lam)] = (E.T @ JW1Y)[:, None]
        Jm[np.ix_(idx.delta, idx.delta)] = E.T @ JE
        Jm[np.ix_(idx.phi2, idx.lam)] = -np.kron(theta.delta, K.T @ JW1Y)[:, None]
        Jm[np.ix_(idx.phi2, phi1)] = -np.kron(theta.delta[:, None], K.T @ JR)
        Jm[np.ix_(idx.phi2, idx.phi2)] = np.kron(
            sig2 * Sinv + np.outer(theta.delta, theta.delta), K.T @ JK
        )
        Jm[idx.sigma, idx.lam] = np.trace(G1)
        Jm[idx.sigma, idx.sigma] = (0.5 * L - n - T + 1) / sig2
        basis = alpha_basis(dims.p)
        for a in range(len(basis)):
            for b in range(len(basis)):
                Jm[idx.alpha[a], idx.alpha[b]] = (
                    0.5 * L * sig2 * np.trace(Sinv @ basis[a] @ Sinv @ basis[b])
                )
        Jm = np.tril(Jm) + np.tril(Jm, -1).T
        return Jm / (L * sig2)


def dense_check(data: PanelData, seq: WeightSequence, theta: ParamVector) -> dict:
    """Max-abs deviations between block-structured and dense computations.

    Only for small panels (nT <= 64). Returns a dict keyed by quantity.
    """
    from . import likelihood as lk
    from .weights import BlockOperator, log_det_S, solve_s

    if data.L > DENSE_MAX_ROWS:
        raise InputError(f"dense check limited to nT <= {DENSE_MAX_ROWS}, got nT = {data.L}")
    dense = DenseModel(data, seq)
    out: dict[str, float] = {}

    probe = np.cos(np.arange(data.L, dtype=float))
    out["within"] = float(
        np.abs(dense.J @ probe - within_transform(probe, data.n, data.T)).max()
    )
    out["log_det"] = abs(dense.log_det_S(theta.eta) - log_det_S(theta.eta, seq))
    out["solve"] = float(
        np.abs(np.linalg.solve(dense.S(theta.eta), probe) - solve_s(seq, theta.eta, probe)).max()
    )
    out["loglik"] = abs(dense.loglik(theta) - lk.concentrated_loglik(theta, data, seq))
    out["score"] = float(np.abs(dense.score(theta) - lk.score(theta, data, seq)).max())

    dev = 0.0
    for kind in ("W1", "W2", "W3", "G1", "G2", "G3"):
        for mask in ("J", "unit", "time"):
            block_val = lk.masked_trace(BlockOperator(kind, seq, tuple(theta.eta)), mask)
            dev = max(dev, abs(block_val - dense.masked_trace(kind, mask, theta.eta)))
    out["masked_traces"] = dev

    dims = data.dims
    out["bias_a1"] = float(np.abs(dense.bias_a1(theta) - lk.bias_a1(theta, seq, dims)).max())
    out["bias_a2"] = float(np.abs(dense.bias_a2(theta) - lk.bias_a2(theta, seq, dims)).max())
    out["information"] = float(
        np.abs(dense.information(theta) - lk.information_at_restricted(theta, data, seq)).max()
    )
    return out
