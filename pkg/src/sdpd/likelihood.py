"""Profiled log-likelihood, analytic score, bias terms, and information matrix.

Fixed effects are profiled out, so every data moment passes through the
two-way within projection ``J = J_T (x) J_n``; block structure keeps all
operator traces at per-period cost. The score is normalized by ``1/(nT)``
throughout, matching the scaling of the bias vectors and information matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .core import (
    BlockIndex,
    Dims,
    EstimationError,
    InputError,
    PanelData,
    ParamVector,
    alpha_basis,
    within_transform,
)
from .weights import BlockOperator, WeightSequence, apply_w1, log_det_S

SIGMA_FLOOR = 1e-12

MASKS = ("J", "unit", "time")


def _check_sigma(theta: ParamVector) -> tuple[float, np.ndarray]:
    """Validate and return (sigma_xi2, Sigma_eps inverse)."""
    sig2 = float(theta.sigma_xi2)
    if not np.isfinite(sig2) or sig2 <= SIGMA_FLOOR:
        raise EstimationError(f"degenerate idiosyncratic variance sigma_xi2={sig2!r}")
    Sigma = theta.Sigma_eps
    try:
        np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("driver covariance Sigma_eps is not positive definite") from exc
    return sig2, np.linalg.inv(Sigma)


def residual_eps(phi2: np.ndarray, data: PanelData) -> np.ndarray:
    """Driver-equation residuals Z - K @ Phi2, shape (L, p)."""
    phi2 = np.asarray(phi2, dtype=float)
    K = data.K
    if phi2.shape != (K.shape[1], data.p):
        raise InputError(
            f"Phi2 must have shape ({K.shape[1]}, {data.p}), got {phi2.shape}"
        )
    return data.Z - K @ phi2


def lagged_terms(data: PanelData, seq: WeightSequence | None, need_w0: bool) -> tuple[np.ndarray, np.ndarray | None]:
    """Stacked (Y_lag, W_lag @ Y_lag); the second is None when W0 is missing
    and not required."""
    Ylag = data.Y_lag
    W0 = None
    if seq is not None and seq.has_initial:
        W0 = seq.W[0]
    elif data.W0 is not None:
        W0 = data.W0
    if W0 is None:
        if need_w0:
            raise InputError(
                "initial-period weights W0 are required (spatial time lag in use) but missing"
            )
        return Ylag, None
    if seq is None:
        raise InputError("a weight sequence is required to build the spatial time lag")
    n, T = data.n, data.T
    WYlag = np.empty(data.L)
    WYlag[:n] = W0 @ data.Y0
    for t in range(2, T + 1):
        WYlag[(t - 1) * n : t * n] = seq.W[t - 1] @ data.Y[(t - 2) * n : (t - 1) * n]
    return Ylag, WYlag


def residual_xi(theta: ParamVector, data: PanelData, seq: WeightSequence) -> np.ndarray:
    """Outcome-equation residuals at theta.

    ``u = S(eta) Y - X1 beta - (Z - K Phi2) delta - ell0(gamma, rho)``, which
    equals ``Y - lam*W1 Y - gamma*Y_lag - rho*W_lag Y_lag - X1 beta - E delta``
    with the initial-period blocks folded into the lags.
    """
    u = data.Y.copy()
    if theta.lam != 0.0:
        u -= theta.lam * apply_w1(seq, data.Y)
    Ylag, WYlag = lagged_terms(data, seq, need_w0=theta.rho != 0.0)
    if theta.gamma != 0.0:
        u -= theta.gamma * Ylag
    if theta.rho != 0.0:
        u -= theta.rho * WYlag
    u -= data.X1 @ theta.beta
    if np.any(theta.delta != 0.0):
        u -= residual_eps(theta.phi2_matrix, data) @ theta.delta
    return u


def concentrated_loglik(theta: ParamVector, data: PanelData, seq: WeightSequence) -> float:
    """Log-likelihood with fixed effects profiled out (two-way projection)."""
    sig2, Sinv = _check_sigma(theta)
    L = data.L
    n, T = data.n, data.T
    E = residual_eps(theta.phi2_matrix, data)
    JE = within_transform(E, n, T)
    u = residual_xi(theta, data, seq)
    Ju = within_transform(u, n, T)
    sign, logdet_sigma = np.linalg.slogdet(theta.Sigma_eps)
    if sign <= 0:
        raise EstimationError("driver covariance Sigma_eps is not positive definite")
    value = (
        -0.5 * L * np.log(2.0 * np.pi)
        + log_det_S(theta.eta, seq)
        - 0.5 * L * np.log(sig2)
        - 0.5 * L * logdet_sigma
        - 0.5 * float(np.trace(Sinv @ (E.T @ JE)))
        - 0.5 * float(u @ Ju) / sig2
    )
    return float(value)


# ---------------------------------------------------------------------------
# Block-structured traces
# ---------------------------------------------------------------------------


def _trace_jn(M: np.ndarray) -> float:
    """tr(M J_n) = tr(M) - (mean of all entries of M) * n."""
    return float(np.trace(M) - M.sum() / M.shape[0])


def _w_masked(seq: WeightSequence, kind: str, mask: str) -> float:
    """Masked traces of W1/W2/W3 (no inverse involved)."""
    n, T = seq.n, seq.T
    if mask == "unit":
        if kind == "W1":
            return sum(_trace_jn(seq.W[t]) for t in range(1, T + 1)) / T
        if kind == "W2":
            return (T - 1) * (n - 1) / T
        return sum(_trace_jn(seq.W[t - 1]) for t in range(2, T + 1)) / T
    if mask == "time":
        if kind == "W1":
            return sum(float(seq.W[t].sum()) / n for t in range(1, T + 1))
        return 0.0
    # mask == "J": tr(M J_L) = tr(M) - tr(M unit-mask) - tr(M time-mask),
    # and tr(W_j) = 0 for all three operators (zero diagonals / strict shifts)
    return -_w_masked(seq, kind, "unit") - _w_masked(seq, kind, "time")


def _period_factors(seq: WeightSequence, lam: float) -> list:
    eye = np.eye(seq.n)
    factors = []
    for t in range(1, seq.T + 1):
        try:
            factors.append(lu_factor(eye - lam * seq.W[t]))
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EstimationError(f"singular period-{t} system at lambda={lam}") from exc
    return factors


def g1_diag_traces(lam: float, seq: WeightSequence) -> tuple[float, float]:
    """(tr G1, tr G1^2) for G1 = W1 S^{-1}; both depend on lambda only.

    G1 is block lower-triangular with diagonal blocks W_t (I - lam W_t)^{-1},
    so both traces reduce to per-period quantities.
    """
    if lam == 0.0:
        tr2 = 0.0
        for t in range(1, seq.T + 1):
            W = seq.W[t]
            tr2 += float((W * W.T).sum())
        return 0.0, tr2
    factors = _period_factors(seq, lam)
    tr1 = 0.0
    tr2 = 0.0
    for t in range(1, seq.T + 1):
        F = lu_solve(factors[t - 1], seq.W[t])  # (I - lam W)^{-1} W = W (I - lam W)^{-1}
        tr1 += float(np.trace(F))
        tr2 += float((F * F.T).sum())
    return tr1, tr2


@dataclass(frozen=True)
class GTraces:
    """Masked traces of the G_j = W_j S(eta)^{-1} operators."""

    tr_g1: float
    tr_g1_sq: float
    unit: tuple  # (tr G1 M_unit, tr G2 M_unit, tr G3 M_unit)
    time: tuple  # (tr G1 M_time, tr G2 M_time, tr G3 M_time)

    def masked(self, j: int, mask: str) -> float:
        if mask == "unit":
            return self.unit[j - 1]
        if mask == "time":
            return self.time[j - 1]
        trace_full = self.tr_g1 if j == 1 else 0.0
        return trace_full - self.unit[j - 1] - self.time[j - 1]


def g_traces(eta, seq: WeightSequence) -> GTraces:
    """All masked traces of G1, G2, G3 at the given eta.

    At eta = 0 the operators reduce to W1, W2, W3 and everything is closed
    form; otherwise the inverse's block columns are built by forward
    recursion, one period at a time.
    """
    lam, gamma, rho = (float(x) for x in eta)
    n, T = seq.n, seq.T
    if lam == 0.0 and gamma == 0.0 and rho == 0.0:
        _, tr2 = g1_diag_traces(0.0, seq)
        return GTraces(
            tr_g1=0.0,
            tr_g1_sq=tr2,
            unit=tuple(_w_masked(seq, k, "unit") for k in ("W1", "W2", "W3")),
            time=tuple(_w_masked(seq, k, "time") for k in ("W1", "W2", "W3")),
        )
    factors = _period_factors(seq, lam)
    eye = np.eye(n)
    A = [lu_solve(factors[t - 1], eye) for t in range(1, T + 1)]  # A[t-1] = (I - lam W_t)^{-1}
    tr1 = 0.0
    tr2 = 0.0
    g1_time = 0.0
    unit = [0.0, 0.0, 0.0]
    for s in range(1, T + 1):
        R = A[s - 1]  # block (t, s) of S^{-1}, starting at t = s
        for t in range(s, T + 1):
            if t > s:
                # S^{-1}(t, s) = A_t (gamma I + rho W_{t-1}) S^{-1}(t-1, s)
                R = lu_solve(factors[t - 1], gamma * R + rho * P)
            P = seq.W[t] @ R  # G1 block (t, s); also G3 block (t+1, s)
            unit[0] += _trace_jn(P) / T
            if t < T:
                unit[1] += _trace_jn(R) / T  # G2 block (t+1, s) = S^{-1}(t, s)
                unit[2] += _trace_jn(P) / T
            if t == s:
                tr1 += float(np.trace(P))
                tr2 += float((P * P.T).sum())
                g1_time += float(P.sum()) / n
    return GTraces(tr_g1=tr1, tr_g1_sq=tr2, unit=tuple(unit), time=(g1_time, 0.0, 0.0))


def masked_trace(op: BlockOperator, mask: str) -> float:
    """Trace of a block operator against one of the projection masks.

    Masks: ``"J"`` is the two-way within projection ``J_T (x) J_n``;
    ``"unit"`` is ``(1/T) 1_T 1_T' (x) J_n`` (what unit effects leave behind);
    ``"time"`` is ``I_T (x) (1/n) 1_n 1_n'`` (what period effects leave
    behind). The three satisfy ``I = J + unit + time`` as projections, which
    the ``"J"`` branch uses.
    """
    if mask not in MASKS:
        raise InputError(f"unknown mask {mask!r}; expected one of {MASKS}")
    kind = op.kind
    if kind in ("W1", "W2", "W3"):
        return _w_masked(op.seq, kind, mask)
    if kind in ("G1", "G2", "G3"):
        traces = g_traces(op.eta, op.seq)
        return traces.masked(int(kind[1]), mask)
    raise InputError(f"masked_trace does not support operator kind {kind!r}")


# ---------------------------------------------------------------------------
# Score
# ---------------------------------------------------------------------------


def _phi2_score(K: np.ndarray, JE: np.ndarray, Ju: np.ndarray, Sinv: np.ndarray, delta: np.ndarray, sig2: float) -> np.ndarray:
    first = K.T @ JE @ Sinv
    second = np.kron(delta, K.T @ Ju) / sig2
    return first.ravel(order="F") - second


def score(theta: ParamVector, data: PanelData, seq: WeightSequence) -> np.ndarray:
    """Analytic gradient of the profiled log-likelihood, divided by nT."""
    sig2, Sinv = _check_sigma(theta)
    n, T = data.n, data.T
    L = data.L
    dims = data.dims
    idx = BlockIndex(dims)

    E = residual_eps(theta.phi2_matrix, data)
    JE = within_transform(E, n, T)
    u = residual_xi(theta, data, seq)
    Ju = within_transform(u, n, T)
    W1Y = apply_w1(seq, data.Y)
    Ylag, WYlag = lagged_terms(data, seq, need_w0=True)

    tr_g1, _ = g1_diag_traces(theta.lam, seq)

    grad = np.zeros(dims.n_params)
    grad[idx.lam] = float(W1Y @ Ju) / sig2 - tr_g1
    grad[idx.gamma] = float(Ylag @ Ju) / sig2
    grad[idx.rho] = float(WYlag @ Ju) / sig2
    grad[idx.beta] = (data.X1.T @ Ju) / sig2
    grad[idx.delta] = (E.T @ Ju) / sig2
    grad[idx.phi2] = _phi2_score(data.K, JE, Ju, Sinv, theta.delta, sig2)
    grad[idx.sigma] = -0.5 * L / sig2 + 0.5 * float(u @ Ju) / sig2**2

    M = Sinv @ (E.T @ JE) @ Sinv
    basis = alpha_basis(dims.p)
    alpha_grad = np.empty(dims.n_alpha)
    for k, B in enumerate(basis):
        alpha_grad[k] = -0.5 * L * float((Sinv * B).sum()) + 0.5 * float((B * M).sum())
    grad[idx.alpha] = alpha_grad
    return grad / L


# ---------------------------------------------------------------------------
# Bias vectors
# ---------------------------------------------------------------------------


def kappa_weighted_powersum(kappa: np.ndarray, T: int) -> np.ndarray:
    """sum_{j=0}^{T-2} (T-1-j) (kappa')^j, with early exit for tiny terms."""
    p = kappa.shape[0]
    total = np.zeros((p, p))
    term = np.eye(p)
    kt = kappa.T
    for j in range(T - 1):
        total += (T - 1 - j) * term
        if j < T - 2:
            term = term @ kt
            if np.abs(term).max() * (T - 1 - j) < 1e-14:
                break
    return total


def bias_a1(theta: ParamVector, seq: WeightSequence, dims: Dims) -> np.ndarray:
    """Bias vector from profiled unit effects (one of two score-bias terms)."""
    sig2, Sinv = _check_sigma(theta)
    idx = BlockIndex(dims)
    n, T = dims.n, dims.T
    traces = g_traces(theta.eta, seq)
    a = np.zeros(dims.n_params)
    a[idx.lam] = -traces.unit[0] / (n - 1)
    a[idx.gamma] = -traces.unit[1] / (n - 1)
    a[idx.rho] = -traces.unit[2] / (n - 1)
    phi2_block = np.zeros((dims.p + dims.k2, dims.p))
    phi2_block[: dims.p, :] = -kappa_weighted_powersum(theta.kappa, T) @ Sinv / T
    a[idx.phi2] = phi2_block.ravel(order="F")
    a[idx.sigma] = -0.5 / sig2
    basis = alpha_basis(dims.p)
    a[idx.alpha] = [-0.5 * float((Sinv * B).sum()) for B in basis]
    return a


def bias_a2(theta: ParamVector, seq: WeightSequence, dims: Dims) -> np.ndarray:
    """Bias vector from profiled period effects (the other score-bias term)."""
    sig2, Sinv = _check_sigma(theta)
    idx = BlockIndex(dims)
    traces = g_traces(theta.eta, seq)
    a = np.zeros(dims.n_params)
    a[idx.lam] = -traces.time[0] / dims.T
    a[idx.sigma] = -0.5 / sig2
    basis = alpha_basis(dims.p)
    a[idx.alpha] = [-0.5 * float((Sinv * B).sum()) for B in basis]
    return a


def score_correction(theta: ParamVector, seq: WeightSequence, dims: Dims) -> np.ndarray:
    """First-order mean of the normalized score: a1/T + a2/n.

    Subtracting this from the score centers it; the lam/gamma/rho, phi2,
    sigma, and alpha entries are the only nonzero ones.
    """
    return bias_a1(theta, seq, dims) / dims.T + bias_a2(theta, seq, dims) / dims.n


@dataclass(frozen=True)
class ScoreReport:
    """Score diagnostics at a parameter point.

    ``score`` is the gradient divided by nT; ``delta1 = sqrt(n/T) a1`` and
    ``delta2 = sqrt(T/n) a2`` are the scaled bias vectors whose sum, divided
    by sqrt(nT), centers the score; ``info`` is the plug-in information.
    """

    theta: ParamVector
    score: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    info: np.ndarray
    residual_xi: np.ndarray
    residual_eps: np.ndarray


def score_report(theta: ParamVector, data: PanelData, seq: WeightSequence) -> ScoreReport:
    """Bundle score, scaled bias vectors, information, and residuals."""
    dims = data.dims
    a1 = bias_a1(theta, seq, dims)
    a2 = bias_a2(theta, seq, dims)
    root = np.sqrt(dims.n / dims.T)
    return ScoreReport(
        theta=theta,
        score=score(theta, data, seq),
        delta1=root * a1,
        delta2=a2 / root,
        info=information_at_restricted(theta, data, seq),
        residual_xi=residual_xi(theta, data, seq),
        residual_eps=residual_eps(theta.phi2_matrix, data),
    )


# ---------------------------------------------------------------------------
# Information matrix
# ---------------------------------------------------------------------------


def _alpha_information(Sinv: np.ndarray, L: int, sig2: float, p: int) -> np.ndarray:
    basis = alpha_basis(p)
    J = len(basis)
    out = np.empty((J, J))
    half_L_sig2 = 0.5 * L * sig2
    products = [Sinv @ B @ Sinv for B in basis]
    for k in range(J):
        for j in range(k, J):
            val = half_L_sig2 * float((products[k] * basis[j].T).sum())
            out[k, j] = val
            out[j, k] = val
    return out


def information_at_restricted(theta: ParamVector, data: PanelData, seq: WeightSequence) -> np.ndarray:
    """Plug-in information matrix, normalized by nT.

    Valid at any parameter point; at the null-restricted estimates it
    reproduces the closed-form blocks used by the test statistics (zero
    couplings between delta and (gamma, rho, beta, sigma, phi2, alpha), and
    between sigma and everything except lambda).
    """
    sig2, Sinv = _check_sigma(theta)
    n, T = data.n, data.T
    L = data.L
    dims = data.dims
    idx = BlockIndex(dims)

    E = residual_eps(theta.phi2_matrix, data)
    JE = within_transform(E, n, T)
    W1Y = apply_w1(seq, data.Y)
    JW1Y = within_transform(W1Y, n, T)
    Ylag, WYlag = lagged_terms(data, seq, need_w0=True)
    R = np.column_stack([Ylag, WYlag, data.X1])
    JR = within_transform(R, n, T)
    K = data.K
    JK = within_transform(K, n, T)

    tr_g1, tr_g1_sq = g1_diag_traces(theta.lam, seq)

    m = dims.n_params
    Jmat = np.zeros((m, m))

    phi1_idx = np.concatenate([idx.gamma, idx.rho, idx.beta])

    Jmat[idx.lam, idx.lam] = float(W1Y @ JW1Y) + sig2 * tr_g1_sq
    Jmat[phi1_idx, idx.lam[0]] = R.T @ JW1Y
    Jmat[np.ix_(phi1_idx, phi1_idx)] = R.T @ JR
    Jmat[idx.delta, idx.lam[0]] = E.T @ JW1Y
    Jmat[np.ix_(idx.delta, idx.delta)] = E.T @ JE
    Jmat[idx.phi2, idx.lam[0]] = -np.kron(theta.delta, K.T @ JW1Y)
    Jmat[np.ix_(idx.phi2, phi1_idx)] = -np.kron(theta.delta[:, None], K.T @ JR)
    Jmat[np.ix_(idx.phi2, idx.phi2)] = np.kron(sig2 * Sinv + np.outer(theta.delta, theta.delta), K.T @ JK)
    Jmat[idx.sigma, idx.lam[0]] = tr_g1
    Jmat[idx.sigma, idx.sigma] = (0.5 * L - n - T + 1) / sig2
    Jmat[np.ix_(idx.alpha, idx.alpha)] = _alpha_information(Sinv, L, sig2, dims.p)

    Jmat = np.tril(Jmat) + np.tril(Jmat, -1).T
    return Jmat / (L * sig2)


def information_expected(
    theta: ParamVector,
    data: PanelData,
    seq: WeightSequence,
    effects: np.ndarray | None = None,
) -> np.ndarray:
    """Expected information, normalized by nT (diagnostic variant).

    Uses the regression function of the contemporaneous spatial lag
    (``Q1 = G1 (X1 beta + E delta + ell0 + effects)``) where the plug-in
    uses the realized lag, plus exact trace terms. ``effects`` optionally
    supplies the stacked fixed-effect component of the outcome equation when
    it is known (simulation diagnostics).
    """
    from .core import ell0 as _ell0
    from .weights import solve_s

    sig2, Sinv = _check_sigma(theta)
    n, T = data.n, data.T
    L = data.L
    dims = data.dims
    idx = BlockIndex(dims)

    E = residual_eps(theta.phi2_matrix, data)
    JE = within_transform(E, n, T)
    Ylag, WYlag = lagged_terms(data, seq, need_w0=True)
    R = np.column_stack([Ylag, WYlag, data.X1])
    JR = within_transform(R, n, T)
    K = data.K
    JK = within_transform(K, n, T)

    W0 = seq.W[0] if seq.has_initial else data.W0
    mean_part = data.X1 @ theta.beta + E @ theta.delta + _ell0(theta.gamma, theta.rho, data.Y0, W0, T)
    if effects is not None:
        mean_part = mean_part + np.asarray(effects, dtype=float).reshape(L)
    Q1 = apply_w1(seq, solve_s(seq, theta.eta, mean_part))
    JQ1 = within_transform(Q1, n, T)

    traces = g_traces(theta.eta, seq)
    tr_g1, tr_g1_sq = traces.tr_g1, traces.tr_g1_sq
    tr_g1_J = traces.masked(1, "J")
    tr_g1t_J_g1 = _tr_gt_j_g(theta.eta, seq)

    m = dims.n_params
    Jmat = np.zeros((m, m))
    phi1_idx = np.concatenate([idx.gamma, idx.rho, idx.beta])

    Jmat[idx.lam, idx.lam] = float(Q1 @ JQ1) + sig2 * (tr_g1_sq + tr_g1t_J_g1)
    Jmat[phi1_idx, idx.lam[0]] = R.T @ JQ1
    Jmat[np.ix_(phi1_idx, phi1_idx)] = R.T @ JR
    Jmat[idx.delta, idx.lam[0]] = E.T @ JQ1 + tr_g1_J * (theta.Sigma_eps @ theta.delta)
    Jmat[np.ix_(idx.delta, idx.delta)] = (n - 1) * (T - 1) * theta.Sigma_eps
    Jmat[idx.phi2, idx.lam[0]] = -np.kron(theta.delta, K.T @ JQ1)
    Jmat[np.ix_(idx.phi2, phi1_idx)] = -np.kron(theta.delta[:, None], K.T @ JR)
    Jmat[np.ix_(idx.phi2, idx.phi2)] = np.kron(sig2 * Sinv + np.outer(theta.delta, theta.delta), K.T @ JK)
    Jmat[idx.sigma, idx.lam[0]] = tr_g1
    Jmat[idx.sigma, idx.sigma] = (0.5 * L - n - T + 1) / sig2
    Jmat[np.ix_(idx.alpha, idx.alpha)] = _alpha_information(Sinv, L, sig2, dims.p)

    Jmat = np.tril(Jmat) + np.tril(Jmat, -1).T
    return Jmat / (L * sig2)


def _tr_gt_j_g(eta, seq: WeightSequence) -> float:
    """tr(G1' J G1), via the projected Frobenius norm of G1's block columns."""
    lam, gamma, rho = (float(x) for x in eta)
    n, T = seq.n, seq.T
    factors = _period_factors(seq, lam)
    eye = np.eye(n)
    A = [lu_solve(factors[t - 1], eye) for t in range(1, T + 1)]
    total = 0.0
    for s in range(1, T + 1):
        col = np.zeros((T * n, n))
        R = A[s - 1]
        for t in range(s, T + 1):
            if t > s:
                R = lu_solve(factors[t - 1], gamma * R + rho * P)
            P = seq.W[t] @ R
            col[(t - 1) * n : t * n] = P
        Jcol = within_transform(col, n, T)
        total += float((Jcol * Jcol).sum())
    return total
