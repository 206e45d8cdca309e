"""Maximum likelihood estimation under the three delta regimes.

``fit_joint_null`` restricts all spatial-interaction coefficients and delta
to zero, which makes both equations closed-form least squares. ``fit_null_delta``
frees (lambda, gamma, rho) and profiles everything else, leaving a
three-dimensional numeric search. ``fit_full`` additionally frees delta via
the control-function residuals. Every fit also carries an analytically
bias-corrected parameter vector (incidental-parameter correction of order
1/T and 1/n) computed from the plug-in information matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .core import (
    BlockIndex,
    EstimationError,
    InputError,
    PanelData,
    ParamVector,
    alpha_basis,
    within_transform,
)
from .likelihood import (
    SIGMA_FLOOR,
    bias_a1,
    bias_a2,
    concentrated_loglik,
    information_at_restricted,
    kappa_weighted_powersum,
)
from .weights import (
    WeightSequence,
    apply_w1,
    eigenvalue_cache,
    log_det_S_from_eigs,
    spectral_guard,
)

RESTRICTION_JOINT_NULL = "joint_null"
RESTRICTION_DELTA_NULL = "delta_null"
RESTRICTION_NONE = "none"

_PENALTY = 1e10

# deterministic extra starting points for the optional multistart
_EXTRA_STARTS = (
    (0.4, 0.0, 0.0),
    (-0.4, 0.0, 0.0),
    (0.0, 0.4, 0.0),
    (0.0, 0.0, 0.4),
    (0.2, 0.2, 0.2),
)


@dataclass(frozen=True)
class FitOptions:
    """Numeric-search settings for the eta = (lambda, gamma, rho) profile."""

    max_iterations: int = 200
    gradient_tol: float = 1e-7
    function_tol: float = 1e-14
    bound: float = 0.995
    multistart: bool = False


@dataclass(frozen=True)
class FitResult:
    """Estimation output: raw and bias-corrected parameters plus diagnostics."""

    theta: ParamVector
    theta_bc: ParamVector
    loglik: float
    converged: bool
    iterations: int
    restriction: str


def _ols_columns(JX: np.ndarray, JY: np.ndarray) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(JX, JY, rcond=None)
    return coef


def driver_regression(data: PanelData) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form driver equation: column-wise regression of Z on (Z_lag, X2).

    Returns the stacked coefficient matrix Phi2 (lagged-driver rows first)
    and the residual covariance with MLE divisor nT, both computed on
    within-transformed data. The covariance may be singular for synthetic
    noise-free data; the fit entry points validate it before use.
    """
    JK = within_transform(data.K, data.n, data.T)
    JZ = within_transform(data.Z, data.n, data.T)
    phi2 = _ols_columns(JK, JZ)
    JE = JZ - JK @ phi2
    Sigma = (JE.T @ JE) / data.L
    return phi2, Sigma


def _driver_side(data: PanelData) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Validated driver equation pieces: (Phi2, Sigma_eps, E, JE)."""
    phi2, Sigma = driver_regression(data)
    sign, _ = np.linalg.slogdet(Sigma)
    if sign <= 0:
        raise EstimationError("driver residual covariance is singular")
    E = data.Z - data.K @ phi2
    JE = within_transform(E, data.n, data.T)
    return phi2, Sigma, E, JE


def _theta_from_parts(
    data: PanelData,
    eta: tuple[float, float, float],
    beta: np.ndarray,
    delta: np.ndarray,
    phi2: np.ndarray,
    sigma_xi2: float,
    Sigma: np.ndarray,
) -> ParamVector:
    p, k2 = data.p, data.k2
    return ParamVector(
        lam=eta[0],
        gamma=eta[1],
        rho=eta[2],
        beta=beta,
        delta=delta,
        kappa=phi2[:p, :],
        Gamma=phi2[p:, :],
        sigma_xi2=sigma_xi2,
        Sigma_eps=Sigma,
    )


def fit_joint_null(data: PanelData) -> FitResult:
    """Fit with lambda = gamma = rho = 0 and delta = 0 (plain two-way panel).

    Both equations are exact least squares on within-transformed data, so no
    numeric search is involved. The bias-corrected parameters adjust the
    free block (beta, phi2, sigma, alpha); the correction needs no weight
    matrices because the spatial coefficients are pinned at zero.
    """
    n, T, L = data.n, data.T, data.L
    JX1 = within_transform(data.X1, n, T)
    JY = within_transform(data.Y, n, T)
    beta = _ols_columns(JX1, JY)
    Jresid = JY - JX1 @ beta
    sig2 = float(Jresid @ Jresid) / L
    if sig2 <= SIGMA_FLOOR:
        raise EstimationError("outcome residual variance is degenerate")
    phi2, Sigma, _, _ = _driver_side(data)
    theta = _theta_from_parts(data, (0.0, 0.0, 0.0), beta, np.zeros(data.p), phi2, sig2, Sigma)

    _, logdet_sigma = np.linalg.slogdet(Sigma)
    loglik = (
        -0.5 * L * (np.log(2.0 * np.pi) + np.log(sig2) + 1.0)
        - 0.5 * L * logdet_sigma
        - 0.5 * L * data.p
    )
    theta_bc = _bias_corrected_joint_null(theta, data)
    return FitResult(
        theta=theta,
        theta_bc=theta_bc,
        loglik=float(loglik),
        converged=True,
        iterations=0,
        restriction=RESTRICTION_JOINT_NULL,
    )


def _bias_corrected_joint_null(theta: ParamVector, data: PanelData) -> ParamVector:
    """Bias correction of the free block (beta, phi2, sigma, alpha).

    The free sub-blocks are mutually uncoupled in the information matrix at
    delta = 0, so each solves separately; beta has zero bias.
    """
    dims = data.dims
    idx = BlockIndex(dims)
    n, T, L = dims.n, dims.T, dims.L
    sig2 = float(theta.sigma_xi2)
    Sinv = np.linalg.inv(theta.Sigma_eps)
    scale = 1.0 / T + 1.0 / n

    flat = theta.pack()

    # phi2: information kron(Sigma^{-1}, K'JK)/L, bias only in the a1 term
    JK = within_transform(data.K, n, T)
    KJK = JK.T @ JK
    a1_block = np.zeros((dims.p + dims.k2, dims.p))
    a1_block[: dims.p] = -kappa_weighted_powersum(theta.kappa, T) @ Sinv / T
    info_phi2 = np.kron(Sinv, KJK) / L
    correction = np.linalg.solve(info_phi2, a1_block.ravel(order="F")) / T
    flat[idx.phi2] -= correction

    # sigma: information (L/2 - n - T + 1) / (L sigma^4)
    info_sigma = (0.5 * L - n - T + 1) / (L * sig2 * sig2)
    flat[idx.sigma] -= (-0.5 / sig2) * scale / info_sigma

    # alpha block
    basis = alpha_basis(dims.p)
    a_alpha = np.array([-0.5 * float((Sinv * B).sum()) for B in basis])
    info_alpha = np.empty((len(basis), len(basis)))
    for a in range(len(basis)):
        SaS = Sinv @ basis[a] @ Sinv
        for b in range(len(basis)):
            info_alpha[a, b] = 0.5 * float((SaS * basis[b].T).sum())
    flat[idx.alpha] -= np.linalg.solve(info_alpha, a_alpha) * scale
    return ParamVector.unpack(flat, dims)


def _free_indices(idx: BlockIndex, restriction: str) -> np.ndarray:
    if restriction == RESTRICTION_JOINT_NULL:
        parts = [idx.beta, idx.phi2, idx.sigma, idx.alpha]
    elif restriction == RESTRICTION_DELTA_NULL:
        parts = [idx.lam, idx.gamma, idx.rho, idx.beta, idx.phi2, idx.sigma, idx.alpha]
    elif restriction == RESTRICTION_NONE:
        parts = [idx.lam, idx.gamma, idx.rho, idx.beta, idx.delta, idx.phi2, idx.sigma, idx.alpha]
    else:
        raise InputError(f"unknown restriction {restriction!r}")
    return np.concatenate(parts)


def bias_correct(fit: FitResult, data: PanelData, seq: WeightSequence) -> ParamVector:
    """Analytic incidental-parameter correction of the fit's free block.

    Solves the plug-in information against each bias vector and subtracts
    ``B1/T + B2/n`` from the free parameters; restricted entries stay at
    exact zero.
    """
    theta = fit.theta
    dims = data.dims
    idx = BlockIndex(dims)
    free = _free_indices(idx, fit.restriction)
    info = information_at_restricted(theta, data, seq)
    a1 = bias_a1(theta, seq, dims)
    a2 = bias_a2(theta, seq, dims)
    sub = info[np.ix_(free, free)]
    try:
        b1 = np.linalg.solve(sub, a1[free])
        b2 = np.linalg.solve(sub, a2[free])
    except np.linalg.LinAlgError as exc:
        raise EstimationError("information matrix is singular in bias correction") from exc
    flat = theta.pack()
    flat[free] -= b1 / dims.T + b2 / dims.n
    return ParamVector.unpack(flat, dims)


@dataclass(frozen=True)
class _ProfileDesign:
    """Precomputed pieces for the concentrated eta search.

    ``H`` is the Gram matrix of the within-transformed stack
    ``[Y, W1 Y, Y_lag, Wlag Y_lag]`` after projecting out the concentrated
    regressors, so the residual sum of squares at eta is ``w' H w`` with
    ``w = (1, -lambda, -gamma, -rho)``.
    """

    H: np.ndarray
    JX: np.ndarray
    Jcols: np.ndarray
    eigs: list
    L: int


def _profile_design(data: PanelData, seq: WeightSequence, extra: np.ndarray | None) -> _ProfileDesign:
    from .likelihood import lagged_terms

    n, T = data.n, data.T
    W1Y = apply_w1(seq, data.Y)
    Ylag, WYlag = lagged_terms(data, seq, need_w0=True)
    cols = np.column_stack([data.Y, W1Y, Ylag, WYlag])
    Jcols = within_transform(cols, n, T)
    X = data.X1 if extra is None else np.column_stack([data.X1, extra])
    JX = within_transform(X, n, T)
    proj = Jcols - JX @ _ols_columns(JX, Jcols)
    H = proj.T @ proj
    return _ProfileDesign(H=H, JX=JX, Jcols=Jcols, eigs=eigenvalue_cache(seq), L=data.L)


def _eta_objective(design: _ProfileDesign, seq: WeightSequence):
    H, L = design.H, design.L

    def negloglik(eta: np.ndarray) -> float:
        if not spectral_guard(eta, seq):
            return _PENALTY
        w = np.array([1.0, -eta[0], -eta[1], -eta[2]])
        rss = float(w @ H @ w)
        if not np.isfinite(rss) or rss <= SIGMA_FLOOR * L:
            return _PENALTY
        try:
            logdet = log_det_S_from_eigs(float(eta[0]), design.eigs)
        except EstimationError:
            return _PENALTY
        return -(logdet - 0.5 * L * np.log(rss / L))

    return negloglik


def _search_eta(design: _ProfileDesign, seq: WeightSequence, options: FitOptions):
    objective = _eta_objective(design, seq)
    b = options.bound
    bounds = [(-b, b)] * 3
    starts = [(0.0, 0.0, 0.0)]
    if options.multistart:
        starts.extend(_EXTRA_STARTS)
    best = None
    for start in starts:
        res = minimize(
            objective,
            np.asarray(start, dtype=float),
            method="L-BFGS-B",
            bounds=bounds,
            options={
                "maxiter": options.max_iterations,
                "ftol": options.function_tol,
                "gtol": options.gradient_tol,
            },
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun) or best.fun >= _PENALTY:
        raise EstimationError("the eta search failed to find a stable interior point")
    return best


def _finish_profile_fit(
    data: PanelData,
    seq: WeightSequence,
    design: _ProfileDesign,
    result,
    phi2: np.ndarray,
    Sigma: np.ndarray,
    with_delta: bool,
) -> FitResult:
    eta = tuple(float(x) for x in result.x)
    w = np.array([1.0, -eta[0], -eta[1], -eta[2]])
    Jtarget = design.Jcols @ w
    coef = _ols_columns(design.JX, Jtarget)
    rss = float(w @ design.H @ w)
    sig2 = rss / data.L
    if sig2 <= SIGMA_FLOOR:
        raise EstimationError("outcome residual variance is degenerate")
    k1 = data.k1
    beta = coef[:k1]
    delta = coef[k1:] if with_delta else np.zeros(data.p)
    theta = _theta_from_parts(data, eta, beta, delta, phi2, sig2, Sigma)
    loglik = concentrated_loglik(theta, data, seq)
    restriction = RESTRICTION_NONE if with_delta else RESTRICTION_DELTA_NULL
    fit = FitResult(
        theta=theta,
        theta_bc=theta,  # placeholder, replaced below
        loglik=float(loglik),
        converged=bool(result.success),
        iterations=int(result.nit),
        restriction=restriction,
    )
    theta_bc = bias_correct(fit, data, seq)
    return FitResult(
        theta=theta,
        theta_bc=theta_bc,
        loglik=float(loglik),
        converged=bool(result.success),
        iterations=int(result.nit),
        restriction=restriction,
    )


def fit_null_delta(data: PanelData, seq: WeightSequence, options: FitOptions | None = None) -> FitResult:
    """Fit with delta = 0: spatial coefficients free, no endogeneity channel.

    The driver equation stays exact least squares; (beta, sigma) are profiled
    out of the outcome equation, leaving a three-dimensional search over
    (lambda, gamma, rho) with cached per-period eigenvalues for the
    log-determinant.
    """
    options = options or FitOptions()
    phi2, Sigma, _, _ = _driver_side(data)
    design = _profile_design(data, seq, extra=None)
    result = _search_eta(design, seq, options)
    return _finish_profile_fit(data, seq, design, result, phi2, Sigma, with_delta=False)


def fit_full(data: PanelData, seq: WeightSequence, options: FitOptions | None = None) -> FitResult:
    """Fit with delta free, using driver residuals as control functions.

    The driver coefficients are held at their exact least-squares values
    (they are consistent regardless of delta), and (beta, delta, sigma) are
    profiled out of the outcome equation around the eta search.
    """
    options = options or FitOptions()
    phi2, Sigma, E, _ = _driver_side(data)
    design = _profile_design(data, seq, extra=E)
    result = _search_eta(design, seq, options)
    return _finish_profile_fit(data, seq, design, result, phi2, Sigma, with_delta=True)
