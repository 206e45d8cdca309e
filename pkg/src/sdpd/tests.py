"""Score tests for endogenous spatial weights.

All three statistics test delta = 0 (no feedback from the driver shocks into
the outcome shocks). ``rs_standard`` and ``rs_robust`` evaluate at the fully
restricted estimates (spatial coefficients also zero); the robust variant
additionally orthogonalizes against the (lambda, gamma, rho) directions so
that local spatial dependence does not masquerade as endogeneity. ``clm``
estimates the spatial coefficients first and tests delta at that point. Each
statistic uses bias-corrected restricted estimates and centered scores, so
the incidental-parameter effect of the profiled fixed effects does not shift
the null distribution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .core import BlockIndex, EstimationError, PanelData, ParamVector
from .estimation import FitOptions, FitResult, fit_joint_null, fit_null_delta
from .likelihood import (
    information_at_restricted,
    score,
    score_correction,
)
from .weights import WeightSequence

REJECT_LEVELS = (0.01, 0.05, 0.10)


@dataclass(frozen=True)
class TestResult:
    """Outcome of one score test."""

    name: str
    statistic: float
    df: int
    pvalue: float
    reject_at: dict
    elapsed_seconds: float
    fit_used: FitResult
    diagnostics: dict = field(default_factory=dict)


def chi2_critical(level: float, df: int) -> float:
    """Upper-tail chi-squared critical value."""
    return float(chi2.ppf(1.0 - level, df))


def chi2_pvalue(statistic: float, df: int) -> float:
    """Upper-tail chi-squared p-value."""
    return float(chi2.sf(statistic, df))


def _result(name: str, stat: float, df: int, t0: float, fit: FitResult, diagnostics: dict | None = None) -> TestResult:
    pvalue = chi2_pvalue(stat, df)
    return TestResult(
        name=name,
        statistic=float(stat),
        df=df,
        pvalue=pvalue,
        reject_at={level: bool(stat > chi2_critical(level, df)) for level in REJECT_LEVELS},
        elapsed_seconds=time.perf_counter() - t0,
        fit_used=fit,
        diagnostics=diagnostics or {},
    )


def _quadratic(C: np.ndarray, V: np.ndarray, L: int) -> float:
    C = np.atleast_1d(C)
    V = np.atleast_2d(V)
    try:
        stat = L * float(C @ np.linalg.solve(V, C))
    except np.linalg.LinAlgError as exc:
        raise EstimationError("singular variance block in a score test") from exc
    if stat < -1e-10:
        raise EstimationError(f"score-test quadratic form is negative ({stat})")
    return max(0.0, stat)


@dataclass(frozen=True)
class ScoreTestBlocks:
    """Centered scores and information blocks entering the two score tests.

    ``C_delta`` and ``C_eta`` are the centered score blocks; ``I_delta_dot``
    and ``I_eta_dot`` are the delta and eta information blocks after
    concentrating out omega = (beta, sigma); ``I_cross`` couples them, and
    ``K = I_cross @ inv(I_eta_dot)`` measures how much eta misspecification
    leaks into the delta score.
    """

    C_delta: np.ndarray
    C_eta: np.ndarray
    I_delta_dot: np.ndarray
    I_cross: np.ndarray
    I_eta_dot: np.ndarray
    K: np.ndarray


def score_test_blocks(theta: ParamVector, data: PanelData, seq: WeightSequence) -> ScoreTestBlocks:
    """Assemble centered scores and omega-concentrated information at theta."""
    dims = data.dims
    idx = BlockIndex(dims)
    s = score(theta, data, seq)
    corr = score_correction(theta, seq, dims)
    info = information_at_restricted(theta, data, seq)

    d, e, w = idx.delta, idx.eta, idx.omega
    I_ww = info[np.ix_(w, w)]
    feed_w = np.linalg.solve(I_ww, corr[w])
    C_delta = s[d] - corr[d] + info[np.ix_(d, w)] @ feed_w
    C_eta = s[e] - corr[e] + info[np.ix_(e, w)] @ feed_w

    W_inv_we = np.linalg.solve(I_ww, info[np.ix_(w, e)])
    W_inv_wd = np.linalg.solve(I_ww, info[np.ix_(w, d)])
    I_eta_dot = info[np.ix_(e, e)] - info[np.ix_(e, w)] @ W_inv_we
    I_cross = info[np.ix_(d, e)] - info[np.ix_(d, w)] @ W_inv_we
    I_delta_dot = info[np.ix_(d, d)] - info[np.ix_(d, w)] @ W_inv_wd
    K = np.linalg.solve(I_eta_dot, I_cross.T).T
    return ScoreTestBlocks(
        C_delta=C_delta,
        C_eta=C_eta,
        I_delta_dot=I_delta_dot,
        I_cross=I_cross,
        I_eta_dot=I_eta_dot,
        K=K,
    )


def corrected_score_delta(theta: ParamVector, data: PanelData, seq: WeightSequence) -> np.ndarray:
    """Centered delta score: bias-corrected and omega-feedback adjusted."""
    return score_test_blocks(theta, data, seq).C_delta


def corrected_score_eta(theta: ParamVector, data: PanelData, seq: WeightSequence) -> np.ndarray:
    """Centered (lambda, gamma, rho) score at theta."""
    return score_test_blocks(theta, data, seq).C_eta


def rs_standard(data: PanelData, seq: WeightSequence) -> TestResult:
    """Score test of delta = 0 at the fully restricted estimates.

    Correctly sized when the spatial coefficients are truly zero; over-rejects
    when they are not (the robust variant guards against that).
    """
    t0 = time.perf_counter()
    fit = fit_joint_null(data)
    theta = fit.theta_bc
    blocks = score_test_blocks(theta, data, seq)
    stat = _quadratic(blocks.C_delta, blocks.I_delta_dot, data.L)
    return _result("RS", stat, data.p, t0, fit)


def rs_robust(data: PanelData, seq: WeightSequence) -> TestResult:
    """Score test of delta = 0, robust to local spatial-coefficient deviations.

    Projects the eta-direction score out of the delta score; the resulting
    statistic keeps its chi-squared null distribution within a root-nT
    neighborhood of eta = 0.
    """
    t0 = time.perf_counter()
    fit = fit_joint_null(data)
    theta = fit.theta_bc
    blocks = score_test_blocks(theta, data, seq)
    C_star = blocks.C_delta - blocks.K @ blocks.C_eta
    V_star = blocks.I_delta_dot - blocks.K @ blocks.I_cross.T
    stat = _quadratic(C_star, V_star, data.L)
    return _result("RS_robust", stat, data.p, t0, fit, diagnostics={"K": blocks.K})


def clm_statistic_at(theta: ParamVector, data: PanelData, seq: WeightSequence) -> float:
    """Conditional score statistic for delta = 0 at a given parameter point.

    The conditioning set is (lambda, gamma, rho, beta, sigma); the delta score
    is recentered through the information coupling with that set.
    """
    dims = data.dims
    idx = BlockIndex(dims)
    s = score(theta, data, seq)
    corr = score_correction(theta, seq, dims)
    info = information_at_restricted(theta, data, seq)

    d = idx.delta
    psi = np.concatenate([idx.eta, idx.omega])
    I_pp = info[np.ix_(psi, psi)]
    I_dp = info[np.ix_(d, psi)]
    C = s[d] + I_dp @ np.linalg.solve(I_pp, corr[psi])
    V = info[np.ix_(d, d)] - I_dp @ np.linalg.solve(I_pp, I_dp.T)
    return _quadratic(C, V, data.L)


def clm(data: PanelData, seq: WeightSequence, options: FitOptions | None = None) -> TestResult:
    """Conditional score test of delta = 0 at the delta-restricted estimates.

    Estimates (lambda, gamma, rho) first, so the test stays sized under
    arbitrary fixed spatial coefficients at the cost of the numeric search.
    """
    t0 = time.perf_counter()
    fit = fit_null_delta(data, seq, options)
    stat = clm_statistic_at(fit.theta_bc, data, seq)
    return _result("CLM", stat, data.p, t0, fit)


def noncentrality(zeta: np.ndarray, nu: np.ndarray, blocks: ScoreTestBlocks) -> tuple[float, float]:
    """Asymptotic noncentrality of the two tests under local alternatives.

    ``zeta`` is the local delta direction and ``nu`` the local (lambda,
    gamma, rho) direction, both on the root-nT scale. The first entry is the
    plain test's noncentrality (shifted by eta misspecification), the second
    the robust test's (invariant to ``nu``).
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    I_dd = blocks.I_delta_dot
    I_de = blocks.I_cross
    shift = I_de @ nu
    phi1 = float(zeta @ I_dd @ zeta + 2.0 * zeta @ shift + shift @ np.linalg.solve(I_dd, shift))
    V_star = I_dd - blocks.K @ I_de.T
    phi2 = float(zeta @ V_star @ zeta)
    return phi1, phi2
