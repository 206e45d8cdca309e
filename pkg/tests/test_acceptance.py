"""Acceptance suite: one test per shipped criterion, each printing PASS/FAIL.

The expensive replication batches come from session fixtures shared with the
module test files, so each batch runs once per session regardless of which
file triggers it first.
"""

from pathlib import Path

import numpy as np

from conftest import make_panel, orthogonal_driver_panel, record_acceptance
from sdpd.core import BlockIndex, PanelData, ParamVector
from sdpd.estimation import fit_joint_null
from sdpd.likelihood import concentrated_loglik, score
from sdpd.oracle import dense_check, fd_gradient
from sdpd.tests import chi2_critical, rs_robust, rs_standard, score_test_blocks
from sdpd.weights import build_weight_sequence


def test_criterion_01_size_under_joint_null(cli_size_run):
    rs = cli_size_run["RS"]
    robust = cli_size_run["RS_robust"]
    ok = (0.016 <= rs <= 0.056) and (0.018 <= robust <= 0.058)
    detail = f"RS={rs:.4f} in [0.016,0.056], RS*={robust:.4f} in [0.018,0.058]"
    assert record_acceptance(1, "size under joint null (100,10)", ok, detail)


def test_criterion_02_local_misspecification(local_misspec_runs):
    small = local_misspec_runs[(100, 10)]
    large = local_misspec_runs[(196, 20)]
    ok = (
        small["RS"] >= small["RS_robust"]
        and large["RS"] >= large["RS_robust"]
        and 0.041 <= small["RS"] <= 0.091
        and 0.009 <= small["RS_robust"] <= 0.049
        and 0.057 <= large["RS"] <= 0.107
        and 0.019 <= large["RS_robust"] <= 0.059
    )
    detail = (
        f"(100,10): RS={small['RS']:.4f}, RS*={small['RS_robust']:.4f}; "
        f"(196,20): RS={large['RS']:.4f}, RS*={large['RS_robust']:.4f}"
    )
    assert record_acceptance(2, "robustness to lambda0=0.3", ok, detail)


def test_criterion_03_power(power_runs, power_long_run):
    mid = power_runs[0.1].rejection_rate["RS_robust"]
    strong = power_runs[0.2].rejection_rate["RS_robust"]
    long_mid = power_long_run.rejection_rate["RS_robust"]
    ok = (0.798 <= mid <= 0.868) and strong >= 0.99 and (0.769 <= long_mid <= 0.849)
    detail = (
        f"(100,10) delta0=0.1: {mid:.4f} in [0.798,0.868]; "
        f"delta0=0.2: {strong:.4f} >= 0.99; (9,100) delta0=0.1: {long_mid:.4f} in [0.769,0.849]"
    )
    assert record_acceptance(3, "power against endogeneity", ok, detail)


def test_criterion_04_timing_order(timing_rows):
    medians = {}
    for row in timing_rows:
        medians.setdefault((row["n"], row["T"]), {})[row["test"]] = row["median_elapsed_s"]
    parts = []
    ok = True
    for shape in ((100, 10), (9, 100)):
        fast = medians[shape]["RS_robust"]
        slow = medians[shape]["CLM"]
        ok = ok and fast < slow
        parts.append(f"{shape}: RS* {fast:.4f}s < CLM {slow:.4f}s")
    assert record_acceptance(4, "robust test faster than conditional", ok, "; ".join(parts))


def _random_small_instance(seed, n=6, T=4, k1=2, p=1, k2=1):
    rng = np.random.default_rng(seed)
    L = n * T
    drivers = rng.standard_normal((T + 1, n, p))
    seq = build_weight_sequence(drivers, Wd=np.ones((n, n)) - np.eye(n))
    data = PanelData(
        n=n, T=T,
        Y=rng.standard_normal(L),
        X1=rng.standard_normal((L, k1)),
        Z=drivers[1:].reshape(L, p),
        X2=rng.standard_normal((L, k2)),
        Y0=rng.standard_normal(n),
        Z0=drivers[0],
        W0=seq.W[0],
    )
    return data, seq, rng


def _random_theta(rng, k1=1, p=1, k2=1):
    A = rng.standard_normal((p, p))
    return ParamVector(
        lam=rng.uniform(-0.2, 0.2),
        gamma=rng.uniform(-0.2, 0.2),
        rho=rng.uniform(-0.2, 0.2),
        beta=rng.standard_normal(k1),
        delta=0.3 * rng.standard_normal(p),
        kappa=0.2 * rng.standard_normal((p, p)),
        Gamma=rng.standard_normal((k2, p)),
        sigma_xi2=1.0 + rng.uniform(),
        Sigma_eps=A @ A.T + 0.5 * np.eye(p),
    )


def test_criterion_05_score_against_finite_differences():
    worst = 0.0
    for seed in range(20):
        data, seq, rng = _random_small_instance(seed)
        theta = _random_theta(rng, k1=data.k1, p=data.p, k2=data.k2)
        analytic = score(theta, data, seq)

        def f(flat):
            return concentrated_loglik(ParamVector.unpack(flat, data.dims), data, seq)

        numeric = fd_gradient(f, theta.pack()) / data.L
        scale = np.maximum(np.abs(numeric), 1e-8)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
    ok = worst < 1e-6
    detail = f"max relative error {worst:.2e} over 20 draws at (6,4)"
    assert record_acceptance(5, "analytic score matches finite differences", ok, detail)


def test_criterion_06_dense_oracle_equivalence():
    worst = 0.0
    worst_case = None
    cases = [(n, T) for n in (4, 9, 16) for T in (2, 3, 4)]
    for index, (n, T) in enumerate(cases):
        scheme = "queen" if index % 2 == 0 else "rook"
        data, seq = make_panel(
            n, T, scheme, seed=60 + index,
            lambda0=0.15, gamma0=0.1, rho0=0.05, delta0=0.2,
        )
        rng = np.random.default_rng(600 + index)
        theta = _random_theta(rng)
        deviations = dense_check(data, seq, theta)
        peak = max(deviations.values())
        if peak > worst:
            worst, worst_case = peak, (n, T, scheme, max(deviations, key=deviations.get))
    ok = worst <= 1e-10
    detail = f"max deviation {worst:.2e} over {len(cases)} cases (worst: {worst_case})"
    assert record_acceptance(6, "dense-oracle equivalence nT <= 64", ok, detail)


def test_criterion_07_null_distribution(ks_null_run):
    import scipy.stats

    values = np.array([row["stat"]["RS_robust"] for row in ks_null_run.per_rep if row["ok"]])
    ks = scipy.stats.kstest(values, scipy.stats.chi2(1).cdf)
    ok = ks.pvalue > 0.01
    detail = f"KS p-value {ks.pvalue:.4f} over {values.size} replications at (49,20)"
    assert record_acceptance(7, "robust statistic is chi-squared under null", ok, detail)


def test_criterion_08_bias_shrinks_with_scale(bias_scale_runs):
    small = bias_scale_runs["small"]
    large = bias_scale_runs["large"]
    ok = abs(large) < abs(small)
    detail = f"mean corrected bias {large:+.4f} at (98,20) vs {small:+.4f} at (49,10)"
    assert record_acceptance(8, "bias correction improves with scale", ok, detail)


def test_criterion_09_structural_identities():
    data, seq = orthogonal_driver_panel()
    standard = rs_standard(data, seq)
    robust = rs_robust(data, seq)
    coupling = float(np.max(np.abs(robust.diagnostics["K"])))
    stat_gap = abs(standard.statistic - robust.statistic)

    plain, plain_seq = make_panel(16, 6, "queen", seed=5)
    fit = fit_joint_null(plain)
    blocks = score_test_blocks(fit.theta_bc, plain, plain_seq)
    idx = BlockIndex(plain.dims)
    delta_identity = np.array_equal(
        blocks.C_delta, score(fit.theta_bc, plain, plain_seq)[idx.delta]
    )

    criticals = (round(chi2_critical(0.05, 1), 4), round(chi2_critical(0.05, 2), 4))
    ok = (
        coupling < 1e-12
        and stat_gap <= 1e-12 * max(1.0, standard.statistic)
        and delta_identity
        and criticals == (3.8415, 5.9915)
    )
    detail = (
        f"K={coupling:.1e}, |RS-RS*|={stat_gap:.1e}, centered delta score is the "
        f"plain score block: {delta_identity}, criticals {criticals[0]}/{criticals[1]}"
    )
    assert record_acceptance(9, "structural test identities", ok, detail)


def test_criterion_10_documented_exclusions():
    readme = Path(__file__).resolve().parent.parent / "README.md"
    text = readme.read_text() if readme.exists() else ""
    ok = "not reproduced" in text
    detail = (
        "statistic values tied to external panel data and per-cell summaries with "
        "unspecified aggregation are excluded by design; structural and "
        "distributional checks (criteria 5-9) stand in"
    )
    assert record_acceptance(10, "documented out-of-scope values", ok, detail)
