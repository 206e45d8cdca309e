"""Shared fixtures: simulated panels and session-scoped Monte Carlo runs.

Expensive replication batches are computed once per session and shared
between the module-level property tests and the acceptance suite. Worker
count for those batches comes from SDPD_TEST_WORKERS (default 1).
"""

import csv
import os

import numpy as np
import pytest

from sdpd.core import PanelData
from sdpd.montecarlo import McConfig, run_cell, simulate_panel, timing_report
from sdpd.weights import apply_w1, grid_contiguity

WORKERS = max(1, int(os.environ.get("SDPD_TEST_WORKERS", "1")))


def make_panel(n, T, scheme="rook", seed=0, rep=0, **params):
    """One simulated panel plus its weight sequence."""
    cfg = McConfig(n=n, T=T, reps=1, scheme=scheme, seed=seed, **params)
    return simulate_panel(cfg, rep)


def replace_x2(data: PanelData, X2: np.ndarray) -> PanelData:
    return PanelData(
        n=data.n, T=data.T, Y=data.Y, X1=data.X1, Z=data.Z,
        X2=X2, Y0=data.Y0, Z0=data.Z0, W0=data.W0,
    )


def orthogonal_driver_panel(n=49, T=10, scheme="queen", seed=23, **params):
    """Panel rebuilt so X2 is the spatial lag of Y.

    The driver residuals are then exactly orthogonal to W1 Y by least
    squares, which zeroes the delta/eta information coupling K at the
    joint-null estimate.
    """
    data, seq = make_panel(n, T, scheme, seed, **params)
    X2 = apply_w1(seq, data.Y)[:, None]
    return replace_x2(data, X2), seq


def partial_rate(result, test, k):
    """Rejection rate over the first k replications of a kept-reps run."""
    rows = [r for r in result.per_rep[:k] if r["ok"]]
    return sum(r["pvalue"][test] < result.config.level for r in rows) / len(rows)


def two_islands_contiguity() -> np.ndarray:
    """98 units: two disconnected 7x7 Queen lattices."""
    block = grid_contiguity(49, "queen")
    W = np.zeros((98, 98))
    W[:49, :49] = block
    W[49:, 49:] = block
    return W


# ---------------------------------------------------------------------------
# Small shared panels
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def small_panel():
    """Endogenous-weights panel with every coefficient active."""
    return make_panel(
        9, 4, "rook", seed=11,
        lambda0=0.2, gamma0=0.15, rho0=0.1, delta0=0.3,
    )


@pytest.fixture(scope="session")
def null_panel():
    """Joint-null panel: no spatial terms, exogenous weights."""
    return make_panel(16, 6, "queen", seed=5)


@pytest.fixture(scope="session")
def spatial_panel():
    """Delta-null panel with nonzero spatial coefficients."""
    return make_panel(
        49, 10, "queen", seed=3,
        lambda0=0.2, gamma0=0.2, rho0=0.1,
    )


# ---------------------------------------------------------------------------
# Session-scoped Monte Carlo batches
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def cli_size_run(tmp_path_factory):
    """Joint-null size cell run through the command line (1000 reps)."""
    from sdpd.cli import main

    out = tmp_path_factory.mktemp("size_run")
    rc = main([
        "simulate", "--n", "100", "--T", "10", "--scheme", "queen",
        "--reps", "1000", "--seed", "7", "--tests", "RS,RS_robust",
        "--threads", str(WORKERS), "--out", str(out),
    ])
    assert rc == 0
    rates = {}
    with open(out / "results.csv", newline="") as handle:
        for row in csv.DictReader(handle):
            rates[row["test"]] = float(row["reject_rate"])
    return rates


@pytest.fixture(scope="session")
def null_calibration_runs(cli_size_run):
    """RS* empirical size, 1000 reps, for both shapes and both schemes."""
    rates = {(100, 10, "queen"): cli_size_run["RS_robust"]}
    for n, T, scheme in ((100, 10, "rook"), (49, 10, "queen"), (49, 10, "rook")):
        cfg = McConfig(
            n=n, T=T, reps=1000, scheme=scheme, seed=7, tests=("RS_robust",)
        )
        rates[(n, T, scheme)] = run_cell(cfg, workers=WORKERS).rejection_rate["RS_robust"]
    return rates


@pytest.fixture(scope="session")
def local_misspec_runs():
    """lambda0 = 0.3, delta0 = 0 cells at (100,10) and (196,20), 1000 reps."""
    out = {}
    for n, T in ((100, 10), (196, 20)):
        cfg = McConfig(
            n=n, T=T, reps=1000, scheme="queen", seed=11, lambda0=0.3,
            tests=("RS", "RS_robust"),
        )
        out[(n, T)] = run_cell(cfg, workers=WORKERS).rejection_rate
    return out


@pytest.fixture(scope="session")
def power_runs():
    """RS* power sweep over delta0 at (100,10), lambda0 = 0.05."""
    runs = {}
    for delta0, reps in ((0.0, 300), (0.05, 300), (0.1, 1000), (0.15, 300), (0.2, 1000)):
        cfg = McConfig(
            n=100, T=10, reps=reps, scheme="queen", seed=13,
            lambda0=0.05, delta0=delta0, tests=("RS_robust",),
        )
        runs[delta0] = run_cell(cfg, workers=WORKERS, keep_reps=True)
    return runs


@pytest.fixture(scope="session")
def power_long_run():
    """RS* power at the long-panel shape (9,100), delta0 = 0.1."""
    cfg = McConfig(
        n=9, T=100, reps=1000, scheme="queen", seed=17,
        lambda0=0.05, delta0=0.1, tests=("RS_robust",),
    )
    return run_cell(cfg, workers=WORKERS)


@pytest.fixture(scope="session")
def ks_null_run():
    """2000 joint-null replications at (49,20) keeping per-rep statistics."""
    cfg = McConfig(
        n=49, T=20, reps=2000, scheme="queen", seed=101,
        tests=("RS", "RS_robust"),
    )
    return run_cell(cfg, workers=WORKERS, keep_reps=True)


@pytest.fixture(scope="session")
def timing_rows():
    """Median per-test elapsed seconds at both table shapes, sequential."""
    cells = [
        McConfig(n=100, T=10, reps=25, scheme="queen", seed=23,
                 tests=("RS", "RS_robust", "CLM")),
        McConfig(n=9, T=100, reps=25, scheme="queen", seed=23,
                 tests=("RS", "RS_robust", "CLM")),
    ]
    return timing_report(cells)


@pytest.fixture(scope="session")
def bias_scale_runs():
    """Mean bias of the corrected spatial coefficient at two panel scales."""
    from sdpd.estimation import fit_null_delta

    truth = dict(lambda0=0.2, gamma0=0.4, rho0=0.1)
    out = {}
    for label, n, T, contig in (
        ("small", 49, 10, None),
        ("large", 98, 20, two_islands_contiguity()),
    ):
        cfg = McConfig(n=n, T=T, reps=200, scheme="queen", seed=19,
                       contiguity=contig, **truth)
        lam_bc = []
        for r in range(cfg.reps):
            data, seq = simulate_panel(cfg, r)
            fit = fit_null_delta(data, seq)
            lam_bc.append(fit.theta_bc.lam)
        out[label] = float(np.mean(lam_bc)) - truth["lambda0"]
    return out


# ---------------------------------------------------------------------------
# Acceptance reporting
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES = []


def record_acceptance(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {number:>2} {title}: {detail} -> {'PASS' if ok else 'FAIL'}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
