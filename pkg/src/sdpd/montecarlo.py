"""Seeded Monte Carlo harness for size, power, and timing experiments.

The data-generating process uses one regressor per equation, a first-order
autoregressive driver, fixed effects correlated with the regressors, and
weight matrices rebuilt every period from the simulated drivers. Replication
``r`` of a cell draws from ``SeedSequence([seed, r])``, so results are
reproducible and independent of worker count.
"""

from __future__ import annotations

import csv
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import EstimationError, InputError, PanelData
from .tests import clm, rs_robust, rs_standard
from .weights import WeightSequence, build_weight_sequence, grid_contiguity

BETA0 = 1.0
KAPPA0 = 0.2
X2_COEF0 = 0.3

TEST_FUNCTIONS = {
    "RS": rs_standard,
    "RS_robust": rs_robust,
    "CLM": clm,
}

CSV_COLUMNS = (
    "n",
    "T",
    "scheme",
    "lambda0",
    "gamma0",
    "rho0",
    "delta0",
    "test",
    "reps",
    "reject_rate",
    "mc_se",
    "mean_stat",
    "elapsed_s",
)


@dataclass(frozen=True)
class McConfig:
    """One experiment cell: panel shape, truth, and harness settings."""

    n: int
    T: int
    reps: int
    scheme: str = "queen"
    lambda0: float = 0.0
    gamma0: float = 0.0
    rho0: float = 0.0
    delta0: float = 0.0
    level: float = 0.05
    seed: int = 0
    tests: tuple = ("RS", "RS_robust")
    contiguity: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.reps < 0:
            raise InputError(f"reps must be nonnegative, got {self.reps}")
        if self.seed < 0:
            raise InputError(f"seed must be nonnegative, got {self.seed}")
        if not 0.0 < self.level < 1.0:
            raise InputError(f"level must be in (0, 1), got {self.level}")
        unknown = [t for t in self.tests if t not in TEST_FUNCTIONS]
        if unknown:
            raise InputError(f"unknown tests {unknown}; available: {sorted(TEST_FUNCTIONS)}")


@dataclass(frozen=True)
class McResult:
    """Aggregates for one cell: rejection rates and timing per test."""

    config: McConfig
    requested: int
    completed: int
    excluded: int
    rejection_rate: dict
    mc_se: dict
    mean_statistic: dict
    elapsed_median: dict
    elapsed_total: dict
    failure_messages: tuple = ()
    per_rep: tuple | None = None


def _contiguity(cfg: McConfig) -> np.ndarray:
    if cfg.contiguity is not None:
        return np.asarray(cfg.contiguity, dtype=float)
    return grid_contiguity(cfg.n, cfg.scheme)


def simulate_panel(
    cfg: McConfig,
    rep_index: int,
    *,
    include_effects: bool = True,
    include_noise: bool = True,
) -> tuple[PanelData, WeightSequence]:
    """Draw one replication of the data-generating process.

    The fixed effects are built from auxiliary panels correlated 0.5 with the
    corresponding regressor panel, averaged over time (unit effects) and over
    units (period effects). With ``include_effects`` and ``include_noise``
    both false and all coefficients zero, the outcome reduces to the
    regressor itself, which is handy for smoke checks.
    """
    n, T = cfg.n, cfg.T
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, rep_index]))

    Y0 = rng.standard_normal(n)
    Z0 = rng.standard_normal(n)
    X1 = rng.standard_normal((T, n))
    X2 = rng.standard_normal((T, n))
    aux1 = 0.5 * X1 + np.sqrt(0.75) * rng.standard_normal((T, n))
    aux2 = 0.5 * X2 + np.sqrt(0.75) * rng.standard_normal((T, n))
    eps = rng.standard_normal((T, n))
    xi = np.sqrt(max(1.0 - cfg.delta0**2, 0.0)) * rng.standard_normal((T, n))

    if include_effects:
        c1, alpha1 = aux1.mean(axis=0), aux1.mean(axis=1)
        c2, alpha2 = aux2.mean(axis=0), aux2.mean(axis=1)
    else:
        c1 = alpha1 = c2 = alpha2 = None
    if not include_noise:
        eps = np.zeros_like(eps)
        xi = np.zeros_like(xi)
    v = cfg.delta0 * eps + xi

    Z = np.empty((T, n))
    prev = Z0
    for t in range(T):
        zt = KAPPA0 * prev + X2_COEF0 * X2[t] + eps[t]
        if include_effects:
            zt = zt + c2 + alpha2[t]
        Z[t] = zt
        prev = Z[t]

    Zpanel = np.vstack([Z0[None, :], Z])
    seq = build_weight_sequence(Zpanel, Wd=_contiguity(cfg))

    eye = np.eye(n)
    Y = np.empty((T, n))
    y_prev = Y0
    for t in range(T):
        rhs = cfg.gamma0 * y_prev + cfg.rho0 * (seq.W[t] @ y_prev) + BETA0 * X1[t] + v[t]
        if include_effects:
            rhs = rhs + c1 + alpha1[t]
        Y[t] = np.linalg.solve(eye - cfg.lambda0 * seq.W[t + 1], rhs)
        y_prev = Y[t]

    data = PanelData(
        n=n,
        T=T,
        Y=Y.reshape(-1),
        X1=X1.reshape(-1, 1),
        Z=Z.reshape(-1, 1),
        X2=X2.reshape(-1, 1),
        Y0=Y0,
        Z0=Z0.reshape(-1, 1),
        W0=seq.W[0],
    )
    return data, seq


def _run_rep(args: tuple) -> dict:
    cfg, rep_index = args
    try:
        data, seq = simulate_panel(cfg, rep_index)
        out: dict = {"ok": True, "stat": {}, "pvalue": {}, "elapsed": {}}
        for name in cfg.tests:
            result = TEST_FUNCTIONS[name](data, seq)
            out["stat"][name] = result.statistic
            out["pvalue"][name] = result.pvalue
            out["elapsed"][name] = result.elapsed_seconds
        return out
    except (EstimationError, InputError) as exc:
        return {"ok": False, "error": f"rep {rep_index}: {exc}"}


def run_cell(cfg: McConfig, workers: int = 1, keep_reps: bool = False) -> McResult:
    """Run all replications of one cell and aggregate rejection rates.

    A replication that fails with an estimation or input error is excluded
    from every test's aggregate (and counted); any other exception
    propagates. A cell whose exclusions reach 1 percent of the requested
    replications is invalid and raises instead of returning a biased
    aggregate. Results do not depend on ``workers``.
    """
    jobs = [(cfg, r) for r in range(cfg.reps)]
    if workers > 1 and cfg.reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_rep, jobs, chunksize=max(1, cfg.reps // (8 * workers))))
    else:
        rows = [_run_rep(job) for job in jobs]

    good = [r for r in rows if r["ok"]]
    failures = tuple(r["error"] for r in rows if not r["ok"])[:10]
    completed = len(good)
    excluded = cfg.reps - completed
    if excluded and excluded >= 0.01 * cfg.reps:
        raise EstimationError(
            f"cell invalid: {excluded} of {cfg.reps} replications failed estimation; "
            f"first failures: {failures[:3]}"
        )

    rejection = {}
    mc_se = {}
    mean_stat = {}
    med_elapsed = {}
    tot_elapsed = {}
    for name in cfg.tests:
        stats = [r["stat"][name] for r in good]
        pvals = [r["pvalue"][name] for r in good]
        times = [r["elapsed"][name] for r in good]
        if completed:
            rate = sum(p < cfg.level for p in pvals) / completed
            rejection[name] = rate
            mc_se[name] = float(np.sqrt(rate * (1.0 - rate) / completed))
            mean_stat[name] = float(np.mean(stats))
            med_elapsed[name] = float(statistics.median(times))
            tot_elapsed[name] = float(sum(times))
        else:
            rejection[name] = float("nan")
            mc_se[name] = float("nan")
            mean_stat[name] = float("nan")
            med_elapsed[name] = float("nan")
            tot_elapsed[name] = 0.0

    return McResult(
        config=cfg,
        requested=cfg.reps,
        completed=completed,
        excluded=excluded,
        rejection_rate=rejection,
        mc_se=mc_se,
        mean_statistic=mean_stat,
        elapsed_median=med_elapsed,
        elapsed_total=tot_elapsed,
        failure_messages=failures,
        per_rep=tuple(rows) if keep_reps else None,
    )


def _format_float(x: float) -> str:
    return format(float(x), ".17g")


def run_grid(cells: list, workers: int = 1, csv_path: str | None = None) -> list:
    """Run several cells and optionally write one long-format CSV.

    Each (cell, test) pair becomes one CSV row; ``reps`` is the completed
    count used in the denominators and ``elapsed_s`` the median per-rep time.
    """
    results = [run_cell(cfg, workers=workers) for cfg in cells]
    if csv_path is not None:
        write_grid_csv(results, csv_path)
    return results


def write_grid_csv(results: list, csv_path: str) -> None:
    """Write aggregated cell results in long format (one row per test)."""
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for res in results:
            cfg = res.config
            for name in cfg.tests:
                writer.writerow(
                    [
                        cfg.n,
                        cfg.T,
                        cfg.scheme,
                        _format_float(cfg.lambda0),
                        _format_float(cfg.gamma0),
                        _format_float(cfg.rho0),
                        _format_float(cfg.delta0),
                        name,
                        res.completed,
                        _format_float(res.rejection_rate[name]),
                        _format_float(res.mc_se[name]),
                        _format_float(res.mean_statistic[name]),
                        _format_float(res.elapsed_median[name]),
                    ]
                )


def timing_report(cells: list) -> list:
    """Median per-replication time of each test, single worker by design.

    Returns one dict per (cell, test) with the panel shape and the median
    elapsed seconds; parallel workers would distort the comparison, so the
    cells always run sequentially.
    """
    rows = []
    for cfg in cells:
        res = run_cell(cfg, workers=1)
        for name in cfg.tests:
            rows.append(
                {
                    "n": cfg.n,
                    "T": cfg.T,
                    "scheme": cfg.scheme,
                    "test": name,
                    "reps": res.completed,
                    "median_elapsed_s": res.elapsed_median[name],
                }
            )
    return rows
