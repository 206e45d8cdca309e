"""Command-line interface: weights, test, estimate, simulate.

Panels travel as long-format CSV with columns ``unit,time,y,x1_*,x2_*,z_*``;
rows with ``time = 0`` carry the initial outcome and drivers (their x cells
may be empty). Weight matrices travel as dense CSV files listed by an
``index.json``. Every command that writes output also writes a
``manifest.json`` recording the command, configuration digest, seed,
package version, input digests, and wall time.

Exit codes: 0 on success, 2 for invalid input or usage, 3 for estimation
failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import EstimationError, InputError, PanelData
from .estimation import fit_full, fit_joint_null, fit_null_delta
from .montecarlo import McConfig, run_grid, simulate_panel
from .tests import chi2_critical, clm, rs_robust, rs_standard
from .weights import WeightSequence, build_weight_sequence, grid_contiguity

TEST_BY_NAME = {"RS": rs_standard, "RS_robust": rs_robust, "CLM": clm}

POWER_DELTAS = (0.05, 0.1, 0.15, 0.2)
SWEEP = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)


# ---------------------------------------------------------------------------
# Panel CSV
# ---------------------------------------------------------------------------


def _column_group(fieldnames: list, prefix: str) -> list:
    """Columns named prefix_1, prefix_2, ... sorted by suffix."""
    found = []
    for name in fieldnames:
        if name.startswith(prefix + "_"):
            suffix = name[len(prefix) + 1 :]
            if not suffix.isdigit():
                raise InputError(f"column {name!r} must end in an integer suffix")
            found.append((int(suffix), name))
    found.sort()
    expected = list(range(1, len(found) + 1))
    if [i for i, _ in found] != expected:
        raise InputError(f"columns for {prefix!r} must be numbered 1..k without gaps")
    return [name for _, name in found]


def read_panel_csv(path: str) -> PanelData:
    """Read a long-format panel CSV into stacked arrays."""
    if not os.path.exists(path):
        raise InputError(f"{path}: panel file not found")
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        fields = list(reader.fieldnames)
        for required in ("unit", "time", "y"):
            if required not in fields:
                raise InputError(f"{path}: missing required column {required!r}")
        x1_cols = _column_group(fields, "x1")
        x2_cols = _column_group(fields, "x2")
        z_cols = _column_group(fields, "z")
        if not x1_cols or not x2_cols or not z_cols:
            raise InputError(f"{path}: needs at least one x1_*, x2_*, and z_* column")
        rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")

    try:
        units = sorted({int(r["unit"]) for r in rows})
        times = sorted({int(r["time"]) for r in rows})
    except (KeyError, ValueError) as exc:
        raise InputError(f"{path}: unit and time must be integers") from exc
    n = len(units)
    if times[0] != 0:
        raise InputError(f"{path}: rows with time = 0 (initial conditions) are required")
    T = times[-1]
    if times != list(range(T + 1)):
        raise InputError(f"{path}: time values must cover 0..T without gaps")
    unit_pos = {u: i for i, u in enumerate(units)}

    seen = set()
    Y0 = np.full(n, np.nan)
    Z0 = np.full((n, len(z_cols)), np.nan)
    Y = np.full((T, n), np.nan)
    X1 = np.full((T, n, len(x1_cols)), np.nan)
    X2 = np.full((T, n, len(x2_cols)), np.nan)
    Z = np.full((T, n, len(z_cols)), np.nan)

    def cell(row: dict, col: str, where: str) -> float:
        raw = (row.get(col) or "").strip()
        if raw == "":
            raise InputError(f"{path}: empty {col!r} value at {where}")
        try:
            return float(raw)
        except ValueError as exc:
            raise InputError(f"{path}: non-numeric {col!r} value {raw!r} at {where}") from exc

    for row in rows:
        u, t = int(row["unit"]), int(row["time"])
        key = (u, t)
        if key in seen:
            raise InputError(f"{path}: duplicate row for unit {u}, time {t}")
        seen.add(key)
        i = unit_pos[u]
        where = f"unit {u}, time {t}"
        if t == 0:
            Y0[i] = cell(row, "y", where)
            for j, col in enumerate(z_cols):
                Z0[i, j] = cell(row, col, where)
        else:
            Y[t - 1, i] = cell(row, "y", where)
            for j, col in enumerate(x1_cols):
                X1[t - 1, i, j] = cell(row, col, where)
            for j, col in enumerate(x2_cols):
                X2[t - 1, i, j] = cell(row, col, where)
            for j, col in enumerate(z_cols):
                Z[t - 1, i, j] = cell(row, col, where)

    if len(seen) != n * (T + 1):
        raise InputError(f"{path}: panel is unbalanced ({len(seen)} rows, expected {n * (T + 1)})")
    return PanelData(
        n=n,
        T=T,
        Y=Y.reshape(-1),
        X1=X1.reshape(T * n, -1),
        Z=Z.reshape(T * n, -1),
        X2=X2.reshape(T * n, -1),
        Y0=Y0,
        Z0=Z0,
    )


def write_panel_csv(data: PanelData, path: str) -> None:
    """Write a panel in the long format that ``read_panel_csv`` accepts."""
    header = (
        ["unit", "time", "y"]
        + [f"x1_{j + 1}" for j in range(data.k1)]
        + [f"x2_{j + 1}" for j in range(data.k2)]
        + [f"z_{j + 1}" for j in range(data.p)]
    )
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(data.n):
            writer.writerow(
                [i + 1, 0, fmt(data.Y0[i])]
                + [""] * (data.k1 + data.k2)
                + [fmt(v) for v in np.atleast_1d(data.Z0[i])]
            )
        for t in range(1, data.T + 1):
            for i in range(data.n):
                row = (t - 1) * data.n + i
                writer.writerow(
                    [i + 1, t, fmt(data.Y[row])]
                    + [fmt(v) for v in data.X1[row]]
                    + [fmt(v) for v in data.X2[row]]
                    + [fmt(v) for v in data.Z[row]]
                )


# ---------------------------------------------------------------------------
# Weight CSV directory
# ---------------------------------------------------------------------------


def write_weights_dir(seq: WeightSequence, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for t in range(0, seq.T + 1):
        if seq.W[t] is None:
            continue
        name = f"W_{t}.csv"
        np.savetxt(out / name, seq.W[t], delimiter=",", fmt="%.17g")
        files[str(t)] = name
    index = {"n": seq.n, "T": seq.T, "files": files}
    (out / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")


def read_weights_dir(path: str) -> WeightSequence:
    index_path = Path(path) / "index.json"
    if not index_path.exists():
        raise InputError(f"{path}: missing index.json")
    try:
        index = json.loads(index_path.read_text())
        n, T = int(index["n"]), int(index["T"])
        files = dict(index["files"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{index_path}: malformed weight index") from exc
    mats = []
    for t in range(0, T + 1):
        name = files.get(str(t))
        if name is None:
            if t == 0:
                mats.append(None)
                continue
            raise InputError(f"{index_path}: missing file entry for period {t}")
        fpath = Path(path) / name
        if not fpath.exists():
            raise InputError(f"{fpath}: weight file listed in index.json not found")
        W = np.loadtxt(fpath, delimiter=",", ndmin=2)
        mats.append(W)
    return WeightSequence(n=n, T=T, W=tuple(mats))


def _driver_panel(data: PanelData) -> np.ndarray:
    Z0 = np.atleast_2d(data.Z0.reshape(data.n, -1))
    Z = data.Z.reshape(data.T, data.n, -1)
    return np.concatenate([Z0[None, :, :], Z], axis=0)


def read_drivers_csv(path: str) -> np.ndarray:
    """Read a long-format driver CSV (unit, time, z_*) into a (T+1, n, p) array.

    Rows with time = 0 supply the initial drivers; the layout matches the
    z columns of the panel format, so a full panel CSV also works.
    """
    if not os.path.exists(path):
        raise InputError(f"{path}: drivers file not found")
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        fields = list(reader.fieldnames)
        for required in ("unit", "time"):
            if required not in fields:
                raise InputError(f"{path}: missing required column {required!r}")
        z_cols = _column_group(fields, "z")
        if not z_cols:
            raise InputError(f"{path}: needs at least one z_* column")
        rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")
    try:
        units = sorted({int(r["unit"]) for r in rows})
        times = sorted({int(r["time"]) for r in rows})
    except ValueError as exc:
        raise InputError(f"{path}: unit and time must be integers") from exc
    n = len(units)
    if times[0] != 0 or times != list(range(times[-1] + 1)):
        raise InputError(f"{path}: time values must cover 0..T without gaps")
    T = times[-1]
    unit_pos = {u: i for i, u in enumerate(units)}
    Z = np.full((T + 1, n, len(z_cols)), np.nan)
    seen = set()
    for row in rows:
        u, t = int(row["unit"]), int(row["time"])
        if (u, t) in seen:
            raise InputError(f"{path}: duplicate row for unit {u}, time {t}")
        seen.add((u, t))
        for j, col in enumerate(z_cols):
            raw = (row.get(col) or "").strip()
            if raw == "":
                raise InputError(f"{path}: empty {col!r} value at unit {u}, time {t}")
            try:
                Z[t, unit_pos[u], j] = float(raw)
            except ValueError as exc:
                raise InputError(
                    f"{path}: non-numeric {col!r} value {raw!r} at unit {u}, time {t}"
                ) from exc
    if len(seen) != n * (T + 1):
        raise InputError(f"{path}: drivers are unbalanced ({len(seen)} rows)")
    return Z


def _load_contiguity(path: str, n: int) -> np.ndarray:
    """Read a dense 0/1 contiguity CSV and check it is n-by-n."""
    if not os.path.exists(path):
        raise InputError(f"{path}: contiguity file not found")
    Wd = np.loadtxt(path, delimiter=",", ndmin=2)
    if Wd.shape != (n, n):
        raise InputError(f"contiguity matrix is {Wd.shape}, expected ({n}, {n})")
    return Wd


def build_sequence_for(data: PanelData, args) -> WeightSequence:
    """Resolve the weight sequence from --weights, --contiguity, or --scheme."""
    chosen = [x for x in (args.weights, args.contiguity, args.scheme) if x]
    if len(chosen) != 1:
        raise InputError("provide exactly one of --weights, --contiguity, --scheme")
    if args.weights:
        seq = read_weights_dir(args.weights)
        if seq.n != data.n or seq.T != data.T:
            raise InputError(
                f"weights cover (n, T) = ({seq.n}, {seq.T}) but the panel is ({data.n}, {data.T})"
            )
        return seq
    if args.contiguity:
        Wd = _load_contiguity(args.contiguity, data.n)
        return build_weight_sequence(_driver_panel(data), Wd=Wd)
    return build_weight_sequence(_driver_panel(data), scheme=args.scheme)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: str,
    command: str,
    config: dict,
    seed: int | None,
    inputs: list,
    wall_time_s: float,
) -> None:
    config_json = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": json.loads(config_json),
        "config_sha256": hashlib.sha256(config_json.encode()).hexdigest(),
        "input_digests": {p: _sha256(p) for p in inputs if p and os.path.exists(p)},
        "wall_time_s": wall_time_s,
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _theta_dict(theta) -> dict:
    return {
        "lambda": theta.lam,
        "gamma": theta.gamma,
        "rho": theta.rho,
        "beta": theta.beta.tolist(),
        "delta": theta.delta.tolist(),
        "kappa": theta.kappa.tolist(),
        "Gamma": theta.Gamma.tolist(),
        "sigma_xi2": theta.sigma_xi2,
        "Sigma_eps": theta.Sigma_eps.tolist(),
    }


def cmd_weights(args) -> int:
    t0 = time.perf_counter()
    if not args.scheme and not args.contiguity:
        raise InputError("provide --scheme or --contiguity")
    if args.scheme and args.contiguity:
        raise InputError("provide only one of --scheme and --contiguity")
    if args.scheme and args.n is not None:
        grid_contiguity(args.n, args.scheme)  # fail fast on impossible lattices
    if not args.drivers:
        raise InputError("a --drivers CSV is required to build per-period weights")
    Zpanel = read_drivers_csv(args.drivers)
    n = Zpanel.shape[1]
    if args.n is not None and args.n != n:
        raise InputError(f"--n {args.n} does not match the drivers file ({n} units)")
    if args.contiguity:
        seq = build_weight_sequence(Zpanel, Wd=_load_contiguity(args.contiguity, n))
    else:
        seq = build_weight_sequence(Zpanel, scheme=args.scheme)
    write_weights_dir(seq, args.out)
    write_manifest(
        args.out,
        "weights",
        {"drivers": args.drivers, "scheme": args.scheme, "contiguity": args.contiguity},
        None,
        [args.drivers, args.contiguity],
        time.perf_counter() - t0,
    )
    print(f"wrote {seq.T + (1 if seq.has_initial else 0)} weight matrices to {args.out}")
    return 0


def _parse_tests(raw: str) -> tuple:
    names = tuple(s.strip() for s in raw.split(",") if s.strip())
    unknown = [s for s in names if s not in TEST_BY_NAME]
    if unknown:
        raise InputError(f"unknown tests {unknown}; available: {sorted(TEST_BY_NAME)}")
    if not names:
        raise InputError("at least one test name is required")
    return names


def cmd_test(args) -> int:
    t0 = time.perf_counter()
    data = read_panel_csv(args.panel)
    seq = build_sequence_for(data, args)
    names = _parse_tests(args.tests)
    results = []
    for name in names:
        res = TEST_BY_NAME[name](data, seq)
        results.append(res)
        decision = "reject" if res.reject_at[0.05] else "keep"
        critical = chi2_critical(0.05, res.df)
        print(
            f"{res.name:>10s}  stat={res.statistic:.6f}  df={res.df}  "
            f"critical(5%)={critical:.4f}  pvalue={res.pvalue:.6f}  H0: {decision}"
        )
    if args.out:
        payload = [
            {
                "name": r.name,
                "statistic": r.statistic,
                "df": r.df,
                "pvalue": r.pvalue,
                "reject_at_0.05": bool(r.reject_at[0.05]),
                "elapsed_seconds": r.elapsed_seconds,
            }
            for r in results
        ]
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        write_manifest(
            out_path.parent,
            "test",
            {"panel": args.panel, "tests": list(names), "scheme": args.scheme,
             "contiguity": args.contiguity, "weights": args.weights},
            None,
            [args.panel, args.contiguity],
            time.perf_counter() - t0,
        )
    return 0


def cmd_estimate(args) -> int:
    t0 = time.perf_counter()
    data = read_panel_csv(args.panel)
    seq = build_sequence_for(data, args)
    if args.restrict == "joint-null":
        fit = fit_joint_null(data)
    elif args.restrict == "delta-null":
        fit = fit_null_delta(data, seq)
    else:
        fit = fit_full(data, seq)
    print(
        f"restriction={fit.restriction}  loglik={fit.loglik:.6f}  "
        f"converged={fit.converged}  iterations={fit.iterations}"
    )
    for label, theta in (("estimate", fit.theta), ("bias-corrected", fit.theta_bc)):
        print(
            f"  {label}: lambda={theta.lam:.6f} gamma={theta.gamma:.6f} "
            f"rho={theta.rho:.6f} beta={np.array2string(theta.beta, precision=6)} "
            f"delta={np.array2string(theta.delta, precision=6)} sigma_xi2={theta.sigma_xi2:.6f}"
        )
    if args.out:
        payload = {
            "restriction": fit.restriction,
            "loglik": fit.loglik,
            "converged": fit.converged,
            "iterations": fit.iterations,
            "theta": _theta_dict(fit.theta),
            "theta_bc": _theta_dict(fit.theta_bc),
        }
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        write_manifest(
            out_path.parent,
            "estimate",
            {"panel": args.panel, "restrict": args.restrict, "scheme": args.scheme,
             "contiguity": args.contiguity, "weights": args.weights},
            None,
            [args.panel, args.contiguity],
            time.perf_counter() - t0,
        )
    return 0


def _dedupe(cells: list) -> list:
    seen = set()
    out = []
    for cfg in cells:
        key = (cfg.n, cfg.T, cfg.scheme, cfg.lambda0, cfg.gamma0, cfg.rho0, cfg.delta0, cfg.tests)
        if key not in seen:
            seen.add(key)
            out.append(cfg)
    return out


def preset_cells(table: int, n: int, T: int, reps: int, seed: int, level: float) -> tuple[list, bool]:
    """Experiment cells for a preset grid; returns (cells, force_single_worker).

    Preset 2 sweeps each spatial coefficient for size, preset 3 compares test
    timings, presets 4 and 5 sweep the endogeneity strength for power (4 is
    conventionally the short panel, 5 the long one; both honor the given
    n and T).
    """
    cells: list = []
    if table == 2:
        for scheme in ("queen", "rook"):
            for param in ("lambda0", "gamma0", "rho0"):
                for val in SWEEP:
                    cells.append(
                        McConfig(
                            n=n, T=T, reps=reps, scheme=scheme, seed=seed, level=level,
                            tests=("RS", "RS_robust"), **{param: val},
                        )
                    )
        return _dedupe(cells), False
    if table == 3:
        cells = [
            McConfig(
                n=n, T=T, reps=reps, scheme=scheme, seed=seed, level=level,
                tests=("RS", "RS_robust", "CLM"),
            )
            for scheme in ("queen", "rook")
        ]
        return cells, True
    if table in (4, 5):
        for scheme in ("queen", "rook"):
            for lam in (0.0, 0.05):
                for delta0 in POWER_DELTAS:
                    cells.append(
                        McConfig(
                            n=n, T=T, reps=reps, scheme=scheme, seed=seed, level=level,
                            lambda0=lam, delta0=delta0, tests=("RS", "RS_robust"),
                        )
                    )
        return _dedupe(cells), False
    raise InputError(f"unknown table preset {table}; expected 2, 3, 4, or 5")


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    if args.reps < 1:
        raise InputError(f"--reps must be at least 1, got {args.reps}")
    workers = args.threads
    if args.table is not None:
        defaults = {2: (100, 10), 3: (100, 10), 4: (100, 10), 5: (9, 100)}
        d_n, d_T = defaults[args.table] if args.table in defaults else (args.n, args.T)
        n = args.n if args.n is not None else d_n
        T = args.T if args.T is not None else d_T
        cells, force_single = preset_cells(args.table, n, T, args.reps, args.seed, args.level)
        if force_single:
            workers = 1
    else:
        if args.n is None or args.T is None:
            raise InputError("--n and --T are required without --table")
        cells = [
            McConfig(
                n=args.n,
                T=args.T,
                reps=args.reps,
                scheme=args.scheme or "queen",
                lambda0=args.lambda0,
                gamma0=args.gamma0,
                rho0=args.rho0,
                delta0=args.delta0,
                level=args.level,
                seed=args.seed,
                tests=_parse_tests(args.tests),
            )
        ]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_grid(cells, workers=workers, csv_path=str(out_dir / "results.csv"))

    if args.dump_panel:
        data, _ = simulate_panel(cells[0], 0)
        write_panel_csv(data, args.dump_panel)

    excluded = sum(r.excluded for r in results)
    config = {
        "table": args.table,
        "cells": [
            {
                "n": c.n, "T": c.T, "reps": c.reps, "scheme": c.scheme,
                "lambda0": c.lambda0, "gamma0": c.gamma0, "rho0": c.rho0,
                "delta0": c.delta0, "level": c.level, "tests": list(c.tests),
            }
            for c in cells
        ],
        "threads": workers,
    }
    write_manifest(str(out_dir), "simulate", config, args.seed, [], time.perf_counter() - t0)
    print(f"ran {len(cells)} cells x {args.reps} reps ({excluded} excluded); results in {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def _add_weight_source(sub) -> None:
    sub.add_argument("--scheme", choices=["queen", "rook"], help="lattice contiguity scheme")
    sub.add_argument("--contiguity", help="dense 0/1 contiguity CSV (composed with drivers)")
    sub.add_argument("--weights", help="directory of weight CSVs with index.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdpd",
        description="Spatial dynamic panels with endogenous time-varying weights",
    )
    parser.add_argument("--config", help="JSON file of argument defaults (flags win)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    w = subs.add_parser("weights", help="build per-period weight matrices from driver data")
    w.add_argument("--drivers", help="long-format driver CSV (unit, time, z_*)")
    w.add_argument("--n", type=int, help="expected number of spatial units (validated)")
    w.add_argument("--scheme", choices=["queen", "rook"], help="lattice contiguity scheme")
    w.add_argument("--contiguity", help="dense 0/1 contiguity CSV (composed with drivers)")
    w.add_argument("--out", required=True, help="output directory")
    w.set_defaults(func=cmd_weights)

    t = subs.add_parser("test", help="run endogeneity score tests on a panel")
    t.add_argument("--panel", required=True, help="long-format panel CSV")
    _add_weight_source(t)
    t.add_argument("--tests", default="RS,RS_robust", help="comma list: RS,RS_robust,CLM")
    t.add_argument("--out", help="write a JSON report here")
    t.set_defaults(func=cmd_test)

    e = subs.add_parser("estimate", help="fit the model by maximum likelihood")
    e.add_argument("--panel", required=True, help="long-format panel CSV")
    _add_weight_source(e)
    e.add_argument(
        "--restrict",
        choices=["joint-null", "delta-null", "none"],
        default="none",
        help="parameter restriction for the fit",
    )
    e.add_argument("--out", help="write the fitted parameters as JSON here")
    e.set_defaults(func=cmd_estimate)

    s = subs.add_parser("simulate", help="run seeded Monte Carlo experiments")
    s.add_argument("--table", type=int, choices=[2, 3, 4, 5], help="preset experiment grid")
    s.add_argument("--n", type=int, help="spatial units")
    s.add_argument("--T", type=int, help="time periods")
    s.add_argument("--reps", type=int, default=1000, help="replications per cell")
    s.add_argument("--scheme", choices=["queen", "rook"], help="lattice scheme (explicit cells)")
    s.add_argument("--lambda0", type=float, default=0.0)
    s.add_argument("--gamma0", type=float, default=0.0)
    s.add_argument("--rho0", type=float, default=0.0)
    s.add_argument("--delta0", type=float, default=0.0)
    s.add_argument("--level", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tests", default="RS,RS_robust", help="comma list: RS,RS_robust,CLM")
    s.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("SDPD_THREADS", "1")),
        help="worker processes (default: SDPD_THREADS or 1)",
    )
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--dump-panel", help="also write the first replication's panel CSV here")
    s.set_defaults(func=cmd_simulate)
    return parser


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list) -> list:
    """Load --config JSON as defaults; explicit flags still win."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return argv
    try:
        raw = json.loads(Path(known.config).read_text())
    except OSError as exc:
        raise InputError(f"cannot read config file {known.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {known.config} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError(f"config file {known.config} must hold a JSON object")
    parser.set_defaults(**raw)
    # Subparsers resolve their own defaults, so push matching keys down too.
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                keys = {a.dest for a in sub._actions}
                sub.set_defaults(**{k: v for k, v in raw.items() if k in keys})
    return argv


def main(argv: list | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
