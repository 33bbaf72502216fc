"""Command-line front end.

Subcommands::

    spdfilter simulate   --config cfg.json --seed N --out DIR
    spdfilter fit        --input coords.csv [--dt X] --out DIR
    spdfilter backtest   --input prices.csv --seed N --out DIR [--config cfg.json]
    spdfilter verify     [--model model.json] [--out DIR]
    spdfilter barycenter --input paths.csv [--first N] [--out DIR]

Configuration is a JSON object; command-line flags override config
keys.  Exit codes: 0 success, 1 verification failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import expectation, geometry, symlinalg
from .backtest import (
    BenchmarkConfig,
    CovObservationSeries,
    load_prices,
    report_to_csv,
    report_to_markdown,
    rolling_cov,
    sequential_validation,
    synthetic_prices,
)
from .errors import SpdFilterError
from .filtering import SsmParams, mle_fit, simulate_ssm
from .manifolds import SpdManifold

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2

# SPDFILTER_LOG controls verbosity only (DEBUG/INFO/WARNING/ERROR)
log = logging.getLogger("spdfilter")

SIMULATE_KEYS = {
    "dim": "matrix dimension D (default 2)",
    "steps": "number of simulation steps (default 1000)",
    "dt": "sampling interval in time units (default 1.0)",
    "A": "per-coordinate drift rate, scalar or list (1/time; default 0)",
    "C": "per-coordinate signal noise scale (default 0.1)",
    "H": "per-coordinate observation gain (default 1)",
    "K": "per-coordinate observation noise scale (default 0.25)",
    "x0": "initial SPD matrix, flattened row-major (default 1e-4*[[1,.3],[.3,1.5]])",
}

BACKTEST_KEYS = {
    "window": "rolling window length in days (default 7; 0 = choose by validation)",
    "window_grid": "candidate windows for sequential validation (default [5,7,10,15])",
    "warmup": "observations consumed before forecasts start (default 15)",
    "gammas": "risk-aversion levels (default [0, 0.5, 1])",
    "bootstrap_B": "bootstrap resamples (default 10000)",
    "alpha": "CI tail mass (default 0.05)",
    "methods": "subset of nkf,euc,nkf-int,nkf-ext (default all)",
    "split": "validation fraction (default 0.25)",
}


def _fail_usage(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _load_config(path, allowed: set) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SpdFilterError(f"cannot read config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise SpdFilterError("config must be a JSON object")
    unknown = set(cfg) - allowed
    if unknown:
        raise SpdFilterError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _coord_array(value, d: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size == 1:
        return np.full(d, float(arr[0]))
    if arr.size != d:
        raise SpdFilterError(f"{name} must be scalar or length {d}")
    return arr


def _write(path, text) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, set(SIMULATE_KEYS))
    dim = int(cfg.get("dim", 2))
    steps = int(cfg.get("steps", 1000))
    dt = float(cfg.get("dt", 1.0))
    if dt <= 0:
        raise SpdFilterError("dt must be positive")
    if dim < 1 or steps < 1:
        raise SpdFilterError("dim and steps must be positive")
    manifold = SpdManifold(dim)
    d = manifold.coord_dim
    params = SsmParams(
        A=_coord_array(cfg.get("A", 0.0), d, "A"),
        C=_coord_array(cfg.get("C", 0.1), d, "C"),
        H=_coord_array(cfg.get("H", 1.0), d, "H"),
        K=_coord_array(cfg.get("K", 0.25), d, "K"),
        dt=dt,
    )
    if "x0" in cfg:
        x0 = np.asarray(cfg["x0"], dtype=float).reshape(dim, dim)
    elif dim == 2:
        x0 = 1e-4 * np.array([[1.0, 0.3], [0.3, 1.5]])
    else:
        x0 = 1e-4 * np.eye(dim)
    sim = simulate_ssm(params, x0, T=steps, seed=args.seed, manifold=manifold)

    os.makedirs(args.out, exist_ok=True)
    labels = [f"m_{i}_{j}" for i in range(dim) for j in range(dim)]
    lines = ["time,series," + ",".join(labels)]
    for name, pts in (("latent", sim.latent), ("observed", sim.observed)):
        for t, p in zip(sim.times, pts):
            flat = ",".join(f"{v:.12e}" for v in np.asarray(p).reshape(-1))
            lines.append(f"{t:.6f},{name},{flat}")
    paths_file = os.path.join(args.out, "paths.csv")
    _write(paths_file, "\n".join(lines) + "\n")

    coord_labels = [f"c{i}" for i in range(d)]
    lines = ["time,series," + ",".join(coord_labels)]
    for name, arr in (("latent", sim.latent_coords), ("observed", sim.obs_coords)):
        for t, row in zip(sim.times, arr):
            lines.append(
                f"{t:.6f},{name}," + ",".join(f"{v:.12e}" for v in row)
            )
    coords_file = os.path.join(args.out, "coords.csv")
    _write(coords_file, "\n".join(lines) + "\n")
    print(f"wrote {paths_file} and {coords_file}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    import pandas as pd

    frame = pd.read_csv(args.input)
    if "series" in frame.columns:
        frame = frame[frame["series"] == "observed"]
    coord_cols = [c for c in frame.columns if c.startswith("c")]
    if not coord_cols:
        raise SpdFilterError("no coordinate columns (c0, c1, ...) in input")
    z = frame[coord_cols].to_numpy(float)
    params, ll = mle_fit(z, dt=args.dt)
    payload = {
        "A": params.A.tolist(),
        "C": params.C.tolist(),
        "H": params.H.tolist(),
        "K": params.K.tolist(),
        "dt": params.dt,
        "loglik": ll,
    }
    os.makedirs(args.out, exist_ok=True)
    out_file = os.path.join(args.out, "fitted_params.json")
    _write(out_file, json.dumps(payload, indent=1) + "\n")
    print(f"wrote {out_file} (loglik {ll:.4f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# backtest


def cmd_backtest(args) -> int:
    cfg = _load_config(args.config, set(BACKTEST_KEYS))
    if args.input is None:
        raise SpdFilterError("--input is required (price CSV)")
    panel = load_prices(args.input)
    log.info("loaded %d dates x %d tickers", panel.n_dates, len(panel.tickers))
    window = int(cfg.get("window", 7))
    if window == 0:
        grid = cfg.get("window_grid", [5, 7, 10, 15])
        window = sequential_validation(panel, grid, float(cfg.get("split", 0.25)))
        print(f"sequential validation chose window {window}")
    series = rolling_cov(panel, window)
    log.info("built %d rolling covariance observations (window %d)",
             len(series), window)
    if args.methods:
        methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    else:
        methods = tuple(cfg.get("methods", list(BenchmarkConfig.methods)))
    config = BenchmarkConfig(
        warmup=int(cfg.get("warmup", 15)),
        gammas=tuple(float(g) for g in cfg.get("gammas", (0.0, 0.5, 1.0))),
        params=None,
        methods=methods,
        bootstrap_B=int(cfg.get("bootstrap_B", 10_000)),
        alpha=float(cfg.get("alpha", 0.05)),
        seed=args.seed,
    )
    from .backtest import run_benchmark

    report = run_benchmark(series, config)
    os.makedirs(args.out, exist_ok=True)
    csv_file = os.path.join(args.out, "report.csv")
    md_file = os.path.join(args.out, "report.md")
    _write(csv_file, report_to_csv(report))
    _write(md_file, report_to_markdown(report))
    print(f"wrote {csv_file} and {md_file}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    checks = []

    def check(name, ok, detail=""):
        checks.append(ok)
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name}" + (f"  ({detail})" if detail else ""))

    if args.model:
        models = {os.path.basename(args.model): expectation.load_model(args.model)}
    else:
        models = expectation.bundled_models()

    for name, model in models.items():
        path = expectation.geodesic_ce(model, substeps=2)
        check(f"{name}: estimator output filtration-measurable",
              path.is_measurable(model, tol=0.0))
        ext = expectation.horizontal_extend(path, model.times[-1] / 2.0)
        ext2 = expectation.horizontal_extend(ext, model.times[-1] / 2.0)
        same = all(
            model.manifold.points_equal(ext.point(a, k), ext2.point(a, k))
            for a in range(model.n_atoms)
            for k in range(model.n_times)
        )
        check(f"{name}: horizontal extension idempotent", same)

        if model.manifold.kind == "euclidean":
            ok = True
            for substeps in (1, 4):
                ce = expectation.geodesic_ce(model, substeps=substeps)
                for k in range(1, model.n_times):
                    means = expectation.classical_conditional_means(model, k)
                    for mean, cell in zip(means, model.filtration[k]):
                        for atom in cell:
                            ok &= bool(
                                np.linalg.norm(ce.point(atom, k) - mean) < 1e-12
                            )
            check(f"{name}: flat-space reduction to conditional means", ok)
        else:
            gaps, diameter = expectation.equivalence_study(
                model, substeps_values=(1, 2, 4, 8, 16, 32, 64)
            )
            ok = gaps[-1] <= gaps[0] + 1e-15 and gaps[-1] <= 1e-2 * max(diameter, 1e-12)
            check(
                f"{name}: recursive estimator converges to variational one",
                ok,
                f"gap {gaps[0]:.2e} -> {gaps[-1]:.2e}, diameter {diameter:.2e}",
            )

        report = expectation.gamma_limit_identity_check(model)
        deterministic = model.n_atoms == 1
        if deterministic:
            ok = report.min_F == 0.0 and report.terminal_gap == 0.0
        else:
            ok = report.relative_gap < 5e-2
        check(
            f"{name}: variational limit identity",
            ok,
            f"min_F {report.min_F:.4e}, inf_Fn[-1] {report.inf_Fn[-1]:.4e}, "
            f"relative gap {report.relative_gap:.2e}",
        )

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(
            os.path.join(args.out, "verify.txt"),
            "".join(
                f"check {i}: {'PASS' if ok else 'FAIL'}\n"
                for i, ok in enumerate(checks)
            ),
        )
    return EXIT_OK if all(checks) else EXIT_VERIFY_FAIL


# ---------------------------------------------------------------------------
# barycenter


def cmd_barycenter(args) -> int:
    import pandas as pd

    frame = pd.read_csv(args.input)
    if "series" in frame.columns:
        frame = frame[frame["series"] == args.series]
    mat_cols = [c for c in frame.columns if c.startswith("m_")]
    if not mat_cols:
        raise SpdFilterError("no matrix columns (m_i_j) in input")
    dim = int(np.sqrt(len(mat_cols)))
    rows = frame[mat_cols].to_numpy(float)
    if args.first:
        rows = rows[: args.first]
    points = [symlinalg.symmetrize(r.reshape(dim, dim)) for r in rows]
    intrinsic = geometry.intrinsic_barycenter(geometry.WeightedPointCloud.of(points))
    extrinsic = geometry.extrinsic_barycenter(points)
    payload = {
        "count": len(points),
        "intrinsic": intrinsic.reshape(-1).tolist(),
        "extrinsic": extrinsic.reshape(-1).tolist(),
        "distance_between": geometry.spd_distance(intrinsic, extrinsic),
    }
    text = json.dumps(payload, indent=1) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        out_file = os.path.join(args.out, "barycenter.json")
        _write(out_file, text)
        print(f"wrote {out_file}")
    else:
        print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _key_help(keys: dict) -> str:
    return "config keys:\n" + "\n".join(
        f"  {k:14s} {v}" for k, v in keys.items()
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdfilter",
        description="Geodesic estimation and non-Euclidean Kalman filtering "
        "on covariance matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "simulate",
        help="simulate the coupled latent/observed SPD model",
        epilog=_key_help(SIMULATE_KEYS),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", help="JSON config path")
    p.add_argument("--seed", type=int, required=True, help="RNG seed (required)")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit per-coordinate state-space parameters")
    p.add_argument("--input", required=True, help="coords.csv from simulate")
    p.add_argument("--dt", type=float, default=1.0, help="sampling interval")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser(
        "backtest",
        help="run the covariance forecasting benchmark on a price CSV",
        epilog=_key_help(BACKTEST_KEYS),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--input", required=True, help="price CSV (date,<tickers...>)")
    p.add_argument("--config", help="JSON config path")
    p.add_argument("--seed", type=int, required=True, help="RNG seed (required)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--methods", help="comma-separated subset of nkf,euc,nkf-int,nkf-ext"
                   " (overrides the config)")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser(
        "verify",
        help="run the estimator equivalence and variational limit checks",
    )
    p.add_argument("--model", help="optional model JSON instead of bundled models")
    p.add_argument("--out", help="optional output directory for verify.txt")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("barycenter", help="barycenters of observed matrices")
    p.add_argument("--input", required=True, help="paths.csv from simulate")
    p.add_argument("--series", default="observed", help="series id to use")
    p.add_argument("--first", type=int, default=0, help="use only the first N rows")
    p.add_argument("--out", help="optional output directory")
    p.set_defaults(func=cmd_barycenter)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("SPDFILTER_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except SpdFilterError as exc:
        return _fail_usage(str(exc))
    except FileNotFoundError as exc:
        return _fail_usage(str(exc))


if __name__ == "__main__":
    sys.exit(main())
