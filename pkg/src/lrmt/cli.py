"""Command-line entry point: dataset generation, experiment runs, slope fits.

Exit codes: 0 on success, 2 on configuration errors, 3 when any run diverged
(rows are still written).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import ConfigError, InvalidInputError
from .harness import (
    FAMILIES,
    load_config,
    fit_power_law,
    output_path,
    read_records,
    run_family,
    write_records,
)
from .rng import SeededRng
from .synth import linear_spectrum, make_ground_truth, sample_tasks, save_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in raw.replace(",", " ").split())


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(v) for v in raw.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrmt",
        description="Low-rank multi-task representation learning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a dataset container")
    gen.add_argument("--out", required=True, help="output container path")
    gen.add_argument("--d", type=int, default=20)
    gen.add_argument("--k", type=int, default=2)
    gen.add_argument("--t", type=int, default=40, help="task count")
    gen.add_argument("--n", type=int, default=1000, help="samples per task")
    gen.add_argument("--noise-sigma", type=float, default=0.5)
    gen.add_argument("--kappa", type=float, default=2.0)
    gen.add_argument("--sigma-k", type=float, default=1.0)
    gen.add_argument("--spectrum", type=_parse_float_list, default=None,
                     help="explicit singular values (overrides --kappa/--sigma-k)")
    gen.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", help="run an experiment family")
    run.add_argument("family", choices=FAMILIES)
    run.add_argument("--config", default=None, help="INI file with a [family] section")
    run.add_argument("--seed", dest="seeds", type=_parse_int_list, default=None,
                     help="comma-separated seed list")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--timings", action="store_true", default=None,
                     help="write measured wall times (breaks byte determinism)")
    run.add_argument("--d", type=int, default=None)
    run.add_argument("--k", type=int, default=None)
    run.add_argument("--t", dest="t_count", type=int, default=None)
    run.add_argument("--kappa", type=float, default=None)
    run.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    run.add_argument("--n-values", dest="n_values", type=_parse_int_list, default=None)
    run.add_argument("--budget", dest="iteration_budget", type=int, default=None)
    run.add_argument("--methods", type=lambda s: tuple(s.replace(",", " ").split()),
                     default=None)

    fit = sub.add_parser("fit", help="fit a power law to CSV columns")
    fit.add_argument("--csv", required=True)
    fit.add_argument("--x", required=True, help="x column (e.g. N)")
    fit.add_argument("--y", required=True, help="y column (e.g. estimation_error)")
    fit.add_argument("--method", default=None, help="restrict to one method")
    fit.add_argument("--family", default=None, help="restrict to one family")
    return parser


def _cmd_gen(args) -> int:
    spectrum = args.spectrum
    if spectrum is None:
        spectrum = linear_spectrum(args.k, args.kappa, args.sigma_k)
    rng = SeededRng(args.seed, 0)
    gt = make_ground_truth(args.d, args.k, args.t, spectrum, args.noise_sigma, rng)
    data = sample_tasks(gt, args.n, SeededRng(args.seed, 1))
    save_dataset(args.out, data, args.k)
    print(f"wrote {args.out}: d={args.d} k={args.k} T={args.t} N={args.n} "
          f"sigma={args.noise_sigma}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cli_overrides = {
        key: getattr(args, key)
        for key in ("seeds", "out", "timings", "d", "k", "t_count", "kappa",
                    "noise_sigma", "n_values", "iteration_budget", "methods")
    }
    cfg = load_config(args.family, args.config, cli_overrides)
    records = run_family(cfg)
    path = output_path(cfg)
    write_records(path, records)
    diverged = sum(1 for r in records if r.diverged)
    print(f"wrote {path}: {len(records)} rows" + (f", {diverged} diverged" if diverged else ""))
    return EXIT_DIVERGED if diverged else EXIT_OK


_X_COLUMNS = {"N": "n", "iteration": "iteration", "K2": "n", "d": "d", "k": "k", "T": "t_count"}
_Y_COLUMNS = {
    "estimation_error": "estimation_error",
    "train_loss": "train_loss",
    "balance_gap": "balance_gap",
    "dist_to_target": "dist_to_target",
}


def _cmd_fit(args) -> int:
    if args.x not in _X_COLUMNS:
        raise ConfigError(f"unsupported x column {args.x!r}; choose from {sorted(_X_COLUMNS)}")
    if args.y not in _Y_COLUMNS:
        raise ConfigError(f"unsupported y column {args.y!r}; choose from {sorted(_Y_COLUMNS)}")
    records = read_records(args.csv)
    if args.method:
        records = [r for r in records if r.method == args.method]
    if args.family:
        records = [r for r in records if r.family == args.family]
    xs = [getattr(r, _X_COLUMNS[args.x]) for r in records]
    ys = [getattr(r, _Y_COLUMNS[args.y]) for r in records]
    by_x: dict[float, list[float]] = {}
    for x, y in zip(xs, ys):
        if x > 0 and y > 0 and np.isfinite(y):
            by_x.setdefault(float(x), []).append(float(y))
    points = [(x, float(np.mean(v))) for x, v in sorted(by_x.items())]
    fit = fit_power_law(points)
    print(f"slope={fit.slope!r} intercept={fit.intercept!r} r2={fit.r2!r} "
          f"({len(points)} x-values)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "fit":
            return _cmd_fit(args)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
