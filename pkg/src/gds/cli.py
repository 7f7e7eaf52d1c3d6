"""Command-line entry point ``gds``.

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 FAIL verdict from an experiment comparison.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
from pathlib import Path
import sys


from . import __version__
from .config import (
    apply_overrides,
    experiment_to_dict,
    load_experiment,
    load_json,
    parse_densities,
    parse_perturbation,
    parse_quadrature,
)
from .densities import check_regularity
from .errors import (
    AllZeroWeights,
    ConfigError,
    DomainError,
    InsufficientMass,
    NonFinite,
    SpecBoundsViolated,
    SupportError,
    ZeroDenominator,
)
from .estimator import synth_estimate, weights
from .experiment import (
    compare_to_theory,
    dump_json,
    fits_by_cell,
    read_results_csv,
    results_csv,
    run_experiment,
    sanitize,
)
from .expansion import ExpansionInputs, theorem_ratio
from .normal_moments import SRNParams, alpha_coeff, srn_moments
from .rng import derive_stream, check_seed
from .sampler import WeightedPool, chain_prob_exact, gds_select

log = logging.getLogger("gds")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FAIL = 0, 2, 3, 4

PROTOCOL = (
    "Joint histogram over the ordered n-tuple on a fixed grid over the target support. "
    "ratio_minus_one = count / (R * P_g(cell)) - 1 with binomial standard errors. "
    "Predictions use the expansion at cell midpoints and carry an O(h^2) discretization "
    "bias that is common to all N."
)


def _setup_logging():
    level = os.environ.get("GDS_LOG", "WARNING")
    try:
        level = int(level)
    except ValueError:
        level = getattr(logging, level.upper(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _g17(x):
    return "%.17g" % x


def _common(parser):
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    parser.add_argument("--threads", type=int, help="worker processes")
    parser.add_argument(
        "--override", action="append", default=[], metavar="KEY=VAL", help="override a config field (repeatable)"
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="gds", description="generalized diversity subsampling toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("moments", help="alpha coefficients and reciprocal-normal moments as CSV")
    _common(p)
    p.add_argument("--j", type=int, help="alpha row to print (default: all rows up to k-max + 1)")
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--p", type=float, help="shift p for E[(p + sigma W)^-j]")
    p.add_argument("--sigma", type=float, help="scale sigma for E[(p + sigma W)^-j]")
    p.add_argument("--j-max", type=int, default=6, help="highest moment order")

    p = sub.add_parser("expansion", help="error-expansion breakdown as JSON")
    _common(p)
    p.add_argument("--z", type=float, nargs="+", help="tuple z_1..z_n (q = 1) overriding the config")
    p.add_argument("--N", type=float, nargs="+", help="sample sizes at which to print the total")
    p.add_argument("--allow-nonfinite", action="store_true", help="report a divergent variance as null")

    p = sub.add_parser("sample", help="one g-DS subsample with its exact chain probability")
    _common(p)
    p.add_argument("--N", type=int, help="dataset size (default: first N on the grid)")
    p.add_argument("--replication", type=int, default=0)

    p = sub.add_parser("regularity", help="ratio-moment regularity report")
    _common(p)
    p.add_argument("--m-max", type=int, default=4)

    p = sub.add_parser("experiment", help="full Monte Carlo run")
    _common(p)

    p = sub.add_parser("rate-fit", help="refit slopes from an existing results.csv")
    _common(p)
    p.add_argument("--results", type=Path, help="results.csv (default: OUT/results.csv)")
    p.add_argument("--limit", type=float, default=0.0, help="asymptote subtracted before the fit")
    p.add_argument("--exclusion", type=float, default=2.0)
    return parser


def _emit(text, out_dir, name):
    sys.stdout.write(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text)


def _record(args, required=True):
    if args.config is None:
        if required:
            raise ConfigError("missing --config", "config")
        record = {}
    else:
        record = load_json(args.config)
        if not isinstance(record, dict):
            raise ConfigError("config must be a JSON object")
    record, applied = apply_overrides(record, args.override)
    if args.seed is not None:
        record.setdefault("seeds", {})["master_seed"] = args.seed
    return record, applied


def cmd_moments(args):
    rows = []
    k_max = args.k_max
    if k_max < 0:
        raise ConfigError("must be non-negative", "k-max")
    js = [args.j] if args.j is not None else range(1, k_max + 2)
    for j in js:
        for k in range(j - 1, k_max + 1):
            rows.append(("alpha", j, k, _g17(alpha_coeff(j, k))))
    if (args.p is None) != (args.sigma is None):
        raise ConfigError("give both --p and --sigma", "p" if args.p is None else "sigma")
    if args.p is not None:
        params = SRNParams(args.p, args.sigma)
        moms = srn_moments(params, args.j_max + 1)
        for j in range(args.j_max + 1):
            rows.append(("srn_moment", j, "", _g17(moms[j])))
        for j in range(1, args.j_max + 1):
            rows.append(("srn_cross_moment", j, "", _g17(-params.sigma * j * moms[j + 1])))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("kind", "j", "k", "value"))
    w.writerows(rows)
    _emit(buf.getvalue(), args.out, "moments.csv")
    return EXIT_OK


def cmd_expansion(args):
    record, applied = _record(args)
    f, g = parse_densities(record)
    spec = parse_perturbation(record)
    quad = parse_quadrature(record)
    n = int(record.get("n", 2))
    z = args.z if args.z is not None else record.get("z")
    if z is None:
        raise ConfigError("missing required field (or pass --z)", "z")
    Ns = args.N if args.N is not None else record.get("N_grid", [])
    try:
        inputs = ExpansionInputs(f, g, spec, n, z, quad, bool(record.get("strict_paper_conventions", True)))
    except (ValueError, SupportError) as exc:
        raise ConfigError(str(exc), "z") from exc
    bd = theorem_ratio(inputs, allow_nonfinite=args.allow_nonfinite)
    out = bd.to_dict(Ns)
    out["n"] = n
    out["z"] = inputs.z.tolist()
    if applied:
        out["overrides"] = applied
    _emit(dump_json(sanitize(out)), args.out, "expansion.json")
    return EXIT_OK


def cmd_sample(args):
    record, applied = _record(args)
    f, g = parse_densities(record)
    spec = parse_perturbation(record)
    n = int(record.get("n", 2))
    N = args.N if args.N is not None else (record.get("N_grid") or [None])[0]
    if N is None:
        raise ConfigError("missing N (pass --N or give N_grid)", "N_grid")
    seed = check_seed(record.get("seeds", {}).get("master_seed", 0))
    r = args.replication
    data = f.sample(N, derive_stream(seed, N, r, "data"))
    est = synth_estimate(f, data, spec, N, derive_stream(seed, N, r, "noise"))
    w = weights(g, est, data)
    sub = gds_select(WeightedPool(w, data), n, derive_stream(seed, N, r, "selection"))
    out = {
        "N": N,
        "n": n,
        "replication": r,
        "master_seed": seed,
        "indices": list(sub.indices),
        "points": sub.draws.tolist(),
        "weights": [float(w[i]) for i in sub.indices],
        "chain_probability": chain_prob_exact(w, sub.indices),
        "clamp_count": est.clamp_count,
    }
    if applied:
        out["overrides"] = applied
    _emit(dump_json(out), args.out, "sample.json")
    return EXIT_OK


def cmd_regularity(args):
    record, _ = _record(args)
    f, g = parse_densities(record)
    report = check_regularity(f, g, args.m_max, parse_quadrature(record)).to_dict()
    _emit(dump_json(sanitize(report)), args.out, "regularity.json")
    return EXIT_OK


def cmd_experiment(args):
    if args.config is None:
        raise ConfigError("missing --config", "config")
    cfg, record, applied = load_experiment(args.config, args.override, args.seed, args.threads)
    out_dir = args.out or Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_experiment(cfg)
    (out_dir / "results.csv").write_text(results_csv(results))
    comparison = compare_to_theory(cfg, results)
    fits = {"rate_exponent": comparison["rate_exponent"], "cells": {}}
    for cell in comparison["cells"]:
        fits["cells"][cell["cell_id"]] = cell["fit"]
    dump_json(sanitize(fits), out_dir / "ratefit.json")
    report = {
        "metadata": {
            "version": __version__,
            "overrides": applied,
            "config": experiment_to_dict(cfg),
            "protocol": PROTOCOL,
        },
        "comparison": comparison,
        "verdict": comparison["verdict"],
    }
    dump_json(sanitize(report), out_dir / "report.json")
    print(f"{comparison['verdict']}: wrote results.csv, ratefit.json, report.json to {out_dir}")
    return EXIT_OK if comparison["verdict"] == "PASS" else EXIT_FAIL


def cmd_rate_fit(args):
    path = args.results or ((args.out or Path(".")) / "results.csv")
    if not path.exists():
        raise ConfigError(f"results file not found: {path}", "results")
    try:
        results = read_results_csv(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc), "results") from exc
    fits = fits_by_cell(results, args.limit, args.exclusion)
    out_dir = args.out or path.parent
    _emit(dump_json(sanitize({"limit": args.limit, "cells": fits})), out_dir, "ratefit.json")
    return EXIT_OK


COMMANDS = {
    "moments": cmd_moments,
    "expansion": cmd_expansion,
    "sample": cmd_sample,
    "regularity": cmd_regularity,
    "experiment": cmd_experiment,
    "rate-fit": cmd_rate_fit,
}


def dispatch(args):
    """Run one parsed command and map failures to exit statuses."""
    try:
        return COMMANDS[args.subcommand](args)
    except (ConfigError, SpecBoundsViolated, SupportError, DomainError) as exc:
        print(f"gds: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFinite, InsufficientMass, AllZeroWeights, ZeroDenominator, FloatingPointError) as exc:
        print(f"gds: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
