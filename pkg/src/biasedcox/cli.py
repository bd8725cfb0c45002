"""Command-line interface: ``biasedcox {fit,simulate,km,baseline,report}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import simulation, truncation
from .cox import SolverConfig
from .data import Schema, load_csv
from .errors import InputError, NonConvergence
from .estimators import fit_ppl, fit_reference_pl, fit_wee
from .inference import breslow_baseline
from .weights import CensoringWeights, km_residual_censoring, nelson_aalen_residual_censoring

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGENCE, EXIT_INTERNAL = 0, 2, 3, 4


def _add_data_args(p):
    p.add_argument("input", help="CSV file with a header row")
    p.add_argument("--a-col", default="a")
    p.add_argument("--y-col", default="y")
    p.add_argument("--delta-col", default="delta")
    p.add_argument("--z-cols", default=None, help="comma-separated covariate columns (default: z1..zp)")


def _add_fit_args(p):
    p.add_argument("--method", choices=("ppl", "wee", "pl"), default="ppl")
    p.add_argument("--truncation", default='{"family":"exponential","rate":1.0}', help="JSON truncation spec")
    p.add_argument("--reps", type=int, default=10, help="PPL replications L")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--halvings", type=int, default=20)
    p.add_argument("--kernel", choices=("density", "convolution"), default="density")
    p.add_argument("--variance", choices=("derived", "literal"), default="derived")
    p.add_argument("--floor-eps", type=float, default=1e-12)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="biasedcox", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a Cox model and write a JSON FitResult")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.add_argument("--verify", action="store_true", help="run numerical self-checks on the data")

    p = sub.add_parser("baseline", help="write the weighted Breslow cumulative baseline hazard as TSV")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--out", default=None)

    p = sub.add_parser("km", help="write residual-censoring Kaplan-Meier and Nelson-Aalen curves as TSV")
    _add_data_args(p)
    p.add_argument("--out", default=None)

    p = sub.add_parser("simulate", help="run a Monte Carlo study")
    p.add_argument("--hazard", choices=simulation.HAZARDS, default="h1")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--censoring", type=float, default=0.0)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--ppl-reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--kernel", choices=("density", "convolution"), default="density")
    p.add_argument("--variance", choices=("derived", "literal"), default="derived")
    p.add_argument("--theta-c", type=float, default=None, help="skip calibration and use this censoring bound")

    p = sub.add_parser("report", help="aggregate replicates.jsonl into report.json and table.tsv")
    p.add_argument("path", help="study directory or replicates.jsonl")
    p.add_argument("--out", default=None, help="output directory (default: alongside the log)")
    p.add_argument("--beta-true", default=None, help="comma-separated true coefficients if spec.json is absent")
    return ap


def _schema(args):
    z = tuple(c.strip() for c in args.z_cols.split(",") if c.strip()) if args.z_cols else None
    return Schema(args.a_col, args.y_col, args.delta_col, z)


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _require_seed(args):
    if args.seed is None:
        raise InputError(f"--seed is required for {args.command}")


def _fit(args, d):
    trunc = truncation.parse(args.truncation)
    cfg = SolverConfig(tol=args.tol, max_iter=args.max_iter, halvings=args.halvings)
    w = CensoringWeights.fit(d, trunc, floor_eps=args.floor_eps, kernel=args.kernel)
    if args.method == "ppl":
        _require_seed(args)
        fit = fit_ppl(d, w, args.reps, args.seed, cfg, variance=args.variance)
    elif args.method == "wee":
        fit = fit_wee(d, w, cfg, variance=args.variance)
    else:
        fit = fit_reference_pl(d, cfg)
    return fit, w


def cmd_fit(args):
    d = load_csv(args.input, _schema(args))
    fit, w = _fit(args, d)
    fit.baseline = breslow_baseline(d, w, fit.beta_hat)
    out = fit.to_dict()
    out["covariates"] = list(d.covariate_names)
    out["truncation"] = w.truncation.to_dict()
    status = EXIT_OK
    if args.verify:
        from .checks import run_checks

        out["verify"] = run_checks(d, w, fit.beta_hat, seed=args.seed or 0)
        status = EXIT_OK if out["verify"]["pass"] else EXIT_INTERNAL
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", args.out)
    return status


def cmd_baseline(args):
    d = load_csv(args.input, _schema(args))
    fit, w = _fit(args, d)
    bh = breslow_baseline(d, w, fit.beta_hat)
    cum = np.cumsum(bh.increments)
    lines = ["time\tincrement\tcumhaz"] + [f"{t!r}\t{h!r}\t{c!r}" for t, h, c in zip(bh.times.tolist(), bh.increments.tolist(), cum.tolist())]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_km(args):
    d = load_csv(args.input, _schema(args))
    km = km_residual_censoring(d)
    na = nelson_aalen_residual_censoring(d)
    lines = ["time\tsurvival\tcumhaz", "0.0\t1.0\t0.0"]
    lines += [f"{t!r}\t{s!r}\t{h!r}" for t, s, h in zip(km.jump_times.tolist(), km.values.tolist(), na.values.tolist())]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args):
    _require_seed(args)
    try:
        spec = simulation.ScenarioSpec(
            hazard=args.hazard,
            n=args.n,
            censoring_target=args.censoring,
            n_replicates=args.reps,
            seed=args.seed,
            L=args.ppl_reps,
            kernel=args.kernel,
            variance=args.variance,
            theta_c=args.theta_c,
        ).with_theta()
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "spec.json").write_text(json.dumps(simulation.spec_record(spec), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    simulation.run_study(spec, out, jobs=max(1, args.jobs))
    return EXIT_OK


def cmd_report(args):
    path = Path(args.path)
    log = path / "replicates.jsonl" if path.is_dir() else path
    if not log.exists():
        raise InputError(f"{log} not found")
    spec = None
    spec_path = log.parent / "spec.json"
    if spec_path.exists():
        raw = json.loads(spec_path.read_text(encoding="utf-8"))
        raw["beta_true"] = tuple(raw["beta_true"])
        if raw.get("theta_c") is None and raw.get("censoring_target", 0) == 0:
            raw["theta_c"] = float("inf")
        spec = simulation.ScenarioSpec(**raw)
        beta_true = spec.beta_true
    elif args.beta_true:
        beta_true = [float(x) for x in args.beta_true.split(",")]
    else:
        raise InputError("no spec.json next to the log; pass --beta-true")
    records = list(simulation._read_log(log).values())
    report = simulation.summarize(records, beta_true, spec)
    simulation.write_report(report, Path(args.out) if args.out else log.parent)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "baseline": cmd_baseline, "km": cmd_km, "simulate": cmd_simulate, "report": cmd_report}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001
        if isinstance(exc, (InputError, OSError, UnicodeDecodeError)):
            code, kind = EXIT_INPUT, "input_error"
        elif isinstance(exc, NonConvergence):
            code, kind = EXIT_NONCONVERGENCE, "nonconvergence"
        else:
            code, kind = EXIT_INTERNAL, "internal_error"
        error = {"error": kind, "type": type(exc).__name__, "message": str(exc).split("\n")[0]}
    sys.stderr.write(json.dumps(error) + "\n")
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
