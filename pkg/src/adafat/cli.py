"""Command-line front end: test, simulate, calibrate.

Exit codes: 0 success, 2 validation error (bad input or flags), 3
numerical failure. Primary outputs (JSON/CSV) are byte-identical for an
identical spec and seed; timing and log output go to the diagnostic
stream only. The ADAFAT_LOG environment variable sets verbosity
(DEBUG, INFO, WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import adafat_run
from .errors import NUMERICAL_ERRORS, VALIDATION_ERRORS, MissingOracleError
from .model import FactorModel, load_dataset
from .simgen import SimConfig, calibrate_from_returns, run_monte_carlo
from .testing import METHODS, TestConfig, run_procedure

logger = logging.getLogger("adafat")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _add_threshold_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tau", type=float, default=0.1, help="target FDR level")
    parser.add_argument(
        "--nu", type=float, default=0.5, help="null-proportion tuning parameter"
    )
    parser.add_argument(
        "--kappa", type=int, default=8, help="upper bound of the factor search"
    )
    parser.add_argument(
        "--penalty", default="bai-ng", choices=["bai-ng"], help="factor-count penalty"
    )
    parser.add_argument(
        "--clip-pi0",
        action="store_true",
        help="cap the estimated null proportion at 1",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adafat",
        description="Factor-adjusted multiple testing with adaptive FDR thresholding",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run testing procedures on CSV data")
    p_test.add_argument("--y", required=True, help="panel CSV (rows = observations)")
    p_test.add_argument("--x", help="explanatory CSV, same row count")
    p_test.add_argument(
        "--method",
        "--methods",
        dest="methods",
        default="adafat",
        help=f"comma-separated subset of {','.join(METHODS)}",
    )
    p_test.add_argument(
        "--truth",
        help="npz bundle with alpha, B, Gamma, Sigma_eps, q, Z, E (required for ora)",
    )
    p_test.add_argument("--trace", action="store_true", help="include adafat trace")
    p_test.add_argument(
        "--emit-pvalues", action="store_true", help="include p-values in the output"
    )
    p_test.add_argument("--out", help="output path (.json or .csv); default stdout")
    p_test.add_argument("--max-iter", type=int, default=50)
    _add_threshold_flags(p_test)

    p_sim = sub.add_parser("simulate", help="run a seeded Monte Carlo cell")
    p_sim.add_argument(
        "--config",
        help="JSON file with the full cell configuration; other cell flags are ignored",
    )
    p_sim.add_argument("--m", type=int, help="number of tests")
    p_sim.add_argument("--n", type=int, help="number of observations")
    p_sim.add_argument("--q", type=int, default=3, help="latent factor count")
    p_sim.add_argument("--p", type=int, default=1, help="explanatory variable count")
    p_sim.add_argument("--pi1", type=float, default=0.1, help="alternative proportion")
    p_sim.add_argument("--alpha-magnitude", type=float, default=None)
    p_sim.add_argument(
        "--alpha-sign",
        choices=["mixed", "positive"],
        default="mixed",
        help="sign pattern of the nonzero intercepts",
    )
    p_sim.add_argument(
        "--market-skew",
        type=float,
        default=None,
        help="probability of a positive first-row loading",
    )
    p_sim.add_argument("--mu-x", type=float, default=None, help="explanatory mean")
    p_sim.add_argument("--mu-z-scale", type=float, default=0.0)
    p_sim.add_argument("--dist", choices=["normal", "t3"], default="normal")
    p_sim.add_argument("--sigma-eps", choices=["identity", "banded"], default="banded")
    p_sim.add_argument("--bandwidth", type=int, default=3)
    p_sim.add_argument("--rho", type=float, default=0.3)
    p_sim.add_argument("--reps", type=int, default=100)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument(
        "--methods", default="ori,ora,fatdw,fatld,adafat", help="comma-separated"
    )
    p_sim.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_sim.add_argument("--out", help="report path (.json); a .csv twin is written too")
    p_sim.add_argument("--max-iter", type=int, default=50)
    _add_threshold_flags(p_sim)

    p_cal = sub.add_parser("calibrate", help="calibrate a generator from returns")
    p_cal.add_argument("--returns", required=True, help="returns CSV (n x m)")
    p_cal.add_argument("--market", required=True, help="market factor CSV (n x 1)")
    p_cal.add_argument("--out", required=True, help="output basename (.npz + .json)")
    p_cal.add_argument("--pi1", type=float, default=0.1)
    p_cal.add_argument("--reps", type=int, default=100)
    p_cal.add_argument("--seed", type=int, default=0)
    p_cal.add_argument("--kappa", type=int, default=8)
    p_cal.add_argument("--penalty", default="bai-ng", choices=["bai-ng"])
    return parser


def _require_file(path: str) -> None:
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such file: {path}")


def _load_truth_bundle(path: str):
    _require_file(path)
    bundle = np.load(path)
    required = ("alpha", "B", "Gamma", "Sigma_eps", "q", "Z", "E")
    missing = [k for k in required if k not in bundle]
    if missing:
        raise ValueError(f"truth bundle is missing arrays: {missing}")
    model = FactorModel(
        alpha=bundle["alpha"],
        B=bundle["B"],
        Gamma=bundle["Gamma"],
        Sigma_eps=bundle["Sigma_eps"],
        q=int(bundle["q"]),
    )
    return model, bundle["Z"], bundle["E"]


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n", encoding="utf-8")


def _outcomes_csv(outcomes: list[dict]) -> str:
    lines = ["method,tau,nu,threshold,pi0_hat,fdr_estimate,n_rejected,rejected"]
    for o in outcomes:
        rejected = " ".join(str(j) for j in o["rejected"])
        lines.append(
            f"{o['method']},{o['tau']!r},{o['nu']!r},{o['threshold']!r},"
            f"{o['pi0_hat']!r},{o['fdr_estimate']!r},{o['n_rejected']},{rejected}"
        )
    return "\n".join(lines) + "\n"


def cmd_test(args: argparse.Namespace) -> int:
    _require_file(args.y)
    if args.x:
        _require_file(args.x)
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    config = TestConfig(
        tau=args.tau,
        nu=args.nu,
        kappa=args.kappa,
        penalty=args.penalty,
        clip_pi0=args.clip_pi0,
        max_iter=args.max_iter,
    )
    truth = Z = E = None
    if args.truth:
        truth, Z, E = _load_truth_bundle(args.truth)
    if "ora" in methods and truth is None:
        raise MissingOracleError("oracle requires simulation truth (--truth bundle)")
    data = load_dataset(args.y, args.x)

    outcomes = []
    traces = {}
    for meth in methods:
        if meth == "adafat" and args.trace:
            outcome, trace = adafat_run(data, config)
            traces[meth] = trace.to_json_dict()
        else:
            outcome = run_procedure(meth, data, config, truth=truth, Z=Z, E=E)
        outcomes.append(outcome.to_json_dict(emit_pvalues=args.emit_pvalues))

    if args.out and args.out.endswith(".csv"):
        Path(args.out).write_text(_outcomes_csv(outcomes), encoding="utf-8")
        return EXIT_OK
    payload = {
        "schema_version": 1,
        "command": "test",
        "config": {
            "tau": args.tau,
            "nu": args.nu,
            "kappa": args.kappa,
            "penalty": args.penalty,
            "clip_pi0": args.clip_pi0,
            "max_iter": args.max_iter,
            "y": args.y,
            "x": args.x,
            "methods": methods,
        },
        "outcomes": outcomes,
    }
    if traces:
        payload["traces"] = traces
    _emit(payload, args.out)
    return EXIT_OK


def _print_summary_table(report) -> None:
    print(f"{'method':<8} {'FDP mean':>10} {'FDP q90':>10} {'POW mean':>10}")
    for meth in report.methods:
        s = report.summary[meth]
        print(
            f"{meth:<8} {s['fdp']['mean']:>10.4f} {s['fdp']['q90']:>10.4f} "
            f"{s['pow']['mean']:>10.4f}"
        )


def _sim_config_from_json(path: str) -> SimConfig:
    _require_file(path)
    fields = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(fields, dict):
        raise ValueError("config file must hold a JSON object")
    if "mu_x" in fields and isinstance(fields["mu_x"], list):
        fields["mu_x"] = tuple(fields["mu_x"])
    if fields.get("sigma_eps_matrix") is not None:
        fields["sigma_eps_matrix"] = tuple(
            tuple(row) for row in fields["sigma_eps_matrix"]
        )
    try:
        return SimConfig(**fields)
    except TypeError as exc:
        raise ValueError(f"bad config file: {exc}") from None


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.config:
        config = _sim_config_from_json(args.config)
    else:
        if args.m is None or args.n is None:
            raise ValueError("--m and --n are required without --config")
        fields = dict(
            m=args.m,
            n=args.n,
            q=args.q,
            p=args.p,
            pi1=args.pi1,
            alpha_sign=args.alpha_sign,
            error_dist=args.dist,
            mu_z_scale=args.mu_z_scale,
            sigma_eps=args.sigma_eps,
            bandwidth=args.bandwidth,
            rho=args.rho,
            reps=args.reps,
            seed=args.seed,
            tau=args.tau,
            nu=args.nu,
            kappa=args.kappa,
            penalty=args.penalty,
            clip_pi0=args.clip_pi0,
            max_iter=args.max_iter,
        )
        if args.alpha_magnitude is not None:
            fields["alpha_magnitude"] = args.alpha_magnitude
        if args.market_skew is not None:
            fields["market_skew"] = args.market_skew
        if args.mu_x is not None:
            fields["mu_x"] = args.mu_x
        config = SimConfig(**fields)
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    start = time.perf_counter()
    report = run_monte_carlo(config, methods, jobs=args.jobs)
    elapsed = time.perf_counter() - start

    if args.out:
        out_json = Path(args.out)
        _emit(report.to_json_dict(), str(out_json))
        report.write_csv(out_json.with_suffix(".csv"))
    else:
        _emit(report.to_json_dict(), None)
    _print_summary_table(report)
    print(f"elapsed: {elapsed:.1f}s over {config.reps} reps", file=sys.stderr)
    if report.failures:
        print(f"warning: {len(report.failures)} failed cells", file=sys.stderr)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    _require_file(args.returns)
    _require_file(args.market)
    overrides = {"pi1": args.pi1, "reps": args.reps, "seed": args.seed}
    model, config = calibrate_from_returns(
        args.returns,
        args.market,
        overrides=overrides,
        kappa=args.kappa,
        penalty=args.penalty,
    )
    base = Path(args.out)
    np.savez(
        base.with_suffix(".npz"),
        alpha=model.alpha,
        B=model.B,
        Gamma=model.Gamma,
        Sigma_eps=model.Sigma_eps,
        q=model.q,
    )
    payload = {
        "schema_version": 1,
        "command": "calibrate",
        "q_hat": model.q,
        "config": config.to_json_dict(),
    }
    _emit(payload, str(base.with_suffix(".json")))
    print(f"calibrated q_hat={model.q}, wrote {base.with_suffix('.npz')}")
    return EXIT_OK


def main(argv=None) -> int:
    level = os.environ.get("ADAFAT_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "test": cmd_test,
        "simulate": cmd_simulate,
        "calibrate": cmd_calibrate,
    }
    try:
        return handlers[args.command](args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
