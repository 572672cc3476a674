"""Command-line interface for the experiment harness.

Subcommands: oracle-check, fit, rates, sample, metrics.  Exit codes: 0 on
success, 1 on configuration/usage errors, 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .densities import default_grid
from .estimator import FitConfig, fit
from .experiment import ExperimentConfig, run_oracle_check, run_rate_study
from .kr import build_kr, pullback_density, sample_target, samples_to_csv
from .maps import LinkRangeError, RationalTriangularMap, Theta
from .metrics import compare_densities
from .trimap import InversionError, MonotonicityError

_NUMERICAL_ERRORS = (MonotonicityError, InversionError, LinkRangeError,
                     FloatingPointError, np.linalg.LinAlgError)


class _Parser(argparse.ArgumentParser):
    """argparse that exits with code 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="ttde",
                description="Transport-based density estimation experiments")
    p.add_argument("--version", action="version", version=f"ttde {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    oc = sub.add_parser("oracle-check", help="build the KR oracle and report residuals")
    oc.add_argument("--config", required=True)

    ft = sub.add_parser("fit", help="sample N points and run one penalized fit")
    ft.add_argument("--config", required=True)
    ft.add_argument("--n", required=True, type=int)
    ft.add_argument("--seed", required=True, type=int)
    ft.add_argument("--out", default=None, help="write the fit result JSON here")

    rt = sub.add_parser("rates", help="run the convergence-rate study")
    rt.add_argument("--config", required=True)
    rt.add_argument("--csv", default=None, help="default <output_dir>/rates.csv")
    rt.add_argument("--summary", default=None, help="default <output_dir>/summary.json")

    sp = sub.add_parser("sample", help="draw samples from the target density")
    sp.add_argument("--config", required=True)
    sp.add_argument("--n", required=True, type=int)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", default=None, type=int,
                    help="defaults to the config seed")

    mt = sub.add_parser("metrics", help="distances of a fitted map's density to the truth")
    mt.add_argument("--config", required=True)
    mt.add_argument("--theta", required=True, help="theta JSON produced by fit")
    mt.add_argument("--out", default=None)
    return p


def _load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    return ExperimentConfig.from_json(path)


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_oracle_check(args) -> int:
    config = _load_config(args.config)
    report = run_oracle_check(config)
    _emit(report, None)
    return 0


def _cmd_fit(args) -> int:
    if args.n <= 0:
        raise ValueError("n must be positive")
    config = _load_config(args.config)
    p0, eta = config.truth(), config.ref()
    kr = build_kr(p0, eta)
    x = sample_target(kr, eta, args.n, args.seed)
    lam, j = config.schedule(args.n)
    res = fit(x, eta, FitConfig(alpha=config.alpha, lam=lam, J=j,
                                link=config.link_fn(), basis_backend=config.basis,
                                max_iters=config.max_iters,
                                gradient_tolerance=config.gradient_tolerance))
    payload = res.to_json_dict()
    payload["n"] = args.n
    payload["seed"] = args.seed
    payload["lambda"] = lam
    payload["j_level"] = j
    _emit(payload, args.out)
    return 0


def _cmd_rates(args) -> int:
    config = _load_config(args.config)
    os.makedirs(config.output_dir, exist_ok=True)
    csv_path = args.csv or os.path.join(config.output_dir, "rates.csv")
    summary_path = args.summary or os.path.join(config.output_dir, "summary.json")
    _, summary = run_rate_study(config, csv_path=csv_path, summary_path=summary_path)
    for metric, entry in summary["metrics"].items():
        fitted = entry.get("fit", {}).get("slope")
        shown = "n/a" if fitted is None else f"{fitted:+.4f}"
        sys.stdout.write(f"{metric:>12}: slope {shown} "
                         f"(theory {entry['theoretical_slope']:+.4f})\n")
    sys.stdout.write(f"wrote {csv_path} and {summary_path}\n")
    return 0


def _cmd_sample(args) -> int:
    if args.n <= 0:
        raise ValueError("n must be positive")
    config = _load_config(args.config)
    seed = config.seed if args.seed is None else args.seed
    kr = build_kr(config.truth(), config.ref())
    x = sample_target(kr, config.ref(), args.n, seed)
    samples_to_csv(x, args.out)
    return 0


def _cmd_metrics(args) -> int:
    config = _load_config(args.config)
    if not os.path.exists(args.theta):
        raise FileNotFoundError(f"theta file not found: {args.theta}")
    theta = Theta.load(args.theta)
    s_map = RationalTriangularMap.from_theta(theta, config.link_fn())
    p_hat = pullback_density(s_map, config.ref())
    report = compare_densities(p_hat, config.truth(), default_grid(config.dim))
    _emit(report.to_dict(), args.out)
    return 0


_COMMANDS = {
    "oracle-check": _cmd_oracle_check,
    "fit": _cmd_fit,
    "rates": _cmd_rates,
    "sample": _cmd_sample,
    "metrics": _cmd_metrics,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except _NUMERICAL_ERRORS as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
