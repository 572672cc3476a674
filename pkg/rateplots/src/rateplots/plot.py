"""Render rate-study CSV files as publication-style log-log figures.

Consumes only the documented CSV schema
``n,replicate,seed,metric,value,lambda,j_level,wall_time_s,converged``:
one panel per requested metric with the per-N median and interquartile band
over converged replicates, the fitted least-squares slope of log(median)
against log(N), and (optionally) the dashed theoretical reference slope.
The fitted slopes are printed as a table on standard output; the printed
number is exactly the least-squares fit of the plotted medians, with no
smoothing, so it reproduces the study harness's summary slope.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

EXPECTED_HEADER = ["n", "replicate", "seed", "metric", "value", "lambda",
                   "j_level", "wall_time_s", "converged"]

# metrics measuring squared-distance-like quantities track twice the exponent
SQUARED_METRICS = {"kl", "tau_squared"}


class CsvFormatError(ValueError):
    pass


@dataclass
class PlotSpec:
    csv_path: str
    out_path: str
    metrics: list[str] = field(default_factory=list)
    alpha: int = 2
    d: int = 1
    show_theory: bool = True


@dataclass
class Row:
    n: int
    replicate: int
    metric: str
    value: float
    converged: bool


def load_rows(path: str) -> list[Row]:
    """Parse the study CSV; malformed content reports the 1-based row number."""
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CsvFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        for i, rec in enumerate(reader, start=1):
            if i == 1:
                if rec != EXPECTED_HEADER:
                    raise CsvFormatError(
                        f"row 1: header {rec!r} does not match the rate-study "
                        f"schema {','.join(EXPECTED_HEADER)}")
                continue
            if len(rec) != len(EXPECTED_HEADER):
                raise CsvFormatError(f"row {i}: expected {len(EXPECTED_HEADER)} "
                                     f"fields, found {len(rec)}")
            try:
                rows.append(Row(n=int(rec[0]), replicate=int(rec[1]),
                                metric=rec[3], value=float(rec[4]),
                                converged=rec[8] == "true"))
            except ValueError as exc:
                raise CsvFormatError(f"row {i}: {exc}") from exc
    if not rows:
        raise CsvFormatError("row 2: no data rows found")
    return rows


def median_table(rows: list[Row], metric: str):
    """Per-N medians and quartile bands over converged replicates.

    Returns (ns, medians, q25, q75, n_excluded); non-converged replicates are
    dropped from the statistics and only counted.
    """
    sel = [r for r in rows if r.metric == metric]
    if not sel:
        raise CsvFormatError(f"metric {metric!r} not present in the CSV")
    ns = sorted({r.n for r in sel})
    med, lo, hi = [], [], []
    excluded = sum(1 for r in sel if not r.converged)
    for n in ns:
        vals = np.array([r.value for r in sel if r.n == n and r.converged])
        if vals.size == 0:
            raise CsvFormatError(
                f"metric {metric!r}: no converged replicates at n={n}")
        med.append(float(np.median(vals)))
        lo.append(float(np.percentile(vals, 25)))
        hi.append(float(np.percentile(vals, 75)))
    return (np.array(ns, dtype=float), np.array(med), np.array(lo),
            np.array(hi), excluded)


def fit_slope(ns: np.ndarray, medians: np.ndarray) -> dict:
    """Least squares of log(median) on log(N); the shared slope definition."""
    if np.any(medians <= 0.0):
        raise CsvFormatError("medians must be positive for a log-log fit")
    x, y = np.log(ns), np.log(medians)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - float(resid @ resid) / ss_tot
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


def theoretical_slope(metric: str, alpha: int, d: int) -> float:
    rate = alpha / (2.0 * alpha + d)
    return -2.0 * rate if metric in SQUARED_METRICS else -rate


def render(spec: PlotSpec) -> dict:
    """Produce the figure and print the slope table; returns per-metric fits."""
    rows = load_rows(spec.csv_path)
    metrics = spec.metrics or sorted({r.metric for r in rows})
    if not metrics:
        raise CsvFormatError("empty metric selection")

    fits = {}
    n_panels = len(metrics)
    fig, axes = plt.subplots(1, n_panels, figsize=(4.2 * n_panels, 3.6),
                             squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        ns, med, lo, hi, excluded = median_table(rows, metric)
        fit = fit_slope(ns, med)
        fits[metric] = fit
        ax.fill_between(ns, lo, hi, alpha=0.25, color="tab:blue",
                        label="interquartile")
        ax.loglog(ns, med, "o-", color="tab:blue", label="median")
        line = np.exp(fit["intercept"] + fit["slope"] * np.log(ns))
        ax.loglog(ns, line, "-", color="tab:red", linewidth=1.0,
                  label=f"slope {fit['slope']:+.6f}")
        if spec.show_theory:
            theory = theoretical_slope(metric, spec.alpha, spec.d)
            anchor = med[0] * (ns / ns[0]) ** theory
            ax.loglog(ns, anchor, "--", color="gray",
                      label=f"theory {theory:+.4f}")
        ax.set_xlabel("N")
        ax.set_ylabel(metric)
        title = metric
        if excluded:
            title += f" ({excluded} non-converged excluded)"
        ax.set_title(title, fontsize=10)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=150)
    plt.close(fig)

    print(f"{'metric':>12}  {'slope':>12}  {'theory':>10}  {'r2':>8}")
    for metric in metrics:
        fit = fits[metric]
        theory = theoretical_slope(metric, spec.alpha, spec.d)
        print(f"{metric:>12}  {fit['slope']:+12.9f}  {theory:+10.4f}  "
              f"{fit['r2']:8.5f}")
    return fits


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rate-plots",
        description="log-log convergence figures from rate-study CSVs")
    parser.add_argument("--csv", required=True, help="rate-study CSV file")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--metrics", default="",
                        help="comma-separated metric names (default: all)")
    parser.add_argument("--alpha", type=int, default=2)
    parser.add_argument("--d", type=int, default=1)
    parser.add_argument("--no-theory", action="store_true",
                        help="hide the theoretical slope reference")
    args = parser.parse_args(argv)
    metrics = [m for m in args.metrics.split(",") if m] if args.metrics else []
    if args.metrics and not metrics:
        sys.stderr.write("error: empty metric selection\n")
        return 1
    spec = PlotSpec(csv_path=args.csv, out_path=args.out, metrics=metrics,
                    alpha=args.alpha, d=args.d, show_theory=not args.no_theory)
    try:
        render(spec)
    except CsvFormatError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
