"""Empirical CDF figures and per-group mean tables from campaign report CSVs.

Consumes the report files written by the simulation harness: a header row of
named columns, one data row per (scheme, trial, UT), with multi-valued cells
(``serving``, ``sinr_db``) packed as ";"-separated fields. This layer only
reads those files; it never imports the simulator and never writes anything
except the requested image.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
from typing import Iterable, Sequence

import numpy as np
from matplotlib.figure import Figure

# Scalar metrics hold one float per row; packed metrics hold one float per
# serving satellite, ";"-separated, and every entry becomes a sample.
SCALAR_METRICS = ("crlb_m2", "position_error_m", "gdop")
PACKED_METRICS = ("sinr_db",)
DEFAULT_GROUP = ("beamforming", "scheduling", "m")


class ReportError(ValueError):
    """Unreadable or malformed report file; the message carries file:line."""


@dataclasses.dataclass(frozen=True)
class FigureSpec:
    """One CDF figure: which files, which metric, how rows are grouped."""

    inputs: tuple[str, ...]
    metric: str
    group: tuple[str, ...] = DEFAULT_GROUP
    out: str = "cdf.svg"
    xlabel: str | None = None        # defaults to the metric name
    ylabel: str = "CDF"
    title: str | None = None
    linewidth: float = 1.6
    figsize: tuple[float, float] = (6.4, 4.2)

    def __post_init__(self) -> None:
        if not self.inputs:
            raise ValueError("at least one input CSV is required")
        known = SCALAR_METRICS + PACKED_METRICS
        if self.metric not in known:
            raise ValueError(f"unknown metric {self.metric!r}; expected one of {known}")
        if not self.group:
            raise ValueError("at least one grouping column is required")
        if self.linewidth <= 0.0:
            raise ValueError("linewidth must be positive")


@dataclasses.dataclass(frozen=True)
class RenderResult:
    """The numbers behind a rendered figure, plus the open figure handle."""

    means: dict[str, float]                           # group label -> sample mean
    counts: dict[str, int]                            # group label -> sample count
    curves: dict[str, tuple[np.ndarray, np.ndarray]]  # label -> (sorted x, k/n)
    table: str
    out: str
    figure: Figure


def read_rows(path: str) -> tuple[list[str], list[tuple[int, dict[str, str]]]]:
    """Header and data rows of a report CSV, each row tagged with its line."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ReportError(f"{path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ReportError(f"{path}:1: empty file, expected a header row") from None
        rows: list[tuple[int, dict[str, str]]] = []
        for rec in reader:
            if not rec:
                continue
            if len(rec) != len(header):
                raise ReportError(f"{path}:{reader.line_num}: expected "
                                  f"{len(header)} fields, got {len(rec)}")
            rows.append((reader.line_num, dict(zip(header, rec))))
    return header, rows


def _require_columns(path: str, header: list[str], needed: Iterable[str]) -> None:
    missing = [c for c in needed if c not in header]
    if missing:
        raise ReportError(f"{path}:1: missing column(s) {missing}; "
                          f"header has {header}")


def _row_values(path: str, line: int, rec: dict[str, str], metric: str) -> list[float]:
    raw = rec[metric]
    parts = raw.split(";") if metric in PACKED_METRICS else [raw]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ReportError(f"{path}:{line}: bad {metric} value {raw!r}") from None


def _group_label(keys: Sequence[str], rec: dict[str, str]) -> str:
    # Blank cells (schedulers without a shortlist width) render as "-".
    return " ".join(f"{k}={rec[k] or '-'}" for k in keys)


def collect_samples(spec: FigureSpec) -> dict[str, list[float]]:
    """Metric samples per group label, merged across all input files."""
    samples: dict[str, list[float]] = {}
    for path in spec.inputs:
        header, rows = read_rows(path)
        _require_columns(path, header, (spec.metric, *spec.group))
        for line, rec in rows:
            label = _group_label(spec.group, rec)
            samples.setdefault(label, []).extend(
                _row_values(path, line, rec, spec.metric))
    if not samples:
        raise ReportError(f"no data rows in {', '.join(spec.inputs)}")
    return samples


def empirical_cdf(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Sorted samples paired with probabilities k/n, k = 1..n."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("empty sample")
    return x, np.arange(1, x.size + 1) / x.size


def summary_table(means: dict[str, float], counts: dict[str, int],
                  metric: str) -> str:
    """Aligned text table of per-group sample counts and means."""
    labels = sorted(means)
    width = max(len("group"), *(len(lbl) for lbl in labels))
    nwidth = max(len("n"), *(len(str(counts[lbl])) for lbl in labels))
    lines = [f"{'group':<{width}}  {'n':>{nwidth}}  mean {metric}"]
    for lbl in labels:
        lines.append(f"{lbl:<{width}}  {counts[lbl]:>{nwidth}}  {means[lbl]:.17g}")
    return "\n".join(lines)


def render_cdf(spec: FigureSpec) -> RenderResult:
    """Draw one empirical CDF curve per group and write the image.

    The image format follows the output extension; a path without one gets
    ".svg". Curves keep the raw staircase, so a group's first plotted rise is
    at its minimum sample and the curve reaches 1 at its maximum. Returns the
    per-group means, counts and curves along with the formatted summary table;
    the caller owns the returned figure.
    """
    samples = collect_samples(spec)
    labels = sorted(samples)
    curves = {lbl: empirical_cdf(samples[lbl]) for lbl in labels}
    means = {lbl: float(np.mean(samples[lbl])) for lbl in labels}
    counts = {lbl: len(samples[lbl]) for lbl in labels}

    fig = Figure(figsize=spec.figsize)
    ax = fig.add_subplot()
    for lbl in labels:
        x, p = curves[lbl]
        # Leading (min, 0) vertex makes a lone sample render as a 0 -> 1 step.
        ax.step(np.concatenate(([x[0]], x)), np.concatenate(([0.0], p)),
                where="post", linewidth=spec.linewidth, label=lbl)
    ax.set_xlabel(spec.xlabel if spec.xlabel is not None else spec.metric)
    ax.set_ylabel(spec.ylabel)
    if spec.title is not None:
        ax.set_title(spec.title)
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    out = spec.out if os.path.splitext(spec.out)[1] else spec.out + ".svg"
    fig.savefig(out)
    return RenderResult(means=means, counts=counts, curves=curves,
                        table=summary_table(means, counts, spec.metric),
                        out=out, figure=fig)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotcdf",
        description="Empirical CDF figure and per-group means from report CSVs.")
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        metavar="CSV", help="report CSV; repeat to merge files")
    parser.add_argument("--metric", default="position_error_m",
                        choices=SCALAR_METRICS + PACKED_METRICS,
                        help="column to plot (default: %(default)s)")
    parser.add_argument("--group", default=",".join(DEFAULT_GROUP), metavar="COLS",
                        help="comma-separated grouping columns "
                             "(default: %(default)s)")
    parser.add_argument("--out", default="cdf.svg",
                        help="output image path; extensionless paths get .svg")
    parser.add_argument("--xlabel", default=None)
    parser.add_argument("--ylabel", default="CDF")
    parser.add_argument("--title", default=None)
    parser.add_argument("--linewidth", type=float, default=1.6)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            inputs=tuple(args.inputs),
            metric=args.metric,
            group=tuple(k for k in args.group.split(",") if k),
            out=args.out,
            xlabel=args.xlabel,
            ylabel=args.ylabel,
            title=args.title,
            linewidth=args.linewidth,
        )
        result = render_cdf(spec)
    except (ReportError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(result.table)
    print(f"wrote {result.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
