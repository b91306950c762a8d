"""Deterministic SVG rendering of result CSVs."""

import csv
from dataclasses import dataclass
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


class PlotError(ValueError):
    pass


@dataclass(frozen=True)
class PlotSpec:
    x: str
    y: str
    yerr: Optional[str] = None
    series: Optional[str] = None  # column whose values split rows into lines
    title: str = ""
    xlabel: Optional[str] = None
    ylabel: Optional[str] = None
    logy: bool = False


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise PlotError(f"{path}: empty CSV")
    return rows


def emit_plot(csv_path, spec: PlotSpec, out_path) -> None:
    """Render a line/scatter plot of CSV columns to a deterministic SVG.

    Error bars come from the yerr column when given.  The SVG carries no
    timestamps and uses a fixed hash salt, so identical inputs give
    byte-identical output.
    """
    rows = _read_csv(csv_path)
    for col in filter(None, (spec.x, spec.y, spec.yerr, spec.series)):
        if col not in rows[0]:
            raise PlotError(f"missing column {col!r} in {csv_path}")

    plt.rcParams["svg.hashsalt"] = "boundvol"
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = {}
    for row in rows:
        key = row[spec.series] if spec.series else ""
        groups.setdefault(key, []).append(row)
    for key in sorted(groups):
        grp = groups[key]
        xs = [float(r[spec.x]) for r in grp]
        ys = [float(r[spec.y]) for r in grp]
        if spec.yerr:
            errs = [float(r[spec.yerr]) for r in grp]
            ax.errorbar(xs, ys, yerr=errs, marker="o", markersize=3,
                        capsize=2, label=key or None)
        else:
            ax.plot(xs, ys, marker="o", markersize=3, label=key or None)
    if spec.logy:
        ax.set_yscale("log")
    ax.set_xlabel(spec.xlabel or spec.x)
    ax.set_ylabel(spec.ylabel or spec.y)
    if spec.title:
        ax.set_title(spec.title)
    if spec.series:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
