"""Companion plotting script: renders PNG figures from the CSVs in an output directory.

    python -m chainqfi.plots OUTPUT_DIR

Only files that exist are plotted; the figure is written next to its CSV.
Needs matplotlib (``pip install chainqfi[plots]``).
"""
from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

import numpy as np

from .report import read_csv


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({"font.size": 9, "axes.labelsize": 10, "legend.fontsize": 8,
                         "figure.dpi": 150, "savefig.bbox": "tight"})
    return plt


def _figsize(scale=1.0):
    width = 5.0 * scale
    return width, width * (math.sqrt(5) - 1) / 2


def _table(path):
    _, columns, rows = read_csv(path)
    return {c: [row[i] for row in rows] for i, c in enumerate(columns)}


def _floats(values):
    return np.array([float(v) if v != "" else np.nan for v in values])


def plot_sweep(csv_path: Path) -> Path:
    plt = _pyplot()
    t = _table(csv_path)
    T = _floats(t["T"])
    fig, ax = plt.subplots(figsize=_figsize())
    ax.plot(T, _floats(t["rate_controlled"]), "o-", color="tab:orange", label="optimised control")
    ax.plot(T, _floats(t["rate_uncontrolled"]), "s-", color="tab:blue", label="no control")
    ax.set_xlabel(r"probing time $T$ [1/J]")
    ax.set_ylabel(r"$F/T^2$")
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False)
    out = csv_path.with_suffix(".png")
    fig.savefig(out)
    plt.close(fig)
    return out


def plot_populations(csv_path: Path) -> Path:
    plt = _pyplot()
    t = _table(csv_path)
    sites = sorted((c for c in t if c.startswith("p") and c[1:].isdigit()), key=lambda c: int(c[1:]))
    time = _floats(t["t"])
    fig, (ax, axc) = plt.subplots(2, 1, sharex=True, figsize=_figsize(1.1),
                                  gridspec_kw={"height_ratios": [3, 1]})
    for c in sites[1:]:
        ax.plot(time, _floats(t[c]), label=f"site {c[1:]}")
    ax.plot(time, _floats(t[sites[0]]), "k--", lw=0.8, label="all down")
    ax.set_ylabel("population")
    ax.legend(frameon=False, ncol=3)
    axc.step(time, _floats(t["c"]), where="pre", color="0.3")
    axc.set_xlabel(r"$t$ [1/J]")
    axc.set_ylabel(r"$c(t)$ [J]")
    out = csv_path.with_suffix(".png")
    fig.savefig(out)
    plt.close(fig)
    return out


def plot_estimate(json_path: Path) -> Path:
    plt = _pyplot()
    summary = json.loads(json_path.read_text())["summary"]
    arms = [a for a in ("control", "free") if a in summary]
    fig, ax = plt.subplots(figsize=_figsize(0.6))
    means = [summary[a]["mean_S"] for a in arms]
    stds = [summary[a]["std_S"] for a in arms]
    ax.bar(range(len(arms)), means, yerr=stds, capsize=4,
           color=["tab:orange" if a == "control" else "tab:blue" for a in arms])
    ax.set_xticks(range(len(arms)), ["with control" if a == "control" else "without" for a in arms])
    ax.set_ylabel(r"total measurements $S$")
    out = json_path.with_name("estimate.png")
    fig.savefig(out)
    plt.close(fig)
    return out


def render(directory) -> list[Path]:
    directory = Path(directory)
    made = []
    if (directory / "qfi_sweep.csv").exists():
        made.append(plot_sweep(directory / "qfi_sweep.csv"))
    if (directory / "populations.csv").exists():
        made.append(plot_populations(directory / "populations.csv"))
    if (directory / "estimate_summary.json").exists():
        made.append(plot_estimate(directory / "estimate_summary.json"))
    return made


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m chainqfi.plots", description="Render figures from CSVs.")
    parser.add_argument("directories", nargs="+")
    args = parser.parse_args(argv)
    for d in args.directories:
        for path in render(d):
            print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
