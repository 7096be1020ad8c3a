#!/usr/bin/env python3
"""Render experiment-results CSVs into bias boxplots and order histograms.

Consumes the flat results schema
``scenario,noise_family,n,rep,method,beta_true,beta_hat,rel_bias,order_found,branch,error``
and writes, per (scenario, noise family), a boxplot of relative estimation
bias over sample size with one box per method per size, plus, per
(method, noise family), histograms of the discovered moment order at each
sample size.

Usage: render.py <results.csv> <out_dir> [--format svg|png] [--facet ...]
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

REQUIRED_COLUMNS = [
    "scenario",
    "noise_family",
    "n",
    "rep",
    "method",
    "beta_true",
    "beta_hat",
    "rel_bias",
    "order_found",
    "branch",
    "error",
]

# deterministic SVG output: fixed element-id salt, no creation date
matplotlib.rcParams["svg.hashsalt"] = "moment-ident-plots"

METHOD_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


@dataclass(frozen=True)
class PlotJob:
    input_csv: str
    output_dir: str
    facet: str = "by_scenario"
    format: str = "svg"

    def __post_init__(self):
        if self.facet not in ("by_scenario", "by_noise"):
            raise ValueError(f"unknown facet {self.facet!r}")
        if self.format not in ("svg", "png"):
            raise ValueError(f"unknown format {self.format!r}")


class SchemaError(ValueError):
    pass


def load_results(path: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise SchemaError(f"input file not found: {path}") from None
    except pd.errors.EmptyDataError:
        raise SchemaError(f"input file is empty: {path}") from None
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise SchemaError(f"missing columns in {path}: {missing}")
    frame["n"] = pd.to_numeric(frame["n"], errors="coerce")
    for col in ("rel_bias", "beta_hat", "beta_true", "order_found"):
        frame[col] = pd.to_numeric(frame[col], errors="coerce")
    return frame


def _atomic_savefig(fig, path: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    os.close(fd)
    try:
        metadata = {"Date": None} if path.endswith(".svg") else None
        fig.savefig(tmp, format=path.rsplit(".", 1)[-1], metadata=metadata)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _facet_keys(job: PlotJob):
    if job.facet == "by_noise":
        return ("noise_family", "scenario")
    return ("scenario", "noise_family")


def render_bias_boxplots(job: PlotJob) -> list[tuple[str, int]]:
    """One figure per (scenario, noise family); returns (path, box count)."""
    frame = load_results(job.input_csv)
    frame = frame[frame["rel_bias"].notna()]
    if frame.empty:
        raise SchemaError("no plottable rows: every row lacks a rel_bias value")
    os.makedirs(job.output_dir, exist_ok=True)
    key_a, key_b = _facet_keys(job)

    written = []
    for (val_a, val_b), group in sorted(frame.groupby([key_a, key_b])):
        sizes = sorted(group["n"].unique())
        methods = sorted(group["method"].unique())
        fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(sizes), 4.2))
        n_boxes = 0
        # multiplicative offsets keep the per-method boxes separated on a
        # log-scaled sample-size axis
        step = 1.13
        for mi_, method in enumerate(methods):
            offset = step ** (mi_ - (len(methods) - 1) / 2)
            color = METHOD_COLORS[mi_ % len(METHOD_COLORS)]
            positions, samples = [], []
            for size in sizes:
                vals = group.loc[
                    (group["method"] == method) & (group["n"] == size), "rel_bias"
                ].to_numpy()
                if vals.size:
                    positions.append(size * offset)
                    samples.append(vals)
            if not samples:
                continue
            widths = [0.08 * p for p in positions]
            parts = ax.boxplot(
                samples,
                positions=positions,
                widths=widths,
                whis=1.5,
                showfliers=False,
                patch_artist=True,
                medianprops={"color": "black"},
            )
            for box in parts["boxes"]:
                box.set_facecolor(color)
                box.set_alpha(0.6)
            n_boxes += len(samples)
            ax.plot([], [], color=color, label=method)
        ax.set_xscale("log", base=2)
        ax.set_xticks(sizes)
        ax.set_xticklabels([f"$2^{{{int(math.log2(s))}}}$" if float(s).is_integer()
                            and math.log2(s).is_integer() else str(int(s))
                            for s in sizes])
        ax.axhline(0.0, color="gray", linewidth=0.8, zorder=0)
        ax.set_xlabel("sample size per environment")
        ax.set_ylabel("relative bias")
        ax.set_title(f"{key_a}={val_a}, {key_b}={val_b}")
        ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        path = os.path.join(job.output_dir, f"bias_{val_a}_{val_b}.{job.format}")
        _atomic_savefig(fig, path)
        plt.close(fig)
        written.append((path, n_boxes))
    return written


def render_order_histograms(job: PlotJob) -> list[tuple[str, int]]:
    """Histograms of the discovered order k / n*, one figure per
    (method, noise family) with a panel per sample size."""
    frame = load_results(job.input_csv)
    frame = frame[frame["order_found"].notna()]
    if frame.empty:
        raise SchemaError("no rows with a discovered order to histogram")
    os.makedirs(job.output_dir, exist_ok=True)

    written = []
    for (method, family), group in sorted(frame.groupby(["method", "noise_family"])):
        sizes = sorted(group["n"].unique())
        fig, axes = plt.subplots(
            1, len(sizes), figsize=(2.4 * len(sizes) + 0.8, 2.8),
            sharey=True, squeeze=False,
        )
        panels = 0
        for ax, size in zip(axes[0], sizes):
            orders = group.loc[group["n"] == size, "order_found"].astype(int)
            lo, hi = int(orders.min()), int(orders.max())
            bins = [b - 0.5 for b in range(lo, hi + 2)]
            ax.hist(orders, bins=bins, rwidth=0.8, color=METHOD_COLORS[0])
            ax.set_xticks(range(lo, hi + 1))
            ax.set_title(f"n = {int(size)}", fontsize="small")
            ax.set_xlabel("discovered order")
            panels += 1
        axes[0][0].set_ylabel("replicates")
        fig.suptitle(f"{method} on {family}")
        fig.tight_layout()
        path = os.path.join(job.output_dir, f"orders_{method}_{family}.{job.format}")
        _atomic_savefig(fig, path)
        plt.close(fig)
        written.append((path, panels))
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Render results CSVs into bias boxplots and order histograms"
    )
    parser.add_argument("results_csv")
    parser.add_argument("out_dir")
    parser.add_argument("--format", default="svg", choices=["svg", "png"])
    parser.add_argument("--facet", default="by_scenario",
                        choices=["by_scenario", "by_noise"])
    args = parser.parse_args(argv)

    job = PlotJob(
        input_csv=args.results_csv,
        output_dir=args.out_dir,
        facet=args.facet,
        format=args.format,
    )
    try:
        boxplots = render_bias_boxplots(job)
        try:
            histograms = render_order_histograms(job)
        except SchemaError:
            histograms = []  # OLS-only runs carry no discovered orders
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path, count in boxplots:
        print(f"wrote {path} ({count} boxes)")
    for path, count in histograms:
        print(f"wrote {path} ({count} panels)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
