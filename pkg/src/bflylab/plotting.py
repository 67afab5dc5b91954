"""Report figures rendered next to the delimited outputs.

Every CLI report path gets a sibling .png; callers pass the rows they
already wrote to CSV so figures and tables can never drift apart.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

KIND_COLORS = {
    "fft": "#1f77b4",
    "butterfly": "#ff7f0e",
    "attention": "#2ca02c",
    "postp": "#9467bd",
    "mac": "#8c564b",
}


def plot_latency_breakdown(rows, path, title="Per-layer exposed cycles"):
    layers = [r for r in rows if r["layer"] != "total"]
    fig, ax = plt.subplots(figsize=(8, max(2.5, 0.28 * len(layers))))
    names = [r["layer"] for r in layers]
    vals = [r["exposed_cycles"] for r in layers]
    colors = [KIND_COLORS.get(r["kind"], "#7f7f7f") for r in layers]
    ax.barh(range(len(layers)), vals, color=colors)
    ax.set_yticks(range(len(layers)), names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("exposed cycles")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_bandwidth_sweep(rows, roofline_seconds, saturation_gb_s, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    bws = [r["bandwidth_gb_s"] for r in rows]
    lats = [r["seconds"] * 1e3 for r in rows]
    ax.plot(bws, lats, marker="o", label="latency")
    ax.axhline(roofline_seconds * 1e3, ls="--", color="gray", label="compute roofline")
    if saturation_gb_s is not None:
        ax.axvline(saturation_gb_s, ls=":", color="red", label=f"saturation {saturation_gb_s:g} GB/s")
    ax.set_xscale("log")
    ax.set_xlabel("off-chip bandwidth (GB/s)")
    ax.set_ylabel("latency (ms)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_pareto(points, front, selected, path):
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    xs = [p.latency_seconds * 1e3 for p in points if math.isfinite(p.latency_seconds)]
    ys = [p.accuracy for p in points if math.isfinite(p.latency_seconds)]
    ax.scatter(xs, ys, s=4, alpha=0.25, color="#1f77b4", rasterized=True, label="designs")
    if front:
        fx = [p.latency_seconds * 1e3 for p in front]
        fy = [p.accuracy for p in front]
        ax.plot(fx, fy, color="#8c2d04", marker="o", ms=4, lw=1.5, label="Pareto front")
    if selected is not None:
        ax.scatter(
            [selected.latency_seconds * 1e3], [selected.accuracy],
            marker="*", s=180, color="red", zorder=5, label="selected",
        )
    ax.set_xscale("log")
    ax.set_xlabel("latency (ms)")
    ax.set_ylabel("accuracy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_flops(rows, path):
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    families = [r["family"] for r in rows]
    for ax, key in zip(axes, ("flops", "params")):
        ax.bar(families, [r[key] for r in rows], color="#1f77b4")
        ax.set_yscale("log")
        ax.set_ylabel(key)
        ax.tick_params(axis="x", labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
