"""Matplotlib renderings of the delimited outputs.

Figures are a convenience layer over the CSV/JSON files, written next to
them; every function takes file paths or plain arrays so the plots can be
regenerated from saved runs.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _ensure_dir(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _read_metrics(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    return rows


def loss_curves(metrics_csv, out_png) -> None:
    """Averaged objective vs iteration, one line per (run, phase)."""
    rows = _read_metrics(metrics_csv)
    if not rows:
        return
    _ensure_dir(out_png)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    runs = sorted({r["run_id"] for r in rows})
    for run in runs:
        for phase, style in (("train", "-"), ("test", "--")):
            pts = [(int(r["iteration"]), float(r["objective_avg"]))
                   for r in rows if r["run_id"] == run and r["phase"] == phase]
            if not pts:
                continue
            pts.sort()
            xs, ys = zip(*pts)
            label = f"{run[:6]} {phase}" if len(runs) > 1 else phase
            ax.plot(xs, ys, style, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("averaged objective")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def gap_bars(summary: dict, out_png) -> None:
    """Final primal vs dual objective with the relative gap annotated."""
    _ensure_dir(out_png)
    p = summary.get("primal_objective_avg")
    d = summary.get("dual_objective_avg")
    if p is None or d is None:
        return
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.bar(["primal", "dual"], [p, d], color=["#4878d0", "#ee854a"])
    ax.set_ylabel("final averaged objective")
    gap = summary.get("relative_gap", float("nan"))
    ax.set_title(f"relative gap {gap:.2e}")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def ablation_curve(ablation_csv, out_png) -> None:
    """Final dual objective against the sampled pattern budget."""
    with open(ablation_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return
    _ensure_dir(out_png)
    xs = [int(r["patterns_requested"]) for r in rows]
    ys = [float(r["objective_avg"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(xs, ys, "o-")
    ax.set_xscale("log")
    ax.set_xlabel("sampled sign patterns")
    ax.set_ylabel("final averaged objective")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def robustness_curves(gaussian_csv, exponential_csv, out_png) -> None:
    """Two panels of train curves: gaussian vs exponential noise."""
    _ensure_dir(out_png)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=False)
    for ax, path, title in (
        (axes[0], gaussian_csv, "gaussian noise"),
        (axes[1], exponential_csv, "exponential noise"),
    ):
        rows = [r for r in _read_metrics(path) if r["phase"] == "train"]
        runs = sorted({r["run_id"] for r in rows})
        for run in runs:
            pts = sorted(
                (int(r["iteration"]), float(r["objective_avg"]))
                for r in rows if r["run_id"] == run
            )
            if pts:
                xs, ys = zip(*pts)
                ax.plot(xs, ys, label=run[:6])
        ax.set_title(title)
        ax.set_xlabel("iteration")
        ax.set_yscale("log")
        ax.legend()
    axes[0].set_ylabel("averaged train objective")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def cluster_maps(label_maps: np.ndarray, clusters: int, out_png,
                 max_images: int = 12) -> None:
    """Grid of per-pixel cluster label maps with a discrete colormap."""
    _ensure_dir(out_png)
    n = min(max_images, label_maps.shape[0])
    cols = min(4, n)
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(2.2 * cols, 2.2 * rows),
                             squeeze=False)
    cmap = plt.get_cmap("tab20", max(clusters, 2))
    for idx in range(rows * cols):
        ax = axes[idx // cols][idx % cols]
        ax.axis("off")
        if idx < n:
            ax.imshow(label_maps[idx], cmap=cmap, vmin=0, vmax=clusters - 1,
                      interpolation="nearest")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def frequency_grid(responses: np.ndarray, out_png, max_filters: int = 36) -> None:
    """Grid of DC-centered filter magnitude responses."""
    _ensure_dir(out_png)
    n = min(max_filters, responses.shape[0])
    cols = min(6, max(1, n))
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(1.8 * cols, 1.8 * rows),
                             squeeze=False)
    for idx in range(rows * cols):
        ax = axes[idx // cols][idx % cols]
        ax.axis("off")
        if idx < n:
            ax.imshow(responses[idx], cmap="magma", vmin=0.0, vmax=1.0,
                      interpolation="nearest")
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def triptych(noisy: np.ndarray, clean: np.ndarray, output: np.ndarray,
             out_png, title: str = "") -> None:
    """Input / target / output strip for one image."""
    _ensure_dir(out_png)
    fig, axes = plt.subplots(1, 3, figsize=(7.5, 2.8))
    for ax, img, name in zip(axes, (noisy, clean, output),
                             ("input", "target", "output")):
        ax.imshow(img, cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
        ax.set_title(name, fontsize=9)
        ax.axis("off")
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
