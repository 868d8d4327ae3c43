"""Figures written next to the machine-readable outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(direction="out")


def plot_training_curves(entries: list[dict], path) -> None:
    """Loss and validation metric per epoch from a metrics log."""
    fig, (ax_loss, ax_metric) = plt.subplots(1, 2, figsize=(9, 3.5))
    for split, color in (("train", "C0"), ("val", "C1")):
        rows = [e for e in entries if e["split"] == split]
        if not rows:
            continue
        epochs = [e["epoch"] for e in rows]
        ax_loss.plot(epochs, [e["loss"] for e in rows], color=color, label=split)
        ax_metric.plot(epochs, [e["metric"] for e in rows], color=color, label=split)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_metric.set_xlabel("epoch")
    ax_metric.set_ylabel("metric")
    ax_metric.set_ylim(-0.02, 1.02)
    for ax in (ax_loss, ax_metric):
        _style(ax)
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_benchmark(report: dict, path) -> None:
    """Bar chart of precompute and per-epoch time for each variant."""
    variants = report["variants"]
    names = [f"{v['name']}\nn={v['n']}, m={v['m']}" for v in variants]
    xs = range(len(variants))
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for ax, key, title in ((axes[0], "precompute_seconds", "precompute"),
                           (axes[1], "epoch_seconds", "training epoch")):
        ax.bar(xs, [v[key] for v in variants], color="0.4")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(names, fontsize=8)
        ax.set_ylabel("seconds (median)")
        ax.set_title(title)
        _style(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
