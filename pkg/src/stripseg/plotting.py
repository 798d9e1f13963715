"""Report figures rendered to files with the Agg backend."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_loss(log: Dict[str, np.ndarray], path, smooth: int = 20) -> Path:
    """Total and per-level loss against step; a running mean is drawn over the raw curve."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    steps = log["step"]
    for key in ["loss"] + sorted(k for k in log if k.startswith("loss_")):
        y = log[key]
        k = max(1, min(smooth, len(y)))
        smoothed = np.convolve(y, np.ones(k) / k, mode="valid")
        line, = ax.plot(steps[k - 1 :], smoothed, label=key, lw=1.5 if key == "loss" else 1)
        if key == "loss":
            ax.plot(steps, y, color=line.get_color(), alpha=0.25, lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("cross-entropy")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_class_bars(values: Dict[str, Optional[float]], path, title: str, ylabel: str) -> Path:
    names = list(values)
    heights = [np.nan if values[n] is None else 100 * values[n] for n in names]
    fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(names) + 1), 3.5))
    ax.bar(range(len(names)), np.nan_to_num(heights), color="#4477aa")
    for i, h in enumerate(heights):
        ax.text(i, (0 if np.isnan(h) else h) + 1, "-" if np.isnan(h) else f"{h:.1f}", ha="center", fontsize=7)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 105)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_report(report, out_dir) -> Sequence[Path]:
    """Bar charts of structure-class MIoU and object F1 per matching threshold."""
    out_dir = Path(out_dir)
    cols = report.structure_columns()
    lookup = {c: v for classes in report.miou.values() for c, v in classes.items()}
    paths = [plot_class_bars({c: lookup.get(c) for c in cols}, out_dir / "miou.png", "pixel MIoU", "IoU (%)")]
    for thr, scores in sorted(report.objects.items(), key=lambda kv: float(kv[0])):
        vals = {c: scores.get(c, {}).get("f1") for c in cols}
        paths.append(plot_class_bars(vals, out_dir / f"f1_{thr}.png", f"object F1 @ IoU {thr}", "F1 (%)"))
    return paths
