"""Static figures rendered from the CSV/JSON report data."""

from __future__ import annotations

import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# stable element ids and no timestamp, so identical data gives identical SVG
STYLE = {
    "svg.hashsalt": "kittic",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}
SAVE_KW = {"metadata": {"Date": None}}

KIND_ORDER = ["fog", "rain", "snow", "sunlight"]
SEVERITY_COLORS = {"low": "#7fa7d1", "high": "#1f4e8c"}


def _read_rows(path) -> list:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, **SAVE_KW)
    plt.close(fig)


def rce_bars(plot_csv, out_path, metric: str = "3d", difficulty: str = "moderate") -> None:
    """Grouped bars of RCE per corruption, one bar per severity."""
    rows = [
        r for r in _read_rows(plot_csv) if r["metric"] == metric and r["difficulty"] == difficulty
    ]
    values = defaultdict(dict)
    for r in rows:
        values[r["corruption"]][r["severity"]] = 100.0 * float(r["rce"])
    kinds = [k for k in KIND_ORDER if k in values] + sorted(set(values) - set(KIND_ORDER))
    severities = [s for s in ("low", "high") if any(s in values[k] for k in kinds)]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        width = 0.8 / max(1, len(severities))
        for j, sev in enumerate(severities):
            xs = [i + (j - (len(severities) - 1) / 2) * width for i in range(len(kinds))]
            ys = [values[k].get(sev, 0.0) for k in kinds]
            ax.bar(xs, ys, width, label=sev, color=SEVERITY_COLORS.get(sev))
        ax.set_xticks(range(len(kinds)))
        ax.set_xticklabels(kinds)
        ax.set_ylabel("RCE (%)")
        ax.set_title(f"{metric.upper()} AP, {difficulty}")
        ax.axhline(0.0, color="0.3", lw=0.6)
        if severities:
            ax.legend()
        _save(fig, out_path)


def pr_curves(pr_csv, out_path) -> None:
    """Interpolated precision-recall curves, one panel per metric."""
    curves = defaultdict(lambda: ([], []))
    for r in _read_rows(pr_csv):
        rec, prec = curves[(r["metric"], r["difficulty"])]
        rec.append(float(r["recall"]))
        prec.append(float(r["precision"]))
    metrics = sorted({m for m, _ in curves})
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, max(1, len(metrics)), figsize=(4.0 * max(1, len(metrics)), 3.0), squeeze=False)
        for ax, metric in zip(axes[0], metrics):
            for (m, diff), (rec, prec) in sorted(curves.items()):
                if m == metric:
                    ax.step(rec, prec, where="post", label=diff)
            ax.set_xlim(0, 1)
            ax.set_ylim(0, 1.02)
            ax.set_xlabel("recall")
            ax.set_ylabel("precision")
            ax.set_title(f"{metric.upper()} AP (R40)")
            ax.legend()
        _save(fig, out_path)


def gate_bars(report: dict, out_path) -> None:
    """Mean LiDAR/camera gate weight per corruption tag."""
    runs = report.get("runs", [report])
    tags = ["clean", "lidar_corrupt", "camera_corrupt"]
    means = [
        sum(run["gate"]["mean_w_P"][t] for run in runs) / len(runs) for t in tags
    ]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.bar(tags, means, color="#1f4e8c", label="w_P")
        ax.bar(tags, [1 - m for m in means], bottom=means, color="#d9a441", label="w_I")
        ax.set_ylim(0, 1)
        ax.set_ylabel("mean gate weight")
        ax.legend(loc="upper right")
        _save(fig, out_path)
