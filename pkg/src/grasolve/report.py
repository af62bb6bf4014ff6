"""Render a MetricReport as a text table, JSON, CSV, and bar-chart figures."""

from __future__ import annotations

import csv
import os
from typing import Iterator, List, Tuple

from .evalrun import STAGE_METRICS, STAGES, MetricReport


def _ordered(report: MetricReport) -> Iterator[Tuple[str, str, float]]:
    """Yield (stage, metric, value) in the canonical table order."""
    for stage in STAGES:
        metrics = report.stages.get(stage)
        if not metrics:
            continue
        canonical = STAGE_METRICS[stage]
        for name in canonical:
            if name in metrics:
                yield stage, name, metrics[name]
        for name in sorted(set(metrics) - set(canonical)):
            yield stage, name, metrics[name]


def format_table(report: MetricReport) -> str:
    """Aligned text table with unit and percentage renderings side by side."""
    rows = [("stage", "metric", "value", "percent")]
    for stage, name, value in _ordered(report):
        rows.append((stage, name, f"{value:.6f}", f"{value * 100.0:.2f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in rows
    ]
    lines.append(
        f"records: {report.counts.get('records', 0)}  "
        f"errors: {report.counts.get('errors', 0)}"
    )
    return "\n".join(lines)


def write_json(report: MetricReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")


def write_csv(report: MetricReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "metric", "value", "percent"])
        for stage, name, value in _ordered(report):
            writer.writerow([stage, name, f"{value:.6f}", f"{value * 100.0:.2f}"])


def render_figures(report: MetricReport, out_dir: str) -> List[str]:
    """Write one bar chart per scored stage; returns the figure paths.

    Imports live inside the function so headless report paths (JSON, CSV)
    never pay for or require the plotting stack.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    paths: List[str] = []
    for stage in STAGES:
        metrics = report.stages.get(stage)
        if not metrics:
            continue
        names = [n for n in STAGE_METRICS[stage] if n in metrics]
        names += sorted(set(metrics) - set(names))
        values = [metrics[n] for n in names]
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.bar(range(len(names)), values, color="#4878a8")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names)
        ax.set_ylim(0.0, 1.05)
        ax.set_ylabel("score")
        ax.set_title(stage)
        for i, value in enumerate(values):
            ax.annotate(
                f"{value:.2f}",
                (i, value),
                textcoords="offset points",
                xytext=(0, 2),
                ha="center",
                fontsize=8,
            )
        fig.tight_layout()
        path = os.path.join(out_dir, f"{stage}.png")
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths
