"""Render experiment results to files: JSON, CSV tables, and figures.

The JSON is written with sorted keys and no volatile fields, so two runs of
the same configuration produce byte-identical reports.  Figures are PNG
files rendered off-screen.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvalReport, MethodResult

SUMMARY_FIELDS = ["method", "protocol", "ws", "session", "mean_acc", "se", "n_runs"]


def write_report_json(report: EvalReport, path) -> None:
    Path(path).write_text(report.to_json() + "\n", encoding="utf-8")


def load_report_json(path) -> EvalReport:
    return EvalReport.from_json(Path(path).read_text(encoding="utf-8"))


def write_summary_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        for row in report.summary_rows():
            writer.writerow(row)


def write_confusion_csv(result: MethodResult, class_names: list[str], path) -> None:
    """Rows are true classes, columns predicted classes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + list(class_names))
        for name, row in zip(class_names, result.confusion):
            writer.writerow([name] + list(row))


def _result_tag(result: MethodResult, multi_ws: bool) -> str:
    tag = result.method.replace("+", "_")
    if multi_ws:
        tag += f"_ws{result.ws}"
    if result.session != "all":
        tag += f"_s{result.session}"
    return tag


def plot_accuracy_bars(report: EvalReport, path) -> None:
    """Mean accuracy per configuration with standard-error bars."""
    multi_ws = len({r.ws for r in report.results}) > 1
    labels = [_result_tag(r, multi_ws) for r in report.results]
    means = [100.0 * r.mean_acc for r in report.results]
    errs = [100.0 * r.se for r in report.results]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels)), 4.0))
    x = np.arange(len(labels))
    ax.bar(x, means, yerr=errs, capsize=4, color="#4878cf")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 100)
    ax.set_title(f"{report.protocol} protocol, {report.class_mode} classes")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_confusion(result: MethodResult, class_names: list[str], path) -> None:
    cm = np.asarray(result.confusion, dtype=np.float64)
    totals = cm.sum(axis=1, keepdims=True)
    frac = np.divide(cm, totals, out=np.zeros_like(cm), where=totals > 0)
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    im = ax.imshow(frac, cmap="Blues", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(class_names)))
    ax.set_yticks(range(len(class_names)))
    ax.set_xticklabels(class_names)
    ax.set_yticklabels(class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(result.method)
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            color = "white" if frac[i, j] > 0.5 else "black"
            ax.text(j, i, f"{int(cm[i, j])}", ha="center", va="center", color=color)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ws_sweep(report: EvalReport, path) -> None:
    """Accuracy against range-window size, one line per method."""
    methods = sorted({r.method for r in report.results})
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for method in methods:
        rows = sorted(
            (r for r in report.results if r.method == method and r.session == "all"),
            key=lambda r: r.ws,
        )
        ax.errorbar(
            [r.ws for r in rows],
            [100.0 * r.mean_acc for r in rows],
            yerr=[100.0 * r.se for r in rows],
            marker="o",
            capsize=3,
            label=method,
        )
    ax.set_xlabel("range window size (bins)")
    ax.set_ylabel("accuracy (%)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_history(history: list[dict], path) -> None:
    """Loss curves plus validation accuracy from a training history."""
    epochs = [int(r["epoch"]) for r in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    ax1.plot(epochs, [float(r["train_loss"]) for r in history], label="train")
    ax1.plot(epochs, [float(r["val_loss"]) for r in history], label="val")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("cross-entropy")
    ax1.grid(alpha=0.3)
    ax1.legend()
    ax2.plot(epochs, [100.0 * float(r["val_acc"]) for r in history], color="#4878cf")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("val accuracy (%)")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(report: EvalReport, out_dir) -> list[str]:
    """Write the JSON, CSV tables, and figures; returns the file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    write_report_json(report, out / "report.json")
    written.append("report.json")
    write_summary_csv(report, out / "summary.csv")
    written.append("summary.csv")

    multi_ws = len({r.ws for r in report.results}) > 1
    for result in report.results:
        tag = _result_tag(result, multi_ws)
        write_confusion_csv(result, report.class_names, out / f"confusion_{tag}.csv")
        written.append(f"confusion_{tag}.csv")
        plot_confusion(result, report.class_names, out / f"confusion_{tag}.png")
        written.append(f"confusion_{tag}.png")

    plot_accuracy_bars(report, out / "accuracy.png")
    written.append("accuracy.png")
    if multi_ws:
        plot_ws_sweep(report, out / "ws_sweep.png")
        written.append("ws_sweep.png")
    return written
