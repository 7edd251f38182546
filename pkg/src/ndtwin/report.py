"""Matplotlib figure rendering for evaluation and what-if reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_eval_figures(report, y_true, y_pred, outdir) -> list:
    """Write prediction-quality figures; returns the created paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(y_true, y_pred, s=4, alpha=0.3, edgecolors="none")
    lim = [0, max(float(np.max(y_true)), float(np.max(y_pred))) * 1.05]
    ax.plot(lim, lim, "k--", lw=1)
    ax.set_xlim(lim)
    ax.set_ylim(lim)
    ax.set_xlabel("true latency (ms)")
    ax.set_ylabel("predicted latency (ms)")
    ax.set_title(f"MAE {report.mae_ms:.2f} ms, R2 {report.r2:.4f}" if report.r2 is not None else "predicted vs true")
    fig.tight_layout()
    p = outdir / "pred_vs_true.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    if report.per_regime:
        labels = list(report.per_regime)
        maes = [report.per_regime[k]["mae_ms"] for k in labels]
        fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(labels) + 2), 3.5))
        ax.bar(range(len(labels)), maes, color="#4878a8")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=45, ha="right")
        ax.set_ylabel("MAE (ms)")
        ax.set_title("per-regime accuracy")
        fig.tight_layout()
        p = outdir / "per_regime_mae.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    return paths


def render_whatif_figures(report, delta_true, delta_pred, outdir) -> list:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    bins = np.histogram_bin_edges(np.concatenate([delta_true, delta_pred]), bins=40)
    ax.hist(delta_true, bins=bins, alpha=0.55, label="observed")
    ax.hist(delta_pred, bins=bins, alpha=0.55, label="predicted")
    ax.axvline(0, color="k", lw=1)
    ax.set_xlabel("latency delta (ms)")
    ax.set_ylabel("pairs")
    sa = "n/a" if report.sign_agreement is None else f"{report.sign_agreement:.2f}"
    ax.set_title(f"{report.action} from {report.from_regime}: Sa={sa}")
    ax.legend()
    fig.tight_layout()
    p = outdir / "delta_hist.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(4, 3))
    sa_val = report.sign_agreement or 0.0
    ax.barh(["sign agreement"], [sa_val], color="#4a9d6a")
    ax.axvline(0.85, color="orange", ls="--", lw=1, label="High threshold")
    ax.axvline(0.55, color="red", ls="--", lw=1, label="Low threshold")
    ax.set_xlim(0, 1)
    ax.set_title(f"sensitivity: {report.sensitivity or 'n/a'} / grade: {report.deployment_grade}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    p = outdir / "sign_agreement.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths
