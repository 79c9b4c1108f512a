"""Deterministic SVG charts from sweep and run CSVs."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..errors import ContractViolation  # noqa: E402

PANELS = ("return", "memory_regret", "active_regret", "passive_regret")
_RC = {"svg.hashsalt": "adastack", "svg.fonttype": "none", "font.size": 8}


def _read(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ContractViolation(f"{path} has no data rows")
    return rows


def _need(rows, cols, path):
    missing = [c for c in cols if c not in rows[0]]
    if missing:
        raise ContractViolation(f"{path} lacks columns {missing}")


def _save(fig, path: Path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def bars(aggregate_csv, out_dir, metrics=PANELS, ci95: bool = False) -> Path:
    """One panel per metric, one bar per sweep cell, whiskers = std (or 95% CI)."""
    rows = _read(aggregate_csv)
    _need(rows, ("label", "metric", "mean", "std", "n"), aggregate_csv)
    labels = list(dict.fromkeys(r["label"] for r in rows))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 3.0), squeeze=False)
        for ax, m in zip(axes[0], metrics):
            pick = {r["label"]: r for r in rows if r["metric"] == m}
            mu = np.array([float(pick[l]["mean"]) if l in pick else np.nan for l in labels])
            sd = np.array([float(pick[l]["std"]) if l in pick else np.nan for l in labels])
            if ci95:
                n = np.array([max(int(pick[l]["n"]), 1) if l in pick else 1 for l in labels])
                sd = 1.96 * sd / np.sqrt(n)
            x = np.arange(len(labels))
            ax.bar(x, np.nan_to_num(mu), yerr=np.nan_to_num(sd), capsize=2, color="0.55")
            ax.set_xticks(x)
            ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=6)
            ax.set_title(m)
        fig.tight_layout()
        path = out / "bars.svg"
        _save(fig, path)
    return path


def curves(csv_path, out_dir, metrics=PANELS) -> Path:
    """Learning curves from ``curves.csv`` (mean +- std bands) or a single-seed run CSV."""
    rows = _read(csv_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if "mean" in rows[0]:
        _need(rows, ("label", "step", "metric", "mean", "std"), csv_path)
        key, mean, std = "label", "mean", "std"
    else:
        _need(rows, ("run_id", "seed", "step", "metric", "value"), csv_path)
        for r in rows:
            r["label"] = f"{r['run_id']}/{r['seed']}"
        key, mean, std = "label", "value", None
    series = list(dict.fromkeys(r[key] for r in rows))
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 2.8), squeeze=False)
        for ax, m in zip(axes[0], metrics):
            for s in series:
                pts = [r for r in rows if r[key] == s and r["metric"] == m]
                if not pts:
                    continue
                x = np.array([float(r["step"]) for r in pts])
                y = np.array([float(r[mean]) for r in pts])
                ax.plot(x, y, lw=0.8, label=s)
                if std is not None:
                    e = np.array([float(r[std]) for r in pts])
                    ax.fill_between(x, y - e, y + e, alpha=0.2, lw=0)
            ax.set_title(m)
            ax.set_xlabel("step")
        axes[0][0].legend(fontsize=5)
        fig.tight_layout()
        path = out / "curves.svg"
        _save(fig, path)
    return path
