"""Per-step error, cumulative error, and ablation-overlay curves."""

from __future__ import annotations

import warnings
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bundle import AnalysisBundle, BundleError
from .sidecar import write_sidecar


def step_series(bundle: AnalysisBundle) -> dict:
    """The per-step series of one bundle, taken verbatim from steps.jsonl."""
    return {
        "t": [s["t"] for s in bundle.steps],
        "step_error": [s["step_error"] for s in bundle.steps],
        "cumulative_error": [s["cumulative_error"] for s in bundle.steps],
    }


def _collect(bundles: Sequence[AnalysisBundle]) -> dict[str, dict]:
    series: dict[str, dict] = {}
    for b in bundles:
        label = b.label
        if label in series:
            label = f"{label} ({b.run_id})"
        s = step_series(b)
        if not s["t"]:
            warnings.warn(f"series {label!r} has no recorded steps; omitted")
            continue
        series[label] = s
    if not series:
        raise BundleError("no non-empty step series to plot")
    return series


def _common_prefix(series: dict[str, dict]) -> int:
    lengths = {label: len(s["t"]) for label, s in series.items()}
    n = min(lengths.values())
    if len(set(lengths.values())) > 1:
        warnings.warn(
            f"mismatched step counts {lengths}; plotting the "
            f"longest common prefix of {n} steps"
        )
    return n


def _line_figure(series: dict[str, dict], n: int, key: str, title: str,
                 ylabel: str, fig_path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, s in series.items():
        ax.plot(s["t"][:n], s[key][:n], marker="o", markersize=3, label=label)
    ax.set_xlabel("step t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=150)
    plt.close(fig)


def plot_curves(bundles: Sequence[AnalysisBundle],
                out_dir: Path | str) -> dict[str, Path]:
    """Three figures (per-step, cumulative, overlay), each with a CSV sidecar.

    Values are plotted exactly as recorded; no smoothing.
    """
    series = _collect(bundles)
    n = _common_prefix(series)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths: dict[str, Path] = {}
    specs = [
        ("per_step_error", "step_error", "Per-step error", "T_E"),
        ("cumulative_error", "cumulative_error", "Cumulative error", "T_S"),
    ]
    for name, key, title, ylabel in specs:
        fig_path = out_dir / f"{name}.png"
        _line_figure(series, n, key, title, ylabel, fig_path)
        write_sidecar(
            fig_path,
            ["label", "t", key],
            [[label, s["t"][i], s[key][i]]
             for label, s in series.items() for i in range(n)],
        )
        paths[name] = fig_path

    overlay_path = out_dir / "ablation_overlay.png"
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for label, s in series.items():
        ax1.plot(s["t"][:n], s["step_error"][:n], marker="o", markersize=3,
                 label=label)
        ax2.plot(s["t"][:n], s["cumulative_error"][:n], marker="o",
                 markersize=3, label=label)
    ax1.set_xlabel("step t")
    ax1.set_ylabel("T_E")
    ax1.set_title("Per-step error")
    ax2.set_xlabel("step t")
    ax2.set_ylabel("T_S")
    ax2.set_title("Cumulative error")
    ax2.legend(loc="best")
    fig.tight_layout()
    fig.savefig(overlay_path, dpi=150)
    plt.close(fig)
    write_sidecar(
        overlay_path,
        ["label", "t", "step_error", "cumulative_error"],
        [[label, s["t"][i], s["step_error"][i], s["cumulative_error"][i]]
         for label, s in series.items() for i in range(n)],
    )
    paths["ablation_overlay"] = overlay_path
    return paths
