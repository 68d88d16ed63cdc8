"""Cross-validation heatmaps: subset providers on x, testees on y."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bundle import BundleError
from .sidecar import write_sidecar

_NULL_FOOTNOTE = "hatched: value undefined for this cell"


def _matrix(cells: Sequence[dict], key: str
            ) -> tuple[list[str], list[str], np.ndarray, dict]:
    providers = sorted({c["provider"] for c in cells})
    testees = sorted({c["testee"] for c in cells})
    grid = np.full((len(testees), len(providers)), np.nan)
    seen: dict[tuple[str, str], dict] = {}
    for c in cells:
        pos = (c["testee"], c["provider"])
        if pos in seen:
            raise BundleError(f"duplicate crossval cell for {pos}")
        seen[pos] = c
        value = c.get(key)
        if value is not None:
            grid[testees.index(pos[0]), providers.index(pos[1])] = value
    return providers, testees, grid, seen


def _heatmap(cells: Sequence[dict], key: str, title: str,
             fig_path: Path) -> None:
    providers, testees, grid, seen = _matrix(cells, key)
    fig, ax = plt.subplots(
        figsize=(1.6 + 1.1 * len(providers), 1.4 + 0.9 * len(testees))
    )
    masked = np.ma.masked_invalid(grid)
    im = ax.imshow(masked, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(providers)), providers)
    ax.set_yticks(range(len(testees)), testees)
    ax.set_xlabel("subset provider")
    ax.set_ylabel("testee")
    ax.set_title(title)

    has_null = False
    for yi, testee in enumerate(testees):
        for xi, provider in enumerate(providers):
            if np.isnan(grid[yi, xi]):
                has_null = True
                ax.add_patch(plt.Rectangle(
                    (xi - 0.5, yi - 0.5), 1, 1, fill=False, hatch="///",
                    edgecolor="gray",
                ))
            else:
                ax.text(xi, yi, f"{grid[yi, xi]:.3f}", ha="center",
                        va="center", color="white", fontsize=9)
    fig.colorbar(im, ax=ax, shrink=0.85)
    if has_null:
        fig.text(0.01, 0.01, _NULL_FOOTNOTE, fontsize=8, color="gray")
    fig.tight_layout(rect=(0, 0.04, 1, 1) if has_null else None)
    fig.savefig(fig_path, dpi=150)
    plt.close(fig)

    rows = []
    for yi, testee in enumerate(testees):
        for xi, provider in enumerate(providers):
            cell = seen.get((testee, provider))
            if cell is None:
                rows.append([provider, testee, "", "", "missing cell"])
                continue
            value = cell.get(key)
            rows.append([
                provider, testee, cell["n_questions"],
                "" if value is None else value,
                cell.get("correlation_note", ""),
            ])
    write_sidecar(
        fig_path,
        ["provider", "testee", "n_questions", key, "note"],
        rows,
    )


def plot_crossval(cells: Sequence[dict],
                  out_dir: Path | str) -> dict[str, Path]:
    """Correlation and accuracy heatmaps with CSV sidecars.

    Cells with a null value (e.g. undefined correlation) render hatched
    with a footnote.
    """
    if not cells:
        raise BundleError("no crossval cells to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for key, title in (("correlation", "Per-question correctness correlation"),
                       ("accuracy", "Testee accuracy on provider subsets")):
        fig_path = out_dir / f"crossval_{key}.png"
        _heatmap(cells, key, title, fig_path)
        paths[key] = fig_path
    return paths
