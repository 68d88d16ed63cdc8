"""t-SNE projection of source-error embeddings with model/category markers."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from sklearn.manifold import TSNE

from .bundle import AnalysisBundle, BundleError, SourceRow
from .sidecar import write_sidecar

MIN_ROWS_FLOOR = 10
DEFAULT_PERPLEXITY = 30.0
DEFAULT_ITERATIONS = 1000

_MARKERS = ["o", "s", "^", "D", "v", "P", "X", "*"]


def _gather_rows(bundles: Iterable[AnalysisBundle]) -> list[SourceRow]:
    rows: list[SourceRow] = []
    dimension: int | None = None
    for b in bundles:
        if dimension is None:
            dimension = b.dimension
        elif b.dimension != dimension:
            raise BundleError(
                f"bundles disagree on embedding dimension: "
                f"{dimension} vs {b.dimension} ({b.root})"
            )
        rows.extend(b.sources)
    return rows


def project_tsne(
    bundles: Sequence[AnalysisBundle],
    perplexity: float = DEFAULT_PERPLEXITY,
    seed: int = 0,
    n_iter: int = DEFAULT_ITERATIONS,
) -> tuple[list[SourceRow], np.ndarray]:
    """Project all source rows to 2-D; deterministic given the seed.

    Returns the rows in projection order alongside an (n, 2) coordinate
    array so callers keep the source metadata next to each point.
    """
    rows = _gather_rows(bundles)
    required = max(MIN_ROWS_FLOOR, math.ceil(3 * perplexity))
    if len(rows) < required:
        raise BundleError(
            f"t-SNE with perplexity {perplexity} requires at least "
            f"{required} rows; got {len(rows)}"
        )
    x = np.stack([r.embedding for r in rows])
    model = TSNE(
        n_components=2,
        perplexity=perplexity,
        max_iter=n_iter,
        random_state=seed,
        init="pca",
    )
    coords = np.asarray(model.fit_transform(x), dtype=float)
    return rows, coords


def plot_tsne(
    bundles: Sequence[AnalysisBundle],
    out_dir: Path | str,
    perplexity: float = DEFAULT_PERPLEXITY,
    seed: int = 0,
    n_iter: int = DEFAULT_ITERATIONS,
) -> dict[str, Path]:
    """Scatter plot of the projection: marker per model, colour per category."""
    rows, coords = project_tsne(bundles, perplexity=perplexity, seed=seed,
                                n_iter=n_iter)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig_path = out_dir / "tsne.png"

    models = sorted({r.model_tag for r in rows})
    categories = sorted({r.category for r in rows})
    cmap = plt.get_cmap("tab20")
    colour = {c: cmap(i % cmap.N) for i, c in enumerate(categories)}

    fig, ax = plt.subplots(figsize=(8, 6))
    for mi, tag in enumerate(models):
        idx = [i for i, r in enumerate(rows) if r.model_tag == tag]
        ax.scatter(
            coords[idx, 0],
            coords[idx, 1],
            c=[colour[rows[i].category] for i in idx],
            marker=_MARKERS[mi % len(_MARKERS)],
            s=22,
            edgecolors="none",
            label=tag,
        )
    ax.set_xlabel("t-SNE 1")
    ax.set_ylabel("t-SNE 2")
    ax.set_title("Source-error embeddings (t-SNE)")
    ax.legend(title="model", loc="best")
    fig.tight_layout()
    fig.savefig(fig_path, dpi=150)
    plt.close(fig)

    write_sidecar(
        fig_path,
        ["para_id", "model_tag", "category", "step", "para_error",
         "active", "x", "y"],
        [
            [r.para_id, r.model_tag, r.category, r.step, r.para_error,
             r.active, coords[i, 0], coords[i, 1]]
            for i, r in enumerate(rows)
        ],
    )
    return {"figure": fig_path, "sidecar": fig_path.with_suffix(".csv")}
