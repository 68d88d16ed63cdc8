"""Offline analysis and figures over exported SEA run bundles."""

from .bundle import AnalysisBundle, BundleError, SourceRow, load_bundle
from .curves import plot_curves, step_series
from .heatmap import plot_crossval
from .tsne import plot_tsne, project_tsne

__all__ = [
    "AnalysisBundle",
    "BundleError",
    "SourceRow",
    "load_bundle",
    "plot_curves",
    "plot_crossval",
    "plot_tsne",
    "project_tsne",
    "step_series",
]
