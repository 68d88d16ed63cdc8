"""CSV sidecars carrying the exact numbers plotted in each figure."""

from __future__ import annotations

import csv
from pathlib import Path


def sidecar_path(figure_path: Path) -> Path:
    return figure_path.with_suffix(".csv")


def write_sidecar(figure_path: Path, header: list[str],
                  rows: list[list]) -> Path:
    """Write the sidecar next to the figure.

    Floats pass through ``str`` (shortest round-trip repr), so reading the
    CSV back yields the plotted values exactly.
    """
    path = sidecar_path(figure_path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path
