"""Read-only loading of exported run bundles.

A bundle directory is produced by ``sea export`` and contains at least
``sources.jsonl`` and ``bundle.json``; it may also carry ``steps.jsonl``,
``report.json``, ``dag.json``, and a ``crossval.json`` with one cell or a
list of cells from ``sea crossval --out``. Nothing here writes into the
bundle directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class BundleError(ValueError):
    """A bundle directory is missing files or violates its schema."""


@dataclass(frozen=True)
class SourceRow:
    para_id: str
    model_tag: str
    category: str
    step: int
    para_error: float
    active: bool
    embedding: np.ndarray


@dataclass
class AnalysisBundle:
    root: Path
    model_tag: str
    run_id: str
    dimension: int
    partial: bool
    sources: list[SourceRow] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    report: dict | None = None
    crossval: list[dict] = field(default_factory=list)

    @property
    def label(self) -> str:
        """Series label: model tag plus variant when the report records one."""
        if self.report and self.report.get("variant"):
            return f"{self.model_tag}/{self.report['variant']}"
        return self.model_tag


_CELL_KEYS = {"provider", "testee", "n_questions", "accuracy", "correlation"}

_SOURCE_KEYS = {
    "para_id", "model_tag", "category", "step", "para_error", "active",
    "embedding",
}


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise BundleError(f"{path.name}:{n}: invalid JSON ({exc})") from exc
    return rows


def _validate_cell(cell: dict, where: str) -> dict:
    if not isinstance(cell, dict) or not _CELL_KEYS <= set(cell):
        missing = _CELL_KEYS - set(cell) if isinstance(cell, dict) else _CELL_KEYS
        raise BundleError(f"{where}: crossval cell missing keys {sorted(missing)}")
    return cell


def load_crossval_cells(path: Path) -> list[dict]:
    """Parse a crossval.json holding one cell object or a list of cells."""
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path}: invalid JSON ({exc})") from exc
    cells = data if isinstance(data, list) else [data]
    return [_validate_cell(c, str(path)) for c in cells]


def load_bundle(root: Path | str) -> AnalysisBundle:
    root = Path(root)
    meta_path = root / "bundle.json"
    sources_path = root / "sources.jsonl"
    if not meta_path.exists() or not sources_path.exists():
        raise BundleError(f"{root} is not a bundle (needs bundle.json and sources.jsonl)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    model_tag = str(meta.get("model_tag", ""))
    if not model_tag:
        raise BundleError(f"{root}: bundle.json model_tag is empty")
    dimension = int(meta["dimension"])

    sources = []
    for n, row in enumerate(_read_jsonl(sources_path), 1):
        if not _SOURCE_KEYS <= set(row):
            missing = sorted(_SOURCE_KEYS - set(row))
            raise BundleError(f"sources.jsonl:{n}: missing keys {missing}")
        emb = np.asarray(row["embedding"], dtype=float)
        if emb.shape != (dimension,):
            raise BundleError(
                f"sources.jsonl:{n}: embedding has shape {emb.shape}, "
                f"expected ({dimension},)"
            )
        tag = str(row["model_tag"])
        if not tag:
            raise BundleError(f"sources.jsonl:{n}: model_tag is empty")
        sources.append(SourceRow(
            para_id=str(row["para_id"]),
            model_tag=tag,
            category=str(row["category"]),
            step=int(row["step"]),
            para_error=float(row["para_error"]),
            active=bool(row["active"]),
            embedding=emb,
        ))

    steps_path = root / "steps.jsonl"
    steps = _read_jsonl(steps_path) if steps_path.exists() else []
    report_path = root / "report.json"
    report = (json.loads(report_path.read_text(encoding="utf-8"))
              if report_path.exists() else None)
    cv_path = root / "crossval.json"
    crossval = load_crossval_cells(cv_path) if cv_path.exists() else []

    return AnalysisBundle(
        root=root,
        model_tag=model_tag,
        run_id=str(meta.get("run_id", "")),
        dimension=dimension,
        partial=bool(meta.get("partial", False)),
        sources=sources,
        steps=steps,
        report=report,
        crossval=crossval,
    )
