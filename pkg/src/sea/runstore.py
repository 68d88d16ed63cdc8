"""Run-store layout, locking, checkpoints, and artifact export.

A run store is a plain directory:

    runs/<run_id>/
        manifest.json       written before step 1
        config.json         config snapshot
        steps.jsonl         one StepRecord per line, append-only
        state.json          resume checkpoint (atomic replace)
        dag.json            relation DAG snapshot
        qa_items.jsonl      every validated question
        answers.jsonl       every testee answer
        usage.jsonl         every ledger charge
        transcripts.jsonl   raw generator replies (audit)
        report.json         written by the report command
"""

from __future__ import annotations

import json
import os
import shutil
from pathlib import Path

import numpy as np

from .errors import RunStoreError

STEP_FILES = (
    "steps.jsonl",
    "qa_items.jsonl",
    "answers.jsonl",
    "usage.jsonl",
    "transcripts.jsonl",
)


def dumps(obj) -> str:
    """Canonical one-line JSON used for all artifacts (sorted keys)."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


class RunStore:
    def __init__(self, root: Path | str, create: bool = False):
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)
        elif not self.root.is_dir():
            raise RunStoreError(f"run store not found: {self.root}")
        self._lock_fd: int | None = None

    # -- locking (one writer per run directory) ------------------------

    @property
    def lock_path(self) -> Path:
        return self.root / ".lock"

    def acquire_lock(self) -> None:
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RunStoreError(
                f"run store {self.root} is locked by another writer "
                f"(remove {self.lock_path} if that process is dead)"
            )
        os.write(fd, str(os.getpid()).encode())
        self._lock_fd = fd

    def release_lock(self) -> None:
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self._lock_fd = None
        if self.lock_path.exists():
            self.lock_path.unlink()

    # -- paths ----------------------------------------------------------

    def path(self, name: str) -> Path:
        return self.root / name

    # -- writes ---------------------------------------------------------

    def write_json(self, name: str, obj) -> None:
        tmp = self.root / (name + ".tmp")
        tmp.write_text(dumps(obj) + "\n", encoding="utf-8")
        tmp.replace(self.root / name)

    def read_json(self, name: str):
        p = self.root / name
        if not p.exists():
            raise RunStoreError(f"missing artifact {name} in {self.root}")
        return json.loads(p.read_text(encoding="utf-8"))

    def append_lines(self, name: str, rows: list[dict]) -> None:
        with (self.root / name).open("a", encoding="utf-8") as fh:
            for row in rows:
                fh.write(dumps(row) + "\n")

    def read_lines(self, name: str) -> list[dict]:
        p = self.root / name
        if not p.exists():
            return []
        return [
            json.loads(line)
            for line in p.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]

    def truncate_after_step(self, t: int) -> None:
        """Drop any rows recorded for steps greater than t (partial step
        discard on resume)."""
        for name in STEP_FILES:
            p = self.root / name
            if not p.exists():
                continue
            keep = [
                line
                for line in p.read_text(encoding="utf-8").splitlines()
                if line.strip() and json.loads(line).get("t", 0) <= t
            ]
            p.write_text("".join(k + "\n" for k in keep), encoding="utf-8")


def export_analysis_bundle(store: RunStore, out_dir: Path | str,
                           embeddings: dict[str, np.ndarray],
                           model_tag: str, categories: dict[str, str],
                           dimension: int) -> Path:
    """Bundle source-error embeddings plus run artifacts for offline analysis.

    One sources.jsonl row per DAG node; aborts on an embedding dimension
    mismatch against the manifest. An incomplete run exports partially with
    a warning flag in bundle.json.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = store.read_json("manifest.json")
    if int(manifest["embedding_dimension"]) != dimension:
        raise RunStoreError(
            f"embedding dimension mismatch: manifest says "
            f"{manifest['embedding_dimension']}, got {dimension}"
        )
    dag = store.read_json("dag.json")
    rows = []
    for node in dag["nodes"]:
        pid = node["id"]
        vec = embeddings.get(pid)
        if vec is None:
            raise RunStoreError(f"missing embedding for source {pid}")
        if vec.shape != (dimension,):
            raise RunStoreError(f"embedding dim mismatch for {pid}")
        rows.append(
            {
                "para_id": pid,
                "model_tag": model_tag,
                "category": categories.get(pid, ""),
                "step": node["step"],
                "para_error": node["error"],
                "active": node["active"],
                "embedding": [float(x) for x in vec],
            }
        )
    with (out_dir / "sources.jsonl").open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(dumps(row) + "\n")
    for name in ("steps.jsonl", "dag.json"):
        src = store.path(name)
        if src.exists():
            shutil.copy(src, out_dir / name)
    report = store.path("report.json")
    if report.exists():
        shutil.copy(report, out_dir / "report.json")
    status = manifest.get("status", "unknown")
    (out_dir / "bundle.json").write_text(
        dumps(
            {
                "model_tag": model_tag,
                "run_id": manifest.get("run_id", ""),
                "n_sources": len(rows),
                "dimension": dimension,
                "partial": status not in ("done", "exhausted"),
            }
        )
        + "\n"
    )
    return out_dir
