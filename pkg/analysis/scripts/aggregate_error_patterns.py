#!/usr/bin/env python3
"""Optional LLM-driven error-pattern aggregation over a bundle.

Disabled by default and excluded from the test suites: it needs a live
OpenAI-compatible generator endpoint. Cluster IDs are user-supplied (a CSV
mapping para_id to a cluster label) rather than computed here — visual
groupings from the t-SNE figure are a reasonable starting point.

Usage:
    SEA_GEN_API_KEY=... python aggregate_error_patterns.py \
        --bundle <dir> --clusters clusters.csv \
        --base-url https://api.example.com/v1 --model <name> \
        --out patterns.json

clusters.csv columns: para_id,cluster
Output: JSON list of {cluster, n_sources, categories, summary}.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import Counter, defaultdict
from pathlib import Path

import requests

PROMPT = (
    "The following paragraph categories and error rates describe knowledge "
    "areas where a model answers questions incorrectly. Summarise the "
    "common error pattern of this group in one or two sentences.\n\n{body}"
)


def load_clusters(path: Path) -> dict[str, str]:
    with path.open(encoding="utf-8", newline="") as fh:
        return {row["para_id"]: row["cluster"] for row in csv.DictReader(fh)}


def complete(base_url: str, model: str, key: str, prompt: str) -> str:
    resp = requests.post(
        f"{base_url.rstrip('/')}/chat/completions",
        headers={"Authorization": f"Bearer {key}"},
        json={
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
        },
        timeout=120,
    )
    resp.raise_for_status()
    return resp.json()["choices"][0]["message"]["content"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bundle", required=True, type=Path)
    ap.add_argument("--clusters", required=True, type=Path)
    ap.add_argument("--base-url", required=True)
    ap.add_argument("--model", required=True)
    ap.add_argument("--out", required=True, type=Path)
    args = ap.parse_args()

    key = os.environ.get("SEA_GEN_API_KEY", "")
    if not key:
        print("SEA_GEN_API_KEY is not set; refusing to run", file=sys.stderr)
        return 2

    clusters = load_clusters(args.clusters)
    groups: dict[str, list[dict]] = defaultdict(list)
    with (args.bundle / "sources.jsonl").open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            cid = clusters.get(row["para_id"])
            if cid is not None:
                groups[cid].append(row)

    patterns = []
    for cid in sorted(groups):
        rows = groups[cid]
        cats = Counter(r["category"] for r in rows)
        body = "\n".join(
            f"- category={r['category']} error_rate={r['para_error']:.2f}"
            for r in rows[:50]
        )
        summary = complete(args.base_url, args.model, key,
                           PROMPT.format(body=body))
        patterns.append({
            "cluster": cid,
            "n_sources": len(rows),
            "categories": dict(cats),
            "summary": summary.strip(),
        })

    args.out.write_text(json.dumps(patterns, indent=2) + "\n",
                        encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
