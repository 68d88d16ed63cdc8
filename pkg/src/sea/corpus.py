"""Knowledge base: documents, paragraphs, ingestion, and the removal view.

The corpus is immutable after ingestion. Loop prevention is implemented by
`KnowledgeBaseView`, which layers a grow-only removed set on top of the
corpus; retrieval and sampling only ever see active paragraphs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestError

DEFAULT_MIN_PARA_LEN = 200

# The 13 top-level Wikipedia categories, shipped as the default category list.
DEFAULT_CATEGORIES = [
    "Culture and the arts",
    "General reference",
    "Geography and places",
    "Health and fitness",
    "History and events",
    "Human activities",
    "Mathematics and logic",
    "Natural and physical sciences",
    "People and self",
    "Philosophy and thinking",
    "Religion and belief systems",
    "Society and social sciences",
    "Technology and applied sciences",
]


@dataclass(frozen=True)
class Paragraph:
    para_id: str
    doc_id: str
    section_path: tuple[str, ...]
    text: str
    category: str  # top-level category inherited from the parent document


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    abstract: str
    categories: tuple[str, ...]
    paragraph_ids: tuple[str, ...]


@dataclass
class IngestStats:
    docs: int = 0
    paragraphs: int = 0
    rejected_docs: int = 0
    rejected_paragraphs: int = 0
    malformed_records: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class Corpus:
    """Immutable document/paragraph store with stable, ordered IDs."""

    def __init__(self, documents: list[Document], paragraphs: list[Paragraph]):
        self.documents: dict[str, Document] = {d.doc_id: d for d in documents}
        self.paragraphs: dict[str, Paragraph] = {p.para_id: p for p in paragraphs}
        if len(self.documents) != len(documents):
            raise IngestError("duplicate doc_id in corpus")
        if len(self.paragraphs) != len(paragraphs):
            raise IngestError("duplicate para_id in corpus")
        self.doc_ids: list[str] = [d.doc_id for d in documents]
        self.para_ids: list[str] = [p.para_id for p in paragraphs]

    def __len__(self) -> int:
        return len(self.paragraphs)

    def title_path(self, para_id: str) -> str:
        """Document title joined with the paragraph's section path."""
        p = self.paragraphs[para_id]
        doc = self.documents[p.doc_id]
        return "/".join([doc.title, *p.section_path])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for pid in self.para_ids:
            p = self.paragraphs[pid]
            h.update(pid.encode())
            h.update(p.text.encode())
        for did in self.doc_ids:
            d = self.documents[did]
            h.update(did.encode())
            h.update(d.abstract.encode())
        return h.hexdigest()[:16]

    # -- persistence --------------------------------------------------

    def save(self, path: Path | str) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for did in self.doc_ids:
                d = self.documents[did]
                rec = {
                    "doc_id": d.doc_id,
                    "title": d.title,
                    "abstract": d.abstract,
                    "categories": list(d.categories),
                    "paragraphs": [
                        {
                            "section_path": list(self.paragraphs[pid].section_path),
                            "text": self.paragraphs[pid].text,
                        }
                        for pid in d.paragraph_ids
                    ],
                }
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: Path | str, min_para_len: int = 0) -> "Corpus":
        corpus, _ = ingest_corpus(path, min_para_len=min_para_len)
        return corpus


def _para_id(doc_id: str, ordinal: int) -> str:
    # Stable across re-ingestion: doc_id + "#" + zero-padded ordinal.
    return f"{doc_id}#{ordinal:04d}"


def ingest_corpus(
    source_path: Path | str,
    min_para_len: int = DEFAULT_MIN_PARA_LEN,
) -> tuple[Corpus, IngestStats]:
    """Stream line-delimited document records into a Corpus.

    Documents with empty abstracts and paragraphs shorter than
    `min_para_len` are rejected and counted. Malformed records are
    skipped and counted. An unreadable file is fatal.
    """
    source_path = Path(source_path)
    if not source_path.exists():
        raise IngestError(f"cannot read corpus input: {source_path}")

    stats = IngestStats()
    documents: list[Document] = []
    paragraphs: list[Paragraph] = []

    with source_path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                doc_id = rec["doc_id"]
                title = rec["title"]
                abstract = rec["abstract"]
                categories = tuple(rec.get("categories", []))
                raw_paras = rec["paragraphs"]
            except (json.JSONDecodeError, KeyError, TypeError):
                stats.malformed_records += 1
                continue
            if not isinstance(doc_id, str) or not isinstance(abstract, str):
                stats.malformed_records += 1
                continue
            if not abstract.strip():
                stats.rejected_docs += 1
                continue
            category = categories[0] if categories else ""
            kept_ids: list[str] = []
            kept_paras: list[Paragraph] = []
            for i, rp in enumerate(raw_paras):
                try:
                    text = rp["text"]
                    section_path = tuple(rp.get("section_path", []))
                except (KeyError, TypeError):
                    stats.malformed_records += 1
                    continue
                if not isinstance(text, str) or not text.strip() or len(text) < min_para_len:
                    stats.rejected_paragraphs += 1
                    continue
                pid = _para_id(doc_id, i)
                kept_ids.append(pid)
                kept_paras.append(
                    Paragraph(
                        para_id=pid,
                        doc_id=doc_id,
                        section_path=section_path,
                        text=text,
                        category=category,
                    )
                )
            if not kept_ids:
                stats.rejected_docs += 1
                continue
            documents.append(
                Document(
                    doc_id=doc_id,
                    title=title,
                    abstract=abstract,
                    categories=categories,
                    paragraph_ids=tuple(kept_ids),
                )
            )
            paragraphs.extend(kept_paras)
            stats.docs += 1
            stats.paragraphs += len(kept_ids)

    return Corpus(documents, paragraphs), stats


def _seed_key(seed, salt: int) -> list[int]:
    """Flatten an int or sequence seed plus a purpose salt into an rng key."""
    if isinstance(seed, (list, tuple)):
        return [*seed, salt]
    return [seed, salt]


@dataclass
class KnowledgeBaseView:
    """Corpus plus a grow-only removed set (loop prevention)."""

    corpus: Corpus
    removed: set[str] = field(default_factory=set)

    def is_active(self, para_id: str) -> bool:
        return para_id in self.corpus.paragraphs and para_id not in self.removed

    def active_para_ids(self) -> list[str]:
        return [pid for pid in self.corpus.para_ids if pid not in self.removed]

    def remove_paragraphs(self, ids: set[str]) -> None:
        """Mark paragraphs inactive. Idempotent; unknown ids rejected."""
        unknown = ids - self.corpus.paragraphs.keys()
        if unknown:
            raise KeyError(f"unknown para_ids: {sorted(unknown)[:5]}")
        self.removed |= ids


def sample_uniform_by_category(
    n: int,
    categories: list[str],
    seed: int,
    view: KnowledgeBaseView,
) -> tuple[list[Paragraph], bool]:
    """Sample n distinct active paragraphs spread evenly across categories.

    Per-category quotas differ by at most one; shortfalls in a category are
    redistributed across the remaining categories. Returns (paragraphs,
    shortfall_flag); the flag is set when fewer than n active paragraphs
    exist in total.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(_seed_key(seed, 0xCA7))
    active_by_cat: dict[str, list[str]] = {c: [] for c in categories}
    for pid in view.corpus.para_ids:
        if pid in view.removed:
            continue
        cat = view.corpus.paragraphs[pid].category
        if cat in active_by_cat:
            active_by_cat[cat].append(pid)

    total_active = sum(len(v) for v in active_by_cat.values())
    if total_active <= n:
        out = [view.corpus.paragraphs[pid] for v in active_by_cat.values() for pid in v]
        return out, total_active < n

    k = len(categories)
    quotas = {c: n // k for c in categories}
    extra_cats = rng.permutation(np.array(sorted(categories), dtype=object))[: n % k]
    for c in extra_cats:
        quotas[str(c)] += 1

    chosen: list[str] = []
    shortfall = 0
    for c in sorted(categories):
        pool = active_by_cat[c]
        take = min(quotas[c], len(pool))
        shortfall += quotas[c] - take
        if take:
            idx = rng.choice(len(pool), size=take, replace=False)
            chosen.extend(pool[i] for i in sorted(idx))
    # Redistribute the shortfall over categories with spare active paragraphs.
    if shortfall:
        chosen_set = set(chosen)
        spare = [
            pid
            for c in sorted(categories)
            for pid in active_by_cat[c]
            if pid not in chosen_set
        ]
        idx = rng.choice(len(spare), size=min(shortfall, len(spare)), replace=False)
        chosen.extend(spare[i] for i in sorted(idx))
    return [view.corpus.paragraphs[pid] for pid in chosen], False


def sample_uniform(
    n: int,
    seed: int,
    view: KnowledgeBaseView,
    exclude: set[str] | None = None,
) -> tuple[list[Paragraph], bool]:
    """Uniform sample of n distinct active paragraphs, optionally excluding ids."""
    rng = np.random.default_rng(_seed_key(seed, 0x5A5))
    pool = view.active_para_ids()
    if exclude:
        pool = [pid for pid in pool if pid not in exclude]
    if len(pool) <= n:
        return [view.corpus.paragraphs[pid] for pid in pool], len(pool) < n
    idx = rng.choice(len(pool), size=n, replace=False)
    return [view.corpus.paragraphs[pool[i]] for i in sorted(idx)], False
