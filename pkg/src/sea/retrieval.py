"""FindSim and the hierarchical document-to-paragraph retrieval stage.

Each step's candidate pool is the union over source paragraphs of their
cosine top-k in the pool, with provenance recording which sources selected
each candidate. Tie-breaking is descending similarity then ascending id,
everywhere, so runs are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import KnowledgeBaseView, Paragraph
from .embedding import EmbeddingCache
from .errors import CorpusExhausted, ExhaustedNeighborhood
from .index import AbstractIndex, _rank_order


@dataclass
class RetrievalConfig:
    k: int = 50          # per-source paragraph-stage top-k
    k_doc: int = 10      # per-source document-stage top-k
    batch_size: int = 40
    n_probe: int = 4

    def __post_init__(self):
        if self.k < 1 or self.k_doc < 1 or self.batch_size < 1:
            raise ValueError("k, k_doc and batch_size must all be >= 1")


@dataclass
class CandidateEntry:
    item_id: str
    best_similarity: float
    provenance: set[str] = field(default_factory=set)


@dataclass
class CandidateSet:
    entries: dict[str, CandidateEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return sorted(self.entries)


def find_sim(
    pool_ids: list[str],
    pool_matrix: np.ndarray,
    sources: list[tuple[str, np.ndarray]],
    k: int,
) -> CandidateSet:
    """Union over sources of each source's cosine top-k in the pool."""
    if not sources:
        raise ValueError("sources must be non-empty")
    cands = CandidateSet()
    if not pool_ids:
        return cands
    id_rank = np.empty(len(pool_ids), dtype=np.int64)
    id_rank[np.argsort(np.array(pool_ids, dtype=object))] = np.arange(len(pool_ids))
    src_mat = np.vstack([vec for _, vec in sources])
    sims = src_mat @ pool_matrix.T  # (n_sources, n_pool), double precision
    for row, (src_id, _) in enumerate(sources):
        order = _rank_order(sims[row], id_rank)[:k]
        for i in order:
            pid = pool_ids[i]
            sim = float(sims[row, i])
            entry = cands.entries.get(pid)
            if entry is None:
                cands.entries[pid] = CandidateEntry(pid, sim, {src_id})
            else:
                entry.provenance.add(src_id)
                if sim > entry.best_similarity:
                    entry.best_similarity = sim
    return cands


def hierarchical_retrieve(
    sources: list[tuple[str, np.ndarray]],
    view: KnowledgeBaseView,
    index: AbstractIndex,
    cfg: RetrievalConfig,
    cache: EmbeddingCache,
    provider,
    exclude: set[str],
) -> CandidateSet:
    """Two-stage retrieval: candidate documents via the abstract index,
    then FindSim over the active paragraphs of those documents.

    `exclude` holds ids that must never be candidates (removed paragraphs
    are filtered via the view; the evaluated subset via exclude).
    """
    doc_ids: set[str] = set()
    for _, vec in sources:
        for did, _sim in index.query(vec, cfg.k_doc, cfg.n_probe):
            doc_ids.add(did)
    if not doc_ids:
        raise ExhaustedNeighborhood("document stage returned no candidates")

    para_ids = [
        pid
        for did in sorted(doc_ids)
        for pid in view.corpus.documents[did].paragraph_ids
        if view.is_active(pid) and pid not in exclude
    ]
    if not para_ids:
        raise ExhaustedNeighborhood("no active paragraphs in candidate documents")
    cache.ensure(
        para_ids,
        {pid: view.corpus.paragraphs[pid].text for pid in para_ids},
        provider,
    )
    return find_sim(para_ids, cache.matrix(para_ids), sources, cfg.k)


@dataclass
class BatchResult:
    paragraphs: list[Paragraph]
    fallback_ids: set[str]           # filled uniformly outside the candidate set
    provenance: dict[str, set[str]]  # para_id -> source ids that retrieved it


def assemble_batch(
    cands: CandidateSet,
    batch_size: int,
    rng: np.random.Generator,
    view: KnowledgeBaseView,
    exclude: set[str],
) -> BatchResult:
    """Uniform subsample of the candidate set; shortfall filled by uniform
    random active paragraphs outside it (flagged as fallback)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    cand_ids = cands.ids()
    take = min(batch_size, len(cand_ids))
    if len(cand_ids) > take:
        idx = rng.choice(len(cand_ids), size=take, replace=False)
        picked = [cand_ids[i] for i in sorted(idx)]
    else:
        picked = list(cand_ids)

    fallback: list[str] = []
    if len(picked) < batch_size:
        picked_set = set(picked) | exclude
        pool = [pid for pid in view.active_para_ids() if pid not in picked_set]
        need = batch_size - len(picked)
        if not pool and not picked:
            raise CorpusExhausted("no active paragraphs remain")
        if pool:
            idx = rng.choice(len(pool), size=min(need, len(pool)), replace=False)
            fallback = [pool[i] for i in sorted(idx)]

    provenance = {pid: set(cands.entries[pid].provenance) for pid in picked}
    paragraphs = [view.corpus.paragraphs[pid] for pid in picked + fallback]
    return BatchResult(
        paragraphs=paragraphs,
        fallback_ids=set(fallback),
        provenance=provenance,
    )
