"""Abstract-level inverted-file index with a k-means coarse quantizer.

Abstracts are pre-embedded (title + abstract), assigned to their nearest
centroid by cosine, and queries scan only the n_probe nearest centroids'
lists. With n_probe equal to the centroid count the index reproduces exact
brute-force search.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .embedding import embed_texts
from .errors import ConfigError

KMEANS_ITERS = 10
KMEANS_TRAIN_CAP = 100_000


def _rank_order(sims: np.ndarray, id_rank: np.ndarray) -> np.ndarray:
    """Indices sorted by similarity descending, then id rank ascending."""
    return np.lexsort((id_rank, -sims))


def kmeans_cosine(
    vectors: np.ndarray, n_centroids: int, seed: int, iters: int = KMEANS_ITERS
) -> np.ndarray:
    """Plain k-means on unit vectors with cosine assignment.

    Centroids are re-normalized each iteration; empty clusters keep their
    previous centroid. Deterministic given the seed.
    """
    n = vectors.shape[0]
    rng = np.random.default_rng([seed, 0x4B3])
    if n_centroids > n:
        raise ConfigError("n_centroids must be <= number of vectors")
    if n > KMEANS_TRAIN_CAP:
        train = vectors[rng.choice(n, size=KMEANS_TRAIN_CAP, replace=False)]
    else:
        train = vectors
    centroids = train[rng.choice(train.shape[0], size=n_centroids, replace=False)].copy()
    for _ in range(iters):
        assign = np.argmax(train @ centroids.T, axis=1)
        for c in range(n_centroids):
            members = train[assign == c]
            if len(members) == 0:
                continue
            m = members.mean(axis=0)
            norm = np.linalg.norm(m)
            if norm > 0:
                centroids[c] = m / norm
    return centroids


@dataclass
class AbstractIndex:
    centroids: np.ndarray          # (c, d), unit norm
    doc_ids: list[str]             # all indexed docs
    vectors: np.ndarray            # (n, d) abstract embeddings, unit norm
    assignments: np.ndarray        # (n,) centroid index per doc
    provider_fingerprint: str = ""

    def __post_init__(self):
        order = np.argsort(np.array(self.doc_ids, dtype=object))
        self._id_rank = np.empty(len(self.doc_ids), dtype=np.int64)
        self._id_rank[order] = np.arange(len(self.doc_ids))
        self._lists = [
            np.flatnonzero(self.assignments == c)
            for c in range(self.centroids.shape[0])
        ]

    @property
    def n_centroids(self) -> int:
        return self.centroids.shape[0]

    @property
    def dimension(self) -> int:
        return self.centroids.shape[1]

    def query(self, q: np.ndarray, k: int, n_probe: int) -> list[tuple[str, float]]:
        """Top-k (doc_id, cosine) from the n_probe nearest centroids' lists.

        Ties break by ascending doc_id.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if len(self.doc_ids) == 0:
            return []
        n_probe = min(max(n_probe, 1), self.n_centroids)
        cent_sims = self.centroids @ q
        probe = np.argsort(-cent_sims, kind="stable")[:n_probe]
        cand = np.concatenate([self._lists[c] for c in probe])
        if len(cand) == 0:
            return []
        sims = self.vectors[cand] @ q
        order = _rank_order(sims, self._id_rank[cand])[:k]
        return [(self.doc_ids[cand[i]], float(sims[i])) for i in order]

    # -- persistence --------------------------------------------------

    def save(self, path: Path | str) -> None:
        path = Path(path)
        np.savez_compressed(
            path,
            centroids=self.centroids,
            doc_ids=np.array(self.doc_ids, dtype=object),
            vectors=self.vectors,
            assignments=self.assignments,
        )
        manifest = {
            "dimension": int(self.dimension),
            "n_centroids": int(self.n_centroids),
            "n_docs": len(self.doc_ids),
            "provider_fingerprint": self.provider_fingerprint,
            "format_version": 1,
        }
        path.with_suffix(".manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n"
        )

    @classmethod
    def load(cls, path: Path | str) -> "AbstractIndex":
        path = Path(path)
        data = np.load(path, allow_pickle=True)
        manifest_path = path.with_suffix(".manifest.json")
        fp = ""
        if manifest_path.exists():
            fp = json.loads(manifest_path.read_text()).get("provider_fingerprint", "")
        return cls(
            centroids=data["centroids"],
            doc_ids=[str(x) for x in data["doc_ids"]],
            vectors=data["vectors"],
            assignments=data["assignments"],
            provider_fingerprint=fp,
        )


def build_abstract_index(
    corpus: Corpus, provider, n_centroids: int, seed: int
) -> AbstractIndex:
    """Embed every document's title+abstract and fit the coarse quantizer."""
    if n_centroids < 1:
        raise ConfigError("n_centroids must be >= 1")
    doc_ids = list(corpus.doc_ids)
    if n_centroids > len(doc_ids):
        raise ConfigError("n_centroids must be <= document count")
    texts = [
        corpus.documents[d].title + "\n" + corpus.documents[d].abstract
        for d in doc_ids
    ]
    vectors = embed_texts(texts, provider)
    centroids = kmeans_cosine(vectors, n_centroids, seed)
    assignments = np.argmax(vectors @ centroids.T, axis=1)
    return AbstractIndex(
        centroids=centroids,
        doc_ids=doc_ids,
        vectors=vectors,
        assignments=assignments,
        provider_fingerprint=provider.cfg.fingerprint(),
    )
