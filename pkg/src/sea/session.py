"""Assemble engines from a config plus a prepared store directory.

A store directory holds the shared, run-independent artifacts: corpus.jsonl,
index.npz (+ manifest), and optionally para_embeddings.npz (a pre-warmed
paragraph embedding cache). Run directories are created per run.
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import RunConfig
from .corpus import Corpus
from .embedding import EmbeddingCache, make_provider
from .engine import Engine
from .errors import ConfigError, RunStoreError
from .index import AbstractIndex, build_abstract_index
from .qa import make_generator
from .runstore import RunStore
from .testee import ErrorLandscape, make_testee


def load_store_corpus(store_dir: Path | str, min_para_len: int) -> Corpus:
    store_dir = Path(store_dir)
    corpus_path = store_dir / "corpus.jsonl"
    if not corpus_path.exists():
        raise RunStoreError(f"no corpus.jsonl in {store_dir}")
    return Corpus.load(corpus_path, min_para_len=min_para_len)


def ensure_index(
    store_dir: Path | str, corpus: Corpus, provider, n_centroids: int, seed: int
) -> AbstractIndex:
    store_dir = Path(store_dir)
    index_path = store_dir / "index.npz"
    if index_path.exists():
        return AbstractIndex.load(index_path)
    index = build_abstract_index(corpus, provider, n_centroids, seed)
    index.save(index_path)
    return index


def load_cache(store_dir: Path | str, dimension: int) -> EmbeddingCache:
    path = Path(store_dir) / "para_embeddings.npz"
    if path.exists():
        cache = EmbeddingCache.load(path)
        if cache.dimension != dimension:
            raise ConfigError(
                f"cached embeddings have d={cache.dimension}, config says {dimension}"
            )
        return cache
    return EmbeddingCache(dimension=dimension)


def load_landscape_file(path: Path | str) -> ErrorLandscape:
    return ErrorLandscape.from_dict(json.loads(Path(path).read_text()))


def build_engine(
    cfg: RunConfig,
    store_dir: Path | str,
    run_dir: Path | str,
    resume: bool = False,
    landscape: ErrorLandscape | None = None,
    corpus: Corpus | None = None,
    cache: EmbeddingCache | None = None,
) -> Engine:
    """Wire corpus, index, adapters, and ledger into an engine.

    With resume=True the run directory must hold a checkpoint; otherwise a
    fresh run store is created.
    """
    if corpus is None:
        corpus = load_store_corpus(store_dir, cfg.engine.min_para_len)
    provider = make_provider(cfg.embedding)
    index = ensure_index(
        store_dir, corpus, provider, cfg.engine.n_centroids, cfg.engine.seed
    )
    if cache is None:
        cache = load_cache(store_dir, cfg.embedding.dimension)
    generator = make_generator(cfg.qa)
    if landscape is None and cfg.testee.kind == "simulated":
        if not cfg.landscape_path:
            raise ConfigError("simulated testee requires landscape_path")
        landscape = load_landscape_file(cfg.landscape_path)
    testee = make_testee(cfg.testee, landscape)
    ledger = cfg.budget.make_ledger()

    store = RunStore(run_dir, create=not resume)
    if resume:
        return Engine.resume(
            cfg, corpus, index, provider, cache, generator, testee, ledger, store
        )
    return Engine(
        cfg, corpus, index, provider, cache, generator, testee, ledger, store
    )
