"""Synthetic clustered corpora and planted error landscapes.

Each cluster owns a private vocabulary, so the bag-of-words test embedder
maps same-cluster paragraphs near each other and different clusters nearly
orthogonal. Optional bridge documents mix two clusters' vocabularies,
placing them between the clusters in embedding space; they let an error
region spill over a cluster boundary, which is what gives source pruning
something to do.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .corpus import DEFAULT_CATEGORIES, Corpus, ingest_corpus
from .embedding import (
    DeterministicProvider,
    EmbeddingCache,
    EmbeddingProviderConfig,
    embed_texts,
)
from .index import build_abstract_index
from .testee import ErrorLandscape, ErrorRegion


@dataclass
class SynthConfig:
    n_clusters: int = 20
    docs_per_cluster: int = 25
    paras_per_doc: int = 20
    words_per_para: int = 40
    vocab_per_cluster: int = 80
    shared_vocab: int = 40
    shared_word_frac: float = 0.1
    seed: int = 0
    categories: list[str] = field(default_factory=lambda: list(DEFAULT_CATEGORIES))
    # (from_cluster, into_cluster, fraction of into_cluster docs, mix weight)
    bridges: list[tuple[int, int, float, float]] = field(default_factory=list)
    # (cluster, n_docs, [(vocab_cluster, weight), ...][, category]) — arbitrary
    # vocabulary mixtures for fine-grained placement between clusters; the
    # optional trailing category overrides the cluster's default category
    mixture_docs: list[tuple] = field(default_factory=list)


def _cluster_vocab(c: int, size: int) -> list[str]:
    return [f"cluster{c:02d}word{i:03d}" for i in range(size)]


def _shared_vocab(size: int) -> list[str]:
    return [f"common{i:03d}" for i in range(size)]


def generate_corpus(cfg: SynthConfig, out_path: Path | str) -> dict:
    """Write a synthetic clustered corpus as line-delimited records.

    Returns a metadata dict including the cluster label of every doc.
    """
    rng = np.random.default_rng([cfg.seed, 0x517])
    shared = _shared_vocab(cfg.shared_vocab)
    vocabs = [_cluster_vocab(c, cfg.vocab_per_cluster) for c in range(cfg.n_clusters)]

    # Bridges are sugar for a two-way mixture; mixture_docs give arbitrary
    # weighted blends. Blocks claim consecutive docs in declaration order,
    # so graded mixes build ramps of documents between clusters.
    specs_by_cluster: dict[int, list[tuple[list[tuple[int, float]], str | None]]] = {}
    for src, into, frac, mix in cfg.bridges:
        n_docs = int(round(frac * cfg.docs_per_cluster))
        specs_by_cluster.setdefault(into, []).extend(
            [([(src, mix), (into, 1.0 - mix)], None)] * n_docs
        )
    for entry in cfg.mixture_docs:
        cluster, n_docs, mixture = entry[0], entry[1], entry[2]
        category = entry[3] if len(entry) > 3 else None
        specs_by_cluster.setdefault(cluster, []).extend(
            [(list(mixture), category)] * n_docs
        )

    doc_clusters: dict[str, int] = {}
    bridge_docs: list[str] = []
    out_path = Path(out_path)
    with out_path.open("w", encoding="utf-8") as fh:
        for c in range(cfg.n_clusters):
            category = cfg.categories[c % len(cfg.categories)]
            doc_specs = specs_by_cluster.get(c, [])[: cfg.docs_per_cluster]
            for d in range(cfg.docs_per_cluster):
                doc_id = f"doc-c{c:02d}-{d:03d}"
                doc_clusters[doc_id] = c
                spec, doc_category = doc_specs[d] if d < len(doc_specs) else (None, None)
                if spec is not None:
                    bridge_docs.append(doc_id)
                    doc_vocabs = [vocabs[v] for v, _ in spec]
                    weights = np.array([w for _, w in spec], dtype=float)
                    weights = weights / weights.sum()
                else:
                    doc_vocabs = [vocabs[c]]
                    weights = np.array([1.0])
                doc_category = doc_category or category

                def words(n: int) -> str:
                    shared_mask = rng.random(n) < cfg.shared_word_frac
                    vocab_idx = rng.choice(len(doc_vocabs), size=n, p=weights)
                    picks = []
                    for use_shared, vi in zip(shared_mask, vocab_idx):
                        vocab = shared if use_shared else doc_vocabs[vi]
                        picks.append(vocab[int(rng.integers(len(vocab)))])
                    return " ".join(picks)

                rec = {
                    "doc_id": doc_id,
                    "title": f"Topic {c:02d} volume {d:03d}",
                    "abstract": words(cfg.words_per_para),
                    "categories": [doc_category],
                    "paragraphs": [
                        {
                            "section_path": [f"Section {p}"],
                            "text": words(cfg.words_per_para),
                        }
                        for p in range(cfg.paras_per_doc)
                    ],
                }
                fh.write(json.dumps(rec) + "\n")
    return {
        "doc_clusters": doc_clusters,
        "bridge_docs": bridge_docs,
        "n_paragraphs": cfg.n_clusters * cfg.docs_per_cluster * cfg.paras_per_doc,
    }


def para_cluster_labels(corpus: Corpus, doc_clusters: dict[str, int]) -> dict[str, int]:
    return {
        pid: doc_clusters[corpus.paragraphs[pid].doc_id]
        for pid in corpus.para_ids
    }


def region_around_cluster(
    corpus: Corpus,
    provider,
    labels: dict[str, int],
    cluster: int,
    error_prob: float,
    radius_slack: float = 0.05,
    radius_quantile: float = 1.0,
    cache=None,
) -> ErrorRegion:
    """Build a region centered on a cluster's paragraph-embedding centroid.

    The radius is the `radius_quantile` quantile of the cluster paragraphs'
    cosine distances to the centroid, plus `radius_slack` (either may shrink
    or grow the cap; bridge paragraphs leaning toward the cluster fall
    inside or outside depending on their realized word mix).
    """
    ids = [pid for pid, c in labels.items() if c == cluster]
    if cache is not None:
        cache.ensure(ids, {p: corpus.paragraphs[p].text for p in ids}, provider)
        vecs = cache.matrix(ids)
    else:
        vecs = embed_texts([corpus.paragraphs[p].text for p in ids], provider)
    center = vecs.mean(axis=0)
    center = center / np.linalg.norm(center)
    dists = 1.0 - vecs @ center
    return ErrorRegion(
        center=center,
        radius=float(np.quantile(dists, radius_quantile) + radius_slack),
        error_prob=error_prob,
    )


def region_coverage(
    corpus: Corpus, provider, region: ErrorRegion, cache=None
) -> float:
    """Fraction of corpus paragraphs inside the region."""
    ids = list(corpus.para_ids)
    if cache is not None:
        cache.ensure(ids, {p: corpus.paragraphs[p].text for p in ids}, provider)
        vecs = cache.matrix(ids)
    else:
        vecs = embed_texts([corpus.paragraphs[p].text for p in ids], provider)
    dists = 1.0 - vecs @ region.center
    return float(np.mean(dists <= region.radius))


def make_planted_landscape(
    corpus: Corpus,
    provider,
    labels: dict[str, int],
    cluster: int,
    error_prob: float = 0.9,
    base_error_prob: float = 0.1,
    seed: int = 0,
    radius_slack: float = 0.05,
    radius_quantile: float = 1.0,
    cache=None,
) -> ErrorLandscape:
    region = region_around_cluster(
        corpus, provider, labels, cluster, error_prob,
        radius_slack=radius_slack, radius_quantile=radius_quantile,
        cache=cache,
    )
    return ErrorLandscape(
        regions=[region], base_error_prob=base_error_prob, seed=seed
    )


def build_synth_workspace(
    cfg: SynthConfig, out_dir: Path | str, min_para_len: int = 0
) -> tuple[Corpus, dict]:
    """Generate corpus.jsonl in out_dir and ingest it."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = generate_corpus(cfg, out_dir / "corpus.jsonl")
    corpus, stats = ingest_corpus(out_dir / "corpus.jsonl", min_para_len=min_para_len)
    meta["ingest_stats"] = stats.as_dict()
    return corpus, meta


@dataclass
class LadderConfig:
    """A graded-difficulty benchmark corpus with one planted error region.

    The corpus is a chain of document "stations" arranged around a single
    region center: a shallow entry pad (each pad document in its own
    category, so a category-uniform seed batch is guaranteed to land there),
    then a few fat rungs whose inside-the-region fraction ramps upward,
    ending in a deep reservoir that holds the rest of the region's mass.
    Adjacent stations share half their vocabulary (azimuth cosine 0.5);
    non-adjacent stations are nearly orthogonal, so similarity search walks
    the chain one rung at a time and per-step error climbs as the frontier
    advances.  A zero-error "junk" well sits closer to every station than
    any rung skip: once a source's neighborhood is exhausted its window
    drifts into junk, which retirement removes but a prune-free run drags
    along forever.  All remaining documents are orthogonal background noise.
    """

    seed: int = 77
    dimension: int = 1024
    n_clusters: int = 20
    docs_per_cluster: int = 100
    paras_per_doc: int = 5
    words_per_para: int = 470   # the test embedder truncates past ~470 tokens
    vocab_per_cluster: int = 8
    shared_word_frac: float = 0.05
    # station placement: P(dist < radius) = f at depth R + sigma * z(1 - f);
    # sigma is the empirical paragraph-level spread of distance-to-center
    radius_anchor: float = 0.30
    sigma: float = 0.033
    coverage: float = 0.05
    pad_docs: int = 30
    pad_fraction: float = 0.15
    rung_fractions: tuple = (0.25, 0.42, 0.60, 0.78, 0.95)
    rung_docs: tuple = (22, 20, 18, 16, 14)
    reservoir_docs: int = 48
    junk_dist: float = 0.45
    calibration_probes: int = 24
    error_prob: float = 0.9
    base_error_prob: float = 0.1
    landscape_seed: int = 1234
    n_centroids: int = 20


@dataclass
class LadderWorkspace:
    store_dir: Path
    corpus: Corpus
    cache: EmbeddingCache
    landscape: ErrorLandscape
    center: np.ndarray
    radius: float
    coverage: float
    doc_families: dict  # doc_id -> (family, station)


def ladder_center(provider, cfg: LadderConfig) -> np.ndarray:
    """The planted region center: the direction of station 0's vocabulary."""
    words = _cluster_vocab(0, cfg.vocab_per_cluster)
    return provider.embed([" ".join(words * 30)])[0]


def _ladder_probe_text(rng, mixture, cfg: LadderConfig) -> str:
    vocabs = [_cluster_vocab(v, cfg.vocab_per_cluster) for v, _ in mixture]
    shared = _shared_vocab(cfg.vocab_per_cluster)
    w = np.array([x for _, x in mixture])
    w = w / w.sum()
    picks = []
    for _ in range(cfg.words_per_para):
        if rng.random() < cfg.shared_word_frac:
            picks.append(shared[rng.integers(len(shared))])
        else:
            vi = rng.choice(len(vocabs), p=w)
            picks.append(vocabs[vi][rng.integers(len(vocabs[vi]))])
    return " ".join(picks)


def _measured_dist(provider, center, mixture, cfg: LadderConfig) -> float:
    rng = np.random.default_rng([cfg.seed, 0x999])
    texts = [_ladder_probe_text(rng, mixture, cfg)
             for _ in range(cfg.calibration_probes)]
    vecs = provider.embed(texts)
    return float(np.mean(1.0 - vecs @ center))


def _calibrated(provider, center, azimuth, dist_target, cfg: LadderConfig):
    """Binary-search the station-0 weight of a mixture so its measured
    distance to the region center hits the target; `azimuth` fixes the
    off-center direction as (vocab, weight) pairs."""
    az_w = np.array([x for _, x in azimuth])
    az_w = az_w / az_w.sum()
    mix = None
    lo, hi = 0.05, 0.95
    for _ in range(9):
        w = (lo + hi) / 2
        mix = [(0, w)] + [(v, (1 - w) * float(x))
                          for (v, _), x in zip(azimuth, az_w)]
        if _measured_dist(provider, center, mix, cfg) > dist_target:
            lo = w
        else:
            hi = w
    return mix


def ladder_synth_config(provider, cfg: LadderConfig) -> tuple[SynthConfig, dict]:
    """Calibrate station mixtures and lay out the document blocks.

    Returns the SynthConfig plus doc_id -> (family, station) labels, where
    family is one of pad/rung/junk/garb and station numbers the rungs
    (the reservoir is the last station).
    """
    cats = list(DEFAULT_CATEGORIES)
    center = ladder_center(provider, cfg)
    z = NormalDist().inv_cdf
    d_pad = cfg.radius_anchor + cfg.sigma * z(1 - cfg.pad_fraction)
    d_rungs = [cfg.radius_anchor + cfg.sigma * z(1 - f)
               for f in cfg.rung_fractions]
    n_rungs = len(cfg.rung_fractions)

    mix_pad = _calibrated(provider, center, [(1, 1.0)], d_pad, cfg)
    # rung k sits at azimuth (w_k, w_{k+1}); the reservoir continues the
    # path one vocabulary further at the last rung's depth
    mix_rungs = [
        _calibrated(provider, center, [(k + 1, 1.0), (k + 2, 1.0)],
                    d_rungs[k], cfg)
        for k in range(n_rungs)
    ]
    mix_res = _calibrated(provider, center,
                          [(n_rungs + 1, 1.0), (n_rungs + 2, 1.0)],
                          d_rungs[-1], cfg)
    # the chain vocabularies all enter the junk well; extra weight on one
    # more vocabulary dilutes the correlation to ~0.45 so junk lands between
    # adjacent-rung distance (~0.25) and any rung skip (~0.47)
    junk_az = [(w, 1.0) for w in range(1, n_rungs + 3)] + [(n_rungs + 3, 1.69)]
    mix_junk = _calibrated(provider, center, junk_az, cfg.junk_dist, cfg)

    def garbage(j):
        t = (1 + j % 19, 1 + (j + 6) % 19, 1 + (j + 12) % 19)
        return [(v, 1 / 3) for v in t]

    misc = cats[12]
    mixtures: list[tuple] = []
    doc_families: dict[str, tuple[str, int]] = {}
    gj = 0

    def add(cluster, n, mix, cat, family, station):
        nonlocal gj
        start = sum(nd for c, nd, *_ in mixtures if c == cluster)
        mixtures.append((cluster, n, mix, cat))
        for d in range(start, start + n):
            doc_families[f"doc-c{cluster:02d}-{d:03d}"] = (family, station)

    def fill_garbage(cluster, n):
        nonlocal gj
        while n > 0:
            take = min(13, n)
            add(cluster, take, garbage(gj), misc, "garb", -1)
            gj += 1
            n -= take

    # cluster 0: pad docs, one category each, plus part of the junk well
    for d in range(cfg.pad_docs):
        add(0, 1, mix_pad, cats[d % 12], "pad", 0)
    add(0, cfg.docs_per_cluster - cfg.pad_docs, mix_junk, misc, "junk", -1)
    # clusters 1..n_rungs: tapered rungs topped up with garbage
    for k, nd in enumerate(cfg.rung_docs):
        add(k + 1, nd, mix_rungs[k], misc, "rung", k + 1)
        fill_garbage(k + 1, cfg.docs_per_cluster - nd)
    # the reservoir, then pure-garbage clusters, then the rest of the junk
    add(n_rungs + 1, cfg.reservoir_docs, mix_res, misc, "rung", n_rungs + 1)
    fill_garbage(n_rungs + 1, cfg.docs_per_cluster - cfg.reservoir_docs)
    for c in range(n_rungs + 2, cfg.n_clusters - 1):
        fill_garbage(c, cfg.docs_per_cluster)
    add(cfg.n_clusters - 1, cfg.docs_per_cluster, mix_junk, misc, "junk", -1)

    synth = SynthConfig(
        n_clusters=cfg.n_clusters,
        docs_per_cluster=cfg.docs_per_cluster,
        paras_per_doc=cfg.paras_per_doc,
        words_per_para=cfg.words_per_para,
        vocab_per_cluster=cfg.vocab_per_cluster,
        shared_vocab=cfg.vocab_per_cluster,
        shared_word_frac=cfg.shared_word_frac,
        seed=cfg.seed,
        categories=cats,
        mixture_docs=mixtures,
    )
    return synth, doc_families


def build_ladder_workspace(
    out_dir: Path | str, cfg: LadderConfig | None = None
) -> LadderWorkspace:
    """Generate the ladder corpus and all store artifacts in out_dir.

    Writes corpus.jsonl, para_embeddings.npz, landscape.json and index.npz;
    the landscape's single region is capped at exactly `cfg.coverage` of the
    corpus by taking that quantile of paragraph distances as the radius.
    """
    cfg = cfg or LadderConfig()
    out_dir = Path(out_dir)
    provider = DeterministicProvider(
        EmbeddingProviderConfig(dimension=cfg.dimension)
    )
    synth, doc_families = ladder_synth_config(provider, cfg)
    corpus, _ = build_synth_workspace(synth, out_dir)

    center = ladder_center(provider, cfg)
    cache = EmbeddingCache(dimension=cfg.dimension)
    ids = list(corpus.para_ids)
    cache.ensure(ids, {p: corpus.paragraphs[p].text for p in ids}, provider)
    dists = 1.0 - cache.matrix(ids) @ center
    radius = float(np.quantile(dists, cfg.coverage))
    landscape = ErrorLandscape(
        regions=[ErrorRegion(center, radius, cfg.error_prob)],
        base_error_prob=cfg.base_error_prob,
        seed=cfg.landscape_seed,
    )
    cache.save(out_dir / "para_embeddings.npz")
    (out_dir / "landscape.json").write_text(json.dumps(landscape.as_dict()))
    index = build_abstract_index(
        corpus, provider, n_centroids=cfg.n_centroids, seed=cfg.seed
    )
    index.save(out_dir / "index.npz")
    return LadderWorkspace(
        store_dir=out_dir,
        corpus=corpus,
        cache=cache,
        landscape=landscape,
        center=center,
        radius=radius,
        coverage=float(np.mean(dists <= radius)),
        doc_families=doc_families,
    )
