"""Command-line surface.

Exit codes: 0 ok (including budget exhaustion), 1 runtime failure,
2 config error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .config import RunConfig, VARIANTS, config_from_dict, load_config
from .corpus import ingest_corpus
from .embedding import make_provider
from .errors import ConfigError, SeaError
from .index import build_abstract_index
from .qa import make_generator  # noqa: F401  (re-exported for scripting)
from .reporting import build_report, run_crossval
from .runstore import RunStore, export_analysis_bundle
from .session import build_engine, load_cache, load_store_corpus
from .synth import SynthConfig, build_synth_workspace, make_planted_landscape, para_cluster_labels
from .testee import make_testee


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except SeaError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """Budget-constrained knowledge-deficiency search."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--min-para-len", default=200, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@cli_errors
def ingest(input_path, min_para_len, out_dir):
    """Ingest a line-delimited corpus into a store directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus, stats = ingest_corpus(input_path, min_para_len=min_para_len)
    corpus.save(out / "corpus.jsonl")
    (out / "ingest_stats.json").write_text(json.dumps(stats.as_dict(), indent=2) + "\n")
    click.echo(json.dumps(stats.as_dict()))


@main.command()
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@cli_errors
def index(store_dir, config_path):
    """Build the abstract-level inverted-file index for a store."""
    cfg = load_config(config_path)
    corpus = load_store_corpus(store_dir, cfg.engine.min_para_len)
    provider = make_provider(cfg.embedding)
    idx = build_abstract_index(
        corpus, provider, cfg.engine.n_centroids, cfg.engine.seed
    )
    idx.save(Path(store_dir) / "index.npz")
    click.echo(f"indexed {len(idx.doc_ids)} docs into {idx.n_centroids} lists")


def _execute_run(engine) -> dict:
    engine.store.acquire_lock()
    try:
        summary = engine.run()
    finally:
        engine.store.release_lock()
    return summary


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--run-dir", required=True, type=click.Path())
@cli_errors
def run(config_path, store_dir, run_dir):
    """Execute a search run to budget exhaustion."""
    cfg = load_config(config_path)
    engine = build_engine(cfg, store_dir, run_dir)
    summary = _execute_run(engine)
    click.echo(json.dumps(summary))


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True))
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@cli_errors
def resume(run_dir, store_dir):
    """Resume an interrupted run from its last checkpoint."""
    store = RunStore(run_dir)
    cfg = config_from_dict(store.read_json("config.json"))
    engine = build_engine(cfg, store_dir, run_dir, resume=True)
    summary = _execute_run(engine)
    click.echo(json.dumps(summary))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--variants", default="full,no_prune,random_select", show_default=True)
@click.option("--seeds", default=1, show_default=True)
@cli_errors
def ablate(config_path, store_dir, out_dir, variants, seeds):
    """Run a batch of variant x seed runs for ablation overlays."""
    cfg = load_config(config_path)
    variant_list = [v.strip() for v in variants.split(",") if v.strip()]
    for v in variant_list:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    out = Path(out_dir)
    results = []
    for v in variant_list:
        for s in range(seeds):
            run_cfg = config_from_dict(cfg.as_dict())
            run_cfg.engine.variant = v
            run_cfg.engine.seed = cfg.engine.seed + s
            run_dir = out / f"{v}-seed{run_cfg.engine.seed}"
            engine = build_engine(run_cfg, store_dir, run_dir)
            results.append({"variant": v, "seed": run_cfg.engine.seed,
                            **_execute_run(engine)})
    click.echo(json.dumps(results))


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True))
@cli_errors
def report(run_dir):
    """Write report.json (per-step series, totals, cost-per-error)."""
    rep = build_report(RunStore(run_dir))
    click.echo(json.dumps(rep["totals"]))


@main.command()
@click.option("--provider-run", required=True, type=click.Path(exists=True))
@click.option("--testee-config", required=True, type=click.Path(exists=True))
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default="", type=click.Path())
@cli_errors
def crossval(provider_run, testee_config, store_dir, out_path):
    """Evaluate a testee on a provider run's question subset."""
    cfg = load_config(testee_config)
    provider_store = RunStore(provider_run)
    landscape = None
    if cfg.testee.kind == "simulated":
        if not cfg.landscape_path:
            raise ConfigError("simulated testee requires landscape_path")
        from .session import load_landscape_file

        landscape = load_landscape_file(cfg.landscape_path)
    testee = make_testee(cfg.testee, landscape)
    corpus = load_store_corpus(store_dir, cfg.engine.min_para_len)
    provider = make_provider(cfg.embedding)
    cache = load_cache(store_dir, cfg.embedding.dimension)
    qa_paras = {
        r["para_id"] for r in provider_store.read_lines("qa_items.jsonl")
    }
    cache.ensure(
        sorted(p for p in qa_paras if p in corpus.paragraphs),
        {p: corpus.paragraphs[p].text for p in qa_paras if p in corpus.paragraphs},
        provider,
    )
    topic_by_para = {
        p: corpus.paragraphs[p].category or "general"
        for p in qa_paras
        if p in corpus.paragraphs
    }
    cell = run_crossval(
        provider_store,
        testee,
        testee_tag=cfg.model_tag,
        topic_by_para=topic_by_para,
        para_embeddings={p: cache.get(p) for p in qa_paras if p in cache},
    )
    text = json.dumps(cell)
    if out_path:
        Path(out_path).write_text(text + "\n")
    click.echo(text)


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True))
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default="", type=click.Path())
@cli_errors
def export(run_dir, store_dir, out_dir):
    """Bundle source-error embeddings + metadata for offline analysis."""
    store = RunStore(run_dir)
    cfg = config_from_dict(store.read_json("config.json"))
    corpus = load_store_corpus(store_dir, cfg.engine.min_para_len)
    provider = make_provider(cfg.embedding)
    cache = load_cache(store_dir, cfg.embedding.dimension)
    dag = store.read_json("dag.json")
    node_ids = [n["id"] for n in dag["nodes"]]
    cache.ensure(
        node_ids, {p: corpus.paragraphs[p].text for p in node_ids}, provider
    )
    out = Path(out_dir) if out_dir else Path(run_dir) / "bundle"
    export_analysis_bundle(
        store,
        out,
        embeddings={p: cache.get(p) for p in node_ids},
        model_tag=cfg.model_tag,
        categories={p: corpus.paragraphs[p].category for p in node_ids},
        dimension=cfg.embedding.dimension,
    )
    click.echo(str(out))


@main.command()
@click.option("--landscape", "landscape_path", required=True,
              type=click.Path(exists=True),
              help="JSON file with 'synth' and 'landscape' sections")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", default="", type=click.Path())
@cli_errors
def simulate(landscape_path, out_dir, config_path):
    """Synthetic corpus plus simulated testee, end to end."""
    spec = json.loads(Path(landscape_path).read_text())
    synth_cfg = SynthConfig(**spec.get("synth", {}))
    land_spec = spec.get("landscape", {})
    out = Path(out_dir)
    store_dir = out / "store"
    corpus, meta = build_synth_workspace(synth_cfg, store_dir)

    cfg = load_config(config_path) if config_path else RunConfig()
    cfg.testee.kind = "simulated"
    provider = make_provider(cfg.embedding)
    cache = load_cache(store_dir, cfg.embedding.dimension)
    labels = para_cluster_labels(corpus, meta["doc_clusters"])
    landscape = make_planted_landscape(
        corpus,
        provider,
        labels,
        cluster=int(land_spec.get("cluster", 0)),
        error_prob=float(land_spec.get("error_prob", 0.9)),
        base_error_prob=float(land_spec.get("base_error_prob", 0.1)),
        seed=int(land_spec.get("seed", cfg.engine.seed)),
        radius_slack=float(land_spec.get("radius_slack", 0.05)),
        cache=cache,
    )
    cache.save(store_dir / "para_embeddings.npz")
    engine = build_engine(
        cfg, store_dir, out / "run", landscape=landscape,
        corpus=corpus, cache=cache,
    )
    summary = _execute_run(engine)
    click.echo(json.dumps(summary))


if __name__ == "__main__":
    main()
