"""sea-viz: figures over exported run bundles.

Exit codes: 0 success, 1 runtime failure, 2 bad input (schema or usage).
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from .bundle import BundleError, load_bundle
from .curves import plot_curves
from .heatmap import plot_crossval
from .tsne import DEFAULT_ITERATIONS, DEFAULT_PERPLEXITY, plot_tsne


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except BundleError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except Exception as exc:  # noqa: BLE001 - CLI boundary
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def bundle_options(fn):
    fn = click.option(
        "--bundle", "bundle_dirs", multiple=True, required=True,
        type=click.Path(exists=True, file_okay=False),
        help="Bundle directory from 'sea export'; repeatable.",
    )(fn)
    fn = click.option(
        "--out", "out_dir", default="sea-viz-out", show_default=True,
        type=click.Path(file_okay=False),
        help="Directory for figures and CSV sidecars.",
    )(fn)
    return fn


def _load(bundle_dirs) -> list:
    return [load_bundle(Path(d)) for d in bundle_dirs]


@click.group()
def main():
    """Offline figures over exported run bundles (read-only)."""


@main.command()
@bundle_options
@click.option("--perplexity", default=DEFAULT_PERPLEXITY, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--iterations", default=DEFAULT_ITERATIONS, show_default=True)
@cli_errors
def tsne(bundle_dirs, out_dir, perplexity, seed, iterations):
    """2-D projection of source-error embeddings."""
    paths = plot_tsne(_load(bundle_dirs), out_dir, perplexity=perplexity,
                      seed=seed, n_iter=iterations)
    for p in paths.values():
        click.echo(str(p))


@main.command()
@bundle_options
@cli_errors
def curves(bundle_dirs, out_dir):
    """Per-step and cumulative error curves, plus an overlay figure."""
    paths = plot_curves(_load(bundle_dirs), out_dir)
    for p in paths.values():
        click.echo(str(p))


@main.command()
@bundle_options
@cli_errors
def crossval(bundle_dirs, out_dir):
    """Correlation and accuracy heatmaps from bundled crossval.json cells."""
    cells = [c for b in _load(bundle_dirs) for c in b.crossval]
    if not cells:
        raise BundleError("no crossval.json cells found in the given bundles")
    paths = plot_crossval(cells, out_dir)
    for p in paths.values():
        click.echo(str(p))


if __name__ == "__main__":
    main()
