"""Command-line entry points for the full selection/evaluation pipeline."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import load_config
from .core import load_dataset, write_jsonl
from .errors import OrderProbeError
from .pipeline import (
    STRATEGIES,
    read_json_artifact,
    run_correlate,
    run_evaluate,
    run_select,
    run_sweep,
)


def _fail(exc: OrderProbeError) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(payload), err=True)
    sys.exit(exc.exit_code)


def _config_overrides(**flags: object) -> dict[str, object]:
    mapping = {
        "output_dir": "output_dir",
        "mode": "mode",
        "cache_dir": "cache_dir",
        "seed": "run.seed",
        "shots": "run.shots",
        "sets": "run.num_train_sets",
        "permutations": "run.max_permutations",
        "top_k": "run.top_k",
        "eval_subsample": "run.eval_subsample",
        "temperature": "generation.temperature",
        "max_new_tokens": "generation.max_new_tokens",
    }
    return {
        mapping[key]: value for key, value in flags.items() if value is not None
    }


def _common_options(fn):
    decorators = [
        click.option("--config", "config_path", required=True, type=click.Path(), help="Experiment YAML file."),
        click.option("--output-dir", default=None, help="Override the artifact directory."),
        click.option("--mode", default=None, type=click.Choice(["live", "record", "replay"]), help="Backend cache mode."),
        click.option("--cache-dir", default=None, help="Override the cache directory."),
        click.option("--seed", default=None, type=int, help="Base experiment seed."),
        click.option("--shots", default=None, type=int, help="Training samples per set."),
        click.option("--sets", default=None, type=int, help="Number of train sets."),
        click.option("--permutations", default=None, type=int, help="Max orderings per set."),
        click.option("--top-k", default=None, type=int, help="Candidates kept per metric."),
        click.option("--eval-subsample", default=None, type=int, help="Evaluation subsample size."),
        click.option("--temperature", default=None, type=float, help="Probing-generation temperature."),
        click.option("--max-new-tokens", default=None, type=int, help="Probing-generation length cap."),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _load_spec(config_path: str, **flags: object):
    return load_config(config_path, _config_overrides(**flags))


@click.group()
def main() -> None:
    """Few-shot prompt-order selection via entropy probing."""


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(), help="JSONL or CSV dataset.")
@click.option("--format", "fmt", default=None, type=click.Choice(["jsonl", "csv"]))
@click.option("--label-names", default=None, help="Comma-separated label order.")
@click.option("--name", default=None, help="Dataset name override.")
@click.option("--out", default=None, type=click.Path(), help="Write normalized JSONL here.")
def ingest(data_path: str, fmt: str | None, label_names: str | None, name: str | None, out: str | None) -> None:
    """Validate a dataset file and print its statistics."""
    try:
        labels = label_names.split(",") if label_names else None
        dataset = load_dataset(data_path, fmt=fmt, label_names=labels, name=name)
        if out:
            write_jsonl(dataset, out)
        counts = [0] * dataset.num_labels
        for ex in dataset.examples:
            counts[ex.label] += 1
        click.echo(
            json.dumps(
                {
                    "name": dataset.name,
                    "examples": len(dataset),
                    "label_names": list(dataset.label_names),
                    "label_counts": counts,
                    "pair_task": dataset.pair_task,
                    "normalized": out,
                }
            )
        )
    except OrderProbeError as exc:
        _fail(exc)


@main.command()
@_common_options
def select(config_path: str, **flags: object) -> None:
    """Rank candidate orderings by entropy over a generated probing set."""
    try:
        summary = run_select(_load_spec(config_path, **flags))
        click.echo(json.dumps(summary))
    except OrderProbeError as exc:
        _fail(exc)


@main.command()
@_common_options
@click.option(
    "--strategies",
    default=",".join(STRATEGIES),
    show_default=True,
    help="Comma-separated subset of: " + ", ".join(STRATEGIES),
)
def evaluate(config_path: str, strategies: str, **flags: object) -> None:
    """Evaluate selection strategies on the held-out subsample."""
    try:
        wanted = [s.strip() for s in strategies.split(",") if s.strip()]
        summary = run_evaluate(_load_spec(config_path, **flags), wanted)
        click.echo(json.dumps(summary))
    except OrderProbeError as exc:
        _fail(exc)


@main.command()
@_common_options
def sweep(config_path: str, **flags: object) -> None:
    """Top-K accuracy curve for both entropy metrics."""
    try:
        summary = run_sweep(_load_spec(config_path, **flags))
        click.echo(json.dumps(summary))
    except OrderProbeError as exc:
        _fail(exc)


@main.command()
@click.argument("reports", nargs=-1, required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(), help="Correlation matrix CSV.")
def correlate(reports: tuple[str, ...], out_path: str) -> None:
    """Rank-correlate permutation accuracies across evaluation reports."""
    try:
        summary = run_correlate(list(reports), out_path)
        click.echo(json.dumps(summary))
    except OrderProbeError as exc:
        _fail(exc)


@main.command()
@click.option("--report", "report_path", required=True, type=click.Path(), help="report.json to render.")
def report(report_path: str) -> None:
    """Render an evaluation report as an aligned text table."""
    try:
        data = read_json_artifact(Path(report_path))
    except OrderProbeError as exc:
        _fail(exc)
        return
    strategies = data["strategies"]
    width = max(len(name) for name in strategies) + 2
    click.echo(f"dataset={data['dataset']} model={data['model_id']} eval_size={data['eval_size']}")
    click.echo(f"{'strategy'.ljust(width)}{'mean':>10}{'std':>10}  per-set")
    for name in sorted(strategies):
        st = strategies[name]
        per_set = " ".join(f"{v:.3f}" for v in st["per_set"])
        click.echo(f"{name.ljust(width)}{st['mean']:>10.4f}{st['std']:>10.4f}  {per_set}")


if __name__ == "__main__":
    main()
