"""Command-line entry points: run, report, partition, eval.

Exit codes: 0 success, 2 configuration error, 3 backend error, 4 privacy
discipline violation, 1 anything else.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import numpy as np

from .config import load_run_config
from .core import EmbeddedSet, read_dataset
from .embedding import build_embedder
from .errors import (
    BackendError,
    ConfigError,
    DatasetFormatError,
    PrivacyDisciplineError,
    VoteSynthError,
)
from .evaluation import frechet_distance, nearest_centroid_eval
from .federated import partition_dirichlet, write_partition_manifest
from .orchestrator import (
    EPSILON_SWEEP,
    FULL_MODE,
    NO_CONTRAST,
    NO_WEIGHTING,
    Q_OVERRIDE,
    read_trace,
    run as run_synthesis,
    run_ablation,
)
from .privacy import verify_composition
from .streams import stream


@click.group()
@click.option("--verbose", is_flag=True, help="Log per-iteration progress.")
def cli(verbose: bool):
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--mode",
    type=click.Choice([FULL_MODE, NO_CONTRAST, NO_WEIGHTING]),
    default=FULL_MODE,
    show_default=True,
)
@click.option("--output-dir", type=click.Path(file_okay=False), default=None)
@click.option("--dump-histograms", is_flag=True, help="Write the noised histograms per round.")
def run_cmd(config_path: str, mode: str, output_dir: str | None, dump_histograms: bool):
    """Run the synthesis loop described by a config file."""
    config = load_run_config(config_path)
    result = run_synthesis(
        config,
        mode=mode,
        output_dir=Path(output_dir) if output_dir else None,
        dump_histograms=dump_histograms,
    )
    final = result.trace[-1]
    click.echo(f"dataset: {result.output_dir / 'dataset.jsonl'}")
    click.echo(f"trace:   {result.output_dir / 'trace.jsonl'}")
    click.echo(
        f"samples: {final.dataset_size}  final frechet: "
        f"{final.frechet if final.frechet is not None else 'n/a'}"
    )


@cli.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice([Q_OVERRIDE, EPSILON_SWEEP]), required=True)
@click.option("--values", required=True, help="Comma-separated values, e.g. 1,2,4,8 or inf,8,4,1")
def sweep_cmd(config_path: str, mode: str, values: str):
    """Re-run the loop once per parameter value (same seed)."""
    config = load_run_config(config_path)
    parsed = [v.strip() for v in values.split(",") if v.strip()]
    casted = [v if v == "inf" else float(v) for v in parsed]
    results = run_ablation(config, mode, values=casted)
    for value, result in zip(parsed, results):
        final = result.trace[-1]
        click.echo(
            f"{mode}={value}: samples={final.dataset_size} "
            f"frechet={final.frechet if final.frechet is not None else 'n/a'} "
            f"sigma={final.sigma if final.sigma is not None else result.trace[0].sigma}"
        )


def _markdown_table(headers: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines)


@cli.command("report")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--trace", "trace_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--format", "fmt", type=click.Choice(["markdown", "csv"]), default="markdown")
def report_cmd(config_path: str, trace_path: str | None, fmt: str):
    """Print the composition arithmetic and, given a trace, the run tables."""
    config = load_run_config(config_path)
    report = verify_composition(config.privacy)
    click.echo("privacy composition:")
    for line in report.lines():
        click.echo(f"  {line}")
    if trace_path is None:
        return
    records = read_trace(trace_path)
    headers = ["iteration", "generator", "raw_weight", "weight", "allocation", "frechet", "sigma"]
    rows = []
    for record in records:
        for generator_id, stats in sorted(record["generators"].items()):
            rows.append(
                [
                    str(record["iteration"]),
                    generator_id,
                    "" if stats["raw_weight"] is None else f"{stats['raw_weight']:.6f}",
                    f"{stats['weight']:.6f}",
                    str(stats["allocation"]),
                    "" if record["frechet"] is None else f"{record['frechet']:.6f}",
                    "" if record["sigma"] is None else f"{record['sigma']:.6f}",
                ]
            )
    if fmt == "markdown":
        click.echo(_markdown_table(headers, rows))
    else:
        click.echo(",".join(headers))
        for row in rows:
            click.echo(",".join(row))


@cli.command("partition")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def partition_cmd(config_path: str, out_path: str | None):
    """Draw the private-data partition and write its manifest."""
    from .orchestrator import _load_private_samples

    config = load_run_config(config_path)
    embedder = build_embedder(config.embedder)
    samples = _load_private_samples(config, embedder)
    partition = partition_dirichlet(
        [sample.label for sample in samples],
        config.parties,
        config.partition_alpha,
        stream(config.seed, "partition"),
    )
    target = Path(out_path) if out_path else config.output_dir / "partition.json"
    target.parent.mkdir(parents=True, exist_ok=True)
    write_partition_manifest(partition, target)
    sizes = [len(part) for part in partition]
    click.echo(f"manifest: {target}")
    click.echo(f"party sizes: {sizes}")


@cli.command("eval")
@click.argument("train_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("test_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def eval_cmd(train_file: str, test_file: str, config_path: str):
    """Fréchet distance between two dataset files plus downstream accuracy.

    The run's own embedder backs both metrics; accuracy comes from the
    nearest-centroid reference evaluator fit on TRAIN_FILE.
    """
    config = load_run_config(config_path)
    embedder = build_embedder(config.embedder)
    sets = []
    for path in (train_file, test_file):
        dataset = read_dataset(path, task=config.task)
        if len(dataset) < 2:
            raise ConfigError(f"{path}: need at least 2 samples to evaluate")
        vectors = embedder.embed_batch([record.sample for record in dataset])
        sets.append(EmbeddedSet(labels=tuple(dataset.labels()), vectors=vectors))
    train, test = sets
    click.echo(f"frechet_distance: {frechet_distance(train.vectors, test.vectors):.6f}")
    click.echo(f"nearest_centroid_accuracy: {nearest_centroid_eval(train, test):.4f}")


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.ClickException as error:
        error.show()
        sys.exit(error.exit_code)
    except click.Abort:
        sys.exit(130)
    except (ConfigError, DatasetFormatError) as error:
        click.echo(f"configuration error: {error}", err=True)
        sys.exit(2)
    except BackendError as error:
        click.echo(f"backend error: {error}", err=True)
        sys.exit(3)
    except PrivacyDisciplineError as error:
        click.echo(f"privacy discipline error: {error}", err=True)
        sys.exit(4)
    except VoteSynthError as error:
        click.echo(f"error: {error}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
