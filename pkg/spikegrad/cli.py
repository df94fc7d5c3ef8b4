import functools
import json
import logging
import sys

import click
import numpy as np

from pathlib import Path
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table
from typing import Any, Callable, Dict, List, Optional, Sequence

from spikegrad.checkpoint import load_checkpoint
from spikegrad.config import load_config, output_root, run_directory, validate
from spikegrad.data import build_source
from spikegrad.diagnostics import (
    LandscapeSpec,
    landscape_frame,
    landscape_grid,
    memory_report,
    trajectory_project,
)
from spikegrad.exception import ConfigurationException, SpikegradException
from spikegrad.lif import LifParams
from spikegrad.network import DenseLayer, Network
from spikegrad.randman import DATASET_STREAM, RandmanGenerator
from spikegrad.raster_io import RasterEncoding, raster_write
from spikegrad.runlog import CsvWriter, RunSummary, write_config_snapshot
from spikegrad.trainer import compare_gradients, network_widths, resolve_loss, train
from spikegrad.type_models import Algorithm, ExperimentConfig, RandmanSpec

logger = logging.getLogger(__name__)

console = Console()


def exits_with_code(command: Callable[..., None]) -> Callable[..., None]:
    """Turn library exceptions into their documented exit codes."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            command(*args, **kwargs)
        except SpikegradException as error:
            logger.error("%s", error)
            sys.exit(error.exit_code)

    return wrapper


def config_options(command: Callable[..., None]) -> Callable[..., None]:
    options = [
        click.option("--config", "config_path", type=click.Path(path_type=Path), help="Flat `key: value` config file."),
        click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override one config key."),
        click.option("--algorithm", type=click.Choice([a.value for a in Algorithm])),
        click.option("--mode", type=click.Choice(["offline", "online"])),
        click.option("--seed", type=int),
        click.option("--output-dir", type=click.Path(path_type=Path)),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def resolve(
    config_path: Optional[Path],
    overrides: Sequence[str],
    algorithm: Optional[str],
    mode: Optional[str],
    seed: Optional[int],
    output_dir: Optional[Path],
    **flags: Any,
) -> ExperimentConfig:
    return load_config(
        config_path,
        overrides,
        {
            "algorithm": algorithm,
            "mode": mode,
            "seed": seed,
            "output_dir": None if output_dir is None else str(output_dir),
            **flags,
        },
    )


def print_memory_report(widths: Sequence[int], steps: int, config: ExperimentConfig) -> None:
    frame = memory_report(widths, steps, spatial_factor=config.algorithm_options.spatial_factor)

    table = Table(title=f"Persistent elements per example (widths {list(widths)}, T={steps})")
    for column in frame.columns:
        table.add_column(column, justify="right" if column != "algorithm" else "left")
    for row in frame.itertuples(index=False):
        table.add_row(*(str(value) for value in row))
    console.print(table)


def print_summary(summary: RunSummary) -> None:
    table = Table(title="Run summary")
    table.add_column("metric")
    table.add_column("value", justify="right")
    for key, value in summary.model_dump().items():
        table.add_row(key, "" if value is None else str(value))
    console.print(table)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log at debug level.")
def cli(verbose: bool) -> None:
    """Online gradient estimation for feed-forward spiking networks."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@cli.command()
@click.option("--kind", type=click.Choice(["t-randman", "r-randman"]), default="t-randman", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--examples", type=int, default=1000, show_default=True)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Randman field, e.g. alpha=2.")
@click.option("--output", type=click.Path(path_type=Path), help="Raster file to write.")
@exits_with_code
def generate(kind: str, seed: int, examples: int, overrides: Sequence[str], output: Optional[Path]) -> None:
    """Write a seeded Randman dataset as a raster file with a JSON sidecar."""
    flat: Dict[str, Any] = {}
    for override in overrides:
        key, _, value = override.partition("=")
        flat[key.strip()] = value.strip()
    flat["seed"] = seed
    spec = validate(RandmanSpec, flat)
    if examples < 1:
        raise ConfigurationException("--examples must be at least 1.")

    rate = kind == "r-randman"
    if output is None:
        output = output_root() / f"{kind}-seed{seed}.spkr"
    try:
        output.parent.mkdir(parents=True, exist_ok=True)
    except OSError as error:
        raise ConfigurationException(f"Cannot create {output.parent}: {error}") from None

    raster = RandmanGenerator(spec, rate=rate).held_out(DATASET_STREAM, examples)
    encoding = RasterEncoding.R_RANDMAN if rate else RasterEncoding.T_RANDMAN
    try:
        header = raster_write(output, raster, encoding)
    except OSError as error:
        raise ConfigurationException(f"Cannot write {output}: {error}") from None

    sidecar = {"kind": kind, "examples": examples, "spec": spec.model_dump(mode="json")}
    output.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    logger.info(
        "Wrote %d examples (T=%d, channels=%d, classes=%d) to %s",
        header.num_examples,
        header.steps,
        header.channels,
        header.num_classes,
        output,
    )


@cli.command(name="train")
@config_options
@click.option("--report-memory", is_flag=True, help="Print per-layer trace sizes.")
@exits_with_code
def train_command(report_memory: bool, **options: Any) -> None:
    """Train one configuration and write runlog.csv, checkpoints and a summary."""
    config = resolve(**options, **{"diagnostics.report_memory": True if report_memory else None})
    directory = run_directory(config, "train")
    source = build_source(config.dataset, config.seed)
    widths = network_widths(config, source)

    write_config_snapshot(directory / "config.json", config, widths=widths, steps=source.steps)

    if config.diagnostics.report_memory:
        print_memory_report(widths, source.steps, config)

    result = train(config, source, directory)
    print_summary(result.summary)


@cli.command()
@config_options
@click.option("--algorithms", help="Comma-separated algorithms to compare against bptt.")
@exits_with_code
def compare(algorithms: Optional[str], **options: Any) -> None:
    """Cosine similarity of each algorithm's gradient to BPTT along BPTT's trajectory."""
    config = resolve(**options)
    requested: Optional[List[Algorithm]] = None
    if algorithms:
        try:
            requested = [Algorithm(name.strip()) for name in algorithms.split(",") if name.strip()]
        except ValueError as error:
            raise ConfigurationException(str(error)) from None

    directory = run_directory(config, "compare")
    source = build_source(config.dataset, config.seed)
    write_config_snapshot(
        directory / "config.json",
        config,
        widths=network_widths(config, source),
        steps=source.steps,
        algorithms=[a.value for a in (requested or config.diagnostics.compare_algorithms)],
    )

    results = compare_gradients(config, source, directory, requested)

    table = Table(title="Mean cosine vs BPTT")
    table.add_column("algorithm")
    table.add_column("model", justify="right")
    table.add_column("per layer", justify="right")
    for algorithm in requested or config.diagnostics.compare_algorithms:
        reports = [report for _, name, report in results if name is algorithm]
        if not reports:
            continue
        model = np.mean([r.model for r in reports])
        layers = np.mean([r.layers for r in reports], axis=0)
        table.add_row(algorithm.value, f"{model:.4f}", " ".join(f"{v:.4f}" for v in layers))
    console.print(table)


@cli.command()
@config_options
@click.option("--center", type=click.Path(exists=True, path_type=Path), required=True, help="θ* checkpoint.")
@click.option("--initial", type=click.Path(exists=True, path_type=Path), required=True, help="δ endpoint checkpoint.")
@click.option("--final", type=click.Path(exists=True, path_type=Path), required=True, help="ν endpoint checkpoint.")
@click.option("--trajectory", "trajectory_paths", multiple=True, type=click.Path(exists=True, path_type=Path))
@click.option(
    "--run",
    "runs",
    multiple=True,
    type=click.Path(exists=True, file_okay=False, path_type=Path),
    help="Run directory whose numbered checkpoints form a trajectory.",
)
@click.option("--interval", type=int, default=200, show_default=True, help="Minibatches between sampled run checkpoints.")
@click.option("--points", type=int, default=21, show_default=True, help="Grid points per axis.")
@click.option("--extent", type=(float, float), default=(-1.0, 1.0), show_default=True)
@exits_with_code
def landscape(
    center: Path,
    initial: Path,
    final: Path,
    trajectory_paths: Sequence[Path],
    runs: Sequence[Path],
    interval: int,
    points: int,
    extent: Sequence[float],
    **options: Any,
) -> None:
    """Loss over the plane through three checkpoints, plus projected checkpoint trajectories."""
    config = resolve(**options)
    if points < 1:
        raise ConfigurationException("--points must be at least 1.")

    directory = run_directory(config, "landscape")
    source = build_source(config.dataset, config.seed)
    write_config_snapshot(
        directory / "config.json",
        config,
        center=str(center),
        initial=str(initial),
        final=str(final),
        trajectory=[str(path) for path in trajectory_paths],
        runs=[str(run) for run in runs],
        interval=interval,
        points=points,
        extent=list(extent),
    )

    lif = LifParams(leak=config.model.leak, threshold=config.model.threshold, slope=config.model.slope)
    net = Network([DenseLayer(w) for w in load_checkpoint(center)], lif)
    if net.layers[0].n_in != source.channels or net.layers[-1].n_out != source.num_classes:
        raise ConfigurationException(
            f"Checkpoint widths {net.widths} do not fit the dataset "
            f"({source.channels} channels, {source.num_classes} classes)."
        )

    spec = LandscapeSpec.from_weights(
        net,
        load_checkpoint(initial),
        load_checkpoint(final),
        source.validation(),
        resolve_loss(config, source),
        points=points,
        extent=(extent[0], extent[1]),
        interval=interval,
    )

    frame = landscape_frame(spec, landscape_grid(spec))
    with CsvWriter(directory / "landscape.csv", ["alpha", "beta", "loss"]) as writer:
        writer.write_rows(frame.to_dict("records"))

    series = [(path.stem, index, path) for index, path in enumerate([initial, final, *trajectory_paths])]
    for run in runs:
        series.extend((run.name, minibatch, path) for minibatch, path in spec.trajectory_checkpoints(run))
    projected = trajectory_project([load_checkpoint(path) for _, _, path in series], spec)
    with CsvWriter(directory / "trajectory.csv", ["label", "index", "alpha", "beta", "residual"]) as writer:
        writer.write_rows(
            [
                {
                    "label": label,
                    "index": index,
                    "alpha": point.alpha,
                    "beta": point.beta,
                    "residual": point.residual,
                }
                for (label, index, _), point in zip(series, projected)
            ]
        )

    logger.info("Landscape of %d×%d points written to %s", points, points, directory)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
