import logging

import click
import pandas as pd

from pathlib import Path
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table
from typing import Dict, List, Sequence

from spikegrad.config import load_config, output_root
from spikegrad.data import build_source
from spikegrad.trainer import compare_gradients, train
from spikegrad.type_models import Algorithm

logger = logging.getLogger(__name__)

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


def learning_runs(config_path: Path, algorithms: Sequence[Algorithm], seeds: int) -> pd.DataFrame:
    """Final and trailing-window validation accuracy per (algorithm, seed)."""
    rows: List[Dict[str, object]] = []

    for algorithm in algorithms:
        for seed in range(seeds):
            config = load_config(config_path, flags={"algorithm": algorithm.value, "seed": seed})
            source = build_source(config.dataset, config.seed)
            result = train(config, source)
            rows.append(
                {
                    "config": config_path.stem,
                    "algorithm": algorithm.value,
                    "seed": seed,
                    "final_valid_accuracy": result.summary.final_valid_accuracy,
                    "window_mean_accuracy": result.summary.window_mean_accuracy,
                }
            )
            logger.info("%s seed %d: %.4f", algorithm.value, seed, result.summary.final_valid_accuracy)

    return pd.DataFrame(rows)


def fidelity_run(config_path: Path) -> pd.DataFrame:
    """Mean per-layer cosine vs BPTT of every compared algorithm."""
    config = load_config(config_path)
    source = build_source(config.dataset, config.seed)
    results = compare_gradients(config, source)

    rows = [
        {"algorithm": algorithm.value, "cos_model": report.model}
        | {f"cos_layer_{index}": value for index, value in enumerate(report.layers)}
        for _, algorithm, report in results
    ]
    return pd.DataFrame(rows).groupby("algorithm").mean()


def fidelity_checks(fidelity: pd.DataFrame) -> Dict[str, bool]:
    """Ordering of mean first-hidden-layer cosines."""
    h1 = fidelity["cos_layer_0"]
    baseline = max(h1[Algorithm.OSTL.value], h1[Algorithm.OTTT.value])
    return {
        "OTPE H1 >= OSTL/OTTT + 0.15": bool(h1[Algorithm.OTPE.value] >= baseline + 0.15),
        "Approx OTPE H1 >= OSTL/OTTT + 0.15": bool(h1[Algorithm.APPROX_OTPE.value] >= baseline + 0.15),
        "Approx OTPE H1 >= 0.5": bool(h1[Algorithm.APPROX_OTPE.value] >= 0.5),
        "OSTL/OTTT H1 <= 0.35": bool(baseline <= 0.35),
    }


def learning_checks(name: str, runs: pd.DataFrame) -> Dict[str, bool]:
    """Ordering of mean final validation accuracy over seeds."""
    accuracy = runs.groupby("algorithm")["final_valid_accuracy"].mean()
    if name.startswith("learning_t"):
        return {
            "OTPE >= BPTT - 3%": bool(accuracy[Algorithm.OTPE.value] >= accuracy[Algorithm.BPTT.value] - 0.03),
            "OTPE >= OTTT + 4%": bool(accuracy[Algorithm.OTPE.value] >= accuracy[Algorithm.OTTT.value] + 0.04),
        }
    return {"all algorithms within 3%": bool(accuracy.max() - accuracy.min() <= 0.03)}


def show_checks(checks: Dict[str, bool], title: str) -> None:
    table = Table(title=title)
    table.add_column("ordering")
    table.add_column("holds")
    for name, holds in checks.items():
        table.add_row(name, "[green]yes[/green]" if holds else "[red]no[/red]")
        if not holds:
            logger.warning("Ordering does not hold: %s", name)
    Console().print(table)


def show(frame: pd.DataFrame, title: str) -> None:
    table = Table(title=title)
    frame = frame.reset_index()
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.itertuples(index=False):
        table.add_row(*(f"{value:.4f}" if isinstance(value, float) else str(value) for value in row))
    Console().print(table)


@click.command()
@click.option("--seeds", type=int, default=4, show_default=True)
@click.option("--skip-learning", is_flag=True, help="Only run the gradient-fidelity comparison.")
def main(seeds: int, skip_learning: bool) -> None:
    logging.basicConfig(level=logging.INFO, format="%(message)s", handlers=[RichHandler(show_path=False)])
    target = output_root() / "evaluation"
    target.mkdir(parents=True, exist_ok=True)

    fidelity = fidelity_run(CONFIGS / "fidelity_t_randman.cfg")
    fidelity.to_csv(target / "fidelity.csv")
    show(fidelity, "Mean cosine vs BPTT, T-Randman")
    show_checks(fidelity_checks(fidelity), "Fidelity orderings")

    if skip_learning:
        return

    algorithms = [Algorithm.BPTT, Algorithm.OSTL, Algorithm.OTTT, Algorithm.OTPE, Algorithm.APPROX_OTPE]
    for name in ("learning_t_randman.cfg", "learning_r_randman.cfg"):
        runs = learning_runs(CONFIGS / name, algorithms, seeds)
        runs.to_csv(target / f"{Path(name).stem}.csv", index=False)
        show(
            runs.groupby("algorithm")[["final_valid_accuracy", "window_mean_accuracy"]].mean(),
            f"Mean validation accuracy over {seeds} seeds, {Path(name).stem}",
        )
        show_checks(learning_checks(Path(name).stem, runs), f"Learning orderings, {Path(name).stem}")


if __name__ == "__main__":
    main()
