import json

from pathlib import Path
from typing import Dict, Any, List

import pandas as pd
import pytest

from click.testing import CliRunner

from spikegrad.cli import cli
from spikegrad.raster_io import RasterEncoding, read_header

SMALL = [
    "--set", "dataset.randman.neurons=8",
    "--set", "dataset.randman.steps=10",
    "--set", "dataset.randman.num_classes=3",
    "--set", "dataset.valid_examples=8",
    "--set", "model.depth=2",
    "--set", "model.width=6",
    "--set", "schedule.batch_size=4",
]


@pytest.fixture
def context(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Dict[str, Any]:
    monkeypatch.setenv("SPIKEGRAD_OUTPUT_ROOT", str(tmp_path / "runs"))
    return {"runner": CliRunner(), "directory": tmp_path}


def invoke(context: Dict[str, Any], arguments: List[str]):
    return context["runner"].invoke(cli, arguments, catch_exceptions=False)


class TestGenerate:
    """
    Seeded dataset files.
    """

    def test_byte_identical(self, context: Dict[str, Any]) -> None:
        paths = [context["directory"] / f"{name}.spkr" for name in ("a", "b")]
        for path in paths:
            result = invoke(context, ["generate", "--kind", "t-randman", "--seed", "0", "--output", str(path)])
            assert result.exit_code == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_header(self, context: Dict[str, Any]) -> None:
        path = context["directory"] / "t.spkr"
        invoke(context, ["generate", "--seed", "0", "--examples", "20", "--output", str(path)])

        header = read_header(path)
        assert (header.steps, header.channels, header.num_classes, header.num_examples) == (50, 50, 10, 20)
        assert header.encoding is RasterEncoding.T_RANDMAN

        sidecar = json.loads(path.with_suffix(".json").read_text())
        assert sidecar["spec"]["seed"] == 0
        assert sidecar["kind"] == "t-randman"

    def test_rate_encoding(self, context: Dict[str, Any]) -> None:
        path = context["directory"] / "r.spkr"
        result = invoke(
            context,
            ["generate", "--kind", "r-randman", "--examples", "5", "--set", "max_spikes=5", "--output", str(path)],
        )
        assert result.exit_code == 0
        assert read_header(path).encoding is RasterEncoding.R_RANDMAN

    def test_invalid_alpha(self, context: Dict[str, Any]) -> None:
        result = invoke(context, ["generate", "--set", "alpha=0", "--output", str(context["directory"] / "x.spkr")])
        assert result.exit_code == 2
        assert not (context["directory"] / "x.spkr").exists()

    def test_default_location(self, context: Dict[str, Any]) -> None:
        invoke(context, ["generate", "--seed", "4", "--examples", "3"])
        assert (context["directory"] / "runs" / "t-randman-seed4.spkr").is_file()


class TestTrain:
    """
    The train command and its exit codes.
    """

    def test_runs(self, context: Dict[str, Any]) -> None:
        output = context["directory"] / "run"
        result = invoke(
            context,
            ["train", *SMALL, "--set", "schedule.minibatches=2", "--algorithm", "ottt", "--output-dir", str(output)],
        )
        assert result.exit_code == 0
        assert (output / "config.json").is_file()
        assert (output / "summary.json").is_file()
        assert json.loads((output / "config.json").read_text())["widths"] == [8, 6, 3]

    def test_default_run_directory(self, context: Dict[str, Any]) -> None:
        invoke(context, ["train", *SMALL, "--set", "schedule.minibatches=1", "--seed", "2"])
        assert (context["directory"] / "runs" / "train-randman_t-otpe-offline-seed2" / "runlog.csv").is_file()

    def test_report_memory(self, context: Dict[str, Any]) -> None:
        result = invoke(
            context,
            [
                "train",
                *SMALL,
                "--set", "schedule.minibatches=1",
                "--report-memory",
                "--output-dir", str(context["directory"] / "run"),
            ],
        )
        assert result.exit_code == 0
        assert "approx_otpe" in result.output

    def test_bptt_online_rejected(self, context: Dict[str, Any]) -> None:
        result = invoke(context, ["train", *SMALL, "--algorithm", "bptt", "--mode", "online"])
        assert result.exit_code == 2

    def test_bad_leak_rejected(self, context: Dict[str, Any]) -> None:
        result = invoke(context, ["train", *SMALL, "--set", "model.leak=1.5"])
        assert result.exit_code == 2

    def test_missing_config_file(self, context: Dict[str, Any]) -> None:
        result = invoke(context, ["train", "--config", str(context["directory"] / "absent.cfg")])
        assert result.exit_code == 2

    def test_malformed_raster(self, context: Dict[str, Any]) -> None:
        path = context["directory"] / "broken.spkr"
        path.write_bytes(b"SPKR\x01\x00")
        result = invoke(
            context, ["train", "--set", "dataset.kind=raster_file", "--set", f"dataset.path={path}"]
        )
        assert result.exit_code == 3

    def test_rtrl_over_cap(self, context: Dict[str, Any]) -> None:
        result = invoke(
            context,
            ["train", *SMALL, "--algorithm", "rtrl", "--set", "algorithm_options.rtrl_memory_cap=10"],
        )
        assert result.exit_code == 4


class TestCompare:
    """
    The compare command.
    """

    def test_runs(self, context: Dict[str, Any]) -> None:
        output = context["directory"] / "compare"
        result = invoke(
            context,
            [
                "compare",
                *SMALL,
                "--set", "schedule.minibatches=2",
                "--algorithms", "ottt,otpe",
                "--output-dir", str(output),
            ],
        )
        assert result.exit_code == 0
        assert len((output / "compare.csv").read_text().splitlines()) == 1 + 4
        assert "otpe" in result.output

    def test_rtrl_over_cap(self, context: Dict[str, Any]) -> None:
        result = invoke(
            context,
            ["compare", *SMALL, "--algorithms", "rtrl", "--set", "algorithm_options.rtrl_memory_cap=10"],
        )
        assert result.exit_code == 4

    def test_unknown_algorithm(self, context: Dict[str, Any]) -> None:
        result = invoke(context, ["compare", *SMALL, "--algorithms", "sgd"])
        assert result.exit_code == 2

    def test_online_only_rejected(self, context: Dict[str, Any]) -> None:
        result = invoke(context, ["compare", *SMALL, "--algorithms", "f_otpe"])
        assert result.exit_code == 2


class TestLandscape:
    """
    The landscape command on checkpoints of a short run.
    """

    def test_runs(self, context: Dict[str, Any]) -> None:
        run = context["directory"] / "run"
        invoke(
            context,
            [
                "train",
                *SMALL,
                "--set", "schedule.minibatches=4",
                "--set", "schedule.checkpoint_every=2",
                "--output-dir", str(run),
            ],
        )

        output = context["directory"] / "landscape"
        result = invoke(
            context,
            [
                "landscape",
                *SMALL,
                "--center", str(run / "ckpt_000002.ckpt"),
                "--initial", str(run / "ckpt_000000.ckpt"),
                "--final", str(run / "final.ckpt"),
                "--points", "3",
                "--output-dir", str(output),
            ],
        )
        assert result.exit_code == 0

        grid = (output / "landscape.csv").read_text().splitlines()
        assert grid[0] == "schema_version,alpha,beta,loss"
        assert len(grid) == 1 + 9

        trajectory = pd.read_csv(output / "trajectory.csv")
        assert trajectory["label"].tolist() == ["ckpt_000000", "final"]
        assert trajectory["alpha"][0] == pytest.approx(1.0)
        assert trajectory["beta"][0] == pytest.approx(0.0, abs=1e-9)
        assert trajectory["residual"].max() < 1e-9

    def test_run_trajectory_sampled_by_interval(self, context: Dict[str, Any]) -> None:
        run = context["directory"] / "run"
        invoke(
            context,
            [
                "train",
                *SMALL,
                "--set", "schedule.minibatches=4",
                "--set", "schedule.checkpoint_every=2",
                "--output-dir", str(run),
            ],
        )

        output = context["directory"] / "landscape"
        result = invoke(
            context,
            [
                "landscape",
                *SMALL,
                "--center", str(run / "ckpt_000002.ckpt"),
                "--initial", str(run / "ckpt_000000.ckpt"),
                "--final", str(run / "final.ckpt"),
                "--run", str(run),
                "--interval", "4",
                "--points", "2",
                "--output-dir", str(output),
            ],
        )
        assert result.exit_code == 0

        trajectory = pd.read_csv(output / "trajectory.csv")
        sampled = trajectory[trajectory["label"] == "run"]
        assert sampled["index"].tolist() == [0, 4]
        assert sampled["residual"].max() < 1e-9

    def test_mismatched_checkpoint(self, context: Dict[str, Any]) -> None:
        run = context["directory"] / "run"
        invoke(context, ["train", *SMALL, "--set", "schedule.minibatches=2", "--output-dir", str(run)])

        result = invoke(
            context,
            [
                "landscape",
                "--set", "model.depth=2",
                "--center", str(run / "final.ckpt"),
                "--initial", str(run / "ckpt_000000.ckpt"),
                "--final", str(run / "ckpt_000000.ckpt"),
            ],
        )
        assert result.exit_code == 2
