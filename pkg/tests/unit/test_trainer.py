from pathlib import Path
from typing import Dict, Any

import numpy as np
import pytest

from spikegrad.checkpoint import load_checkpoint
from spikegrad.config import load_config
from spikegrad.data import build_source
from spikegrad.exception import ConfigurationException, ResourceCapException
from spikegrad.randman import DATASET_STREAM, RandmanGenerator
from spikegrad.raster_io import raster_write
from spikegrad.trainer import (
    build_network,
    compare_gradients,
    compute_gradients,
    network_widths,
    resolve_loss,
    train,
)
from spikegrad.type_models import Algorithm, ExperimentConfig

SMALL = {
    "dataset.randman.neurons": 8,
    "dataset.randman.steps": 10,
    "dataset.randman.num_classes": 3,
    "dataset.valid_examples": 16,
    "model.depth": 2,
    "model.width": 6,
    "model.slope": 5.0,
    "schedule.minibatches": 3,
    "schedule.batch_size": 4,
    "schedule.checkpoint_every": 2,
}


def small_config(**flags: Any) -> ExperimentConfig:
    return load_config(flags={**SMALL, **flags})


@pytest.fixture
def context(tmp_path: Path) -> Dict[str, Any]:
    return {"directory": tmp_path}


class TestComputeGradients:
    """
    Offline minibatch gradients for every algorithm.
    """

    @pytest.mark.parametrize(
        "algorithm",
        [Algorithm.BPTT, Algorithm.RTRL, Algorithm.OSTL, Algorithm.OTTT, Algorithm.OTPE, Algorithm.APPROX_OTPE],
    )
    def test_shapes(self, algorithm: Algorithm) -> None:
        config = small_config(algorithm=algorithm.value)
        source = build_source(config.dataset, config.seed)
        net = build_network(config, source)

        step = compute_gradients(
            net, source.batch(0, 4), resolve_loss(config, source), algorithm, config.algorithm_options
        )
        assert step.grads.shapes == [(6, 8), (3, 6)]
        assert step.grads.is_finite()
        assert step.deltas.shape == (10, 4, 3)

    def test_rejects_f_variants(self) -> None:
        config = small_config()
        source = build_source(config.dataset, config.seed)
        net = build_network(config, source)
        with pytest.raises(ConfigurationException):
            compute_gradients(
                net, source.batch(0, 4), resolve_loss(config, source), Algorithm.F_OTPE, config.algorithm_options
            )

    def test_widths_follow_data(self) -> None:
        config = small_config(**{"model.depth": 3})
        source = build_source(config.dataset, config.seed)
        assert network_widths(config, source) == [8, 6, 6, 3]


class TestOfflineTraining:
    """
    One update per minibatch.
    """

    def test_outputs(self, context: Dict[str, Any]) -> None:
        config = small_config()
        result = train(config, build_source(config.dataset, config.seed), context["directory"])

        assert len(result.log.records) == 3
        assert result.summary.minibatches == 3
        assert result.summary.final_valid_accuracy is not None
        for name in ("ckpt_000000.ckpt", "ckpt_000002.ckpt", "best.ckpt", "final.ckpt", "runlog.csv", "summary.json"):
            assert (context["directory"] / name).is_file()

        for saved, current in zip(load_checkpoint(context["directory"] / "final.ckpt"), result.net.weights):
            np.testing.assert_array_equal(saved, current)

    def test_runlog_reproducible(self, context: Dict[str, Any]) -> None:
        config = small_config()
        for name in ("a", "b"):
            (context["directory"] / name).mkdir()
            train(config, build_source(config.dataset, config.seed), context["directory"] / name)

        first = (context["directory"] / "a" / "runlog.csv").read_bytes()
        assert first == (context["directory"] / "b" / "runlog.csv").read_bytes()

    def test_zero_learning_rate(self) -> None:
        config = small_config(**{"optimizer.learning_rate": 0.0})
        source = build_source(config.dataset, config.seed)
        result = train(config, source)
        for initial, final in zip(build_network(config, source).weights, result.net.weights):
            np.testing.assert_array_equal(initial, final)

    def test_ostl_trains_like_bptt_on_one_layer(self) -> None:
        weights = []
        for algorithm in ("bptt", "ostl"):
            config = small_config(algorithm=algorithm, **{"model.depth": 1})
            weights.append(train(config, build_source(config.dataset, config.seed)).net.weights)

        # Same gradients up to summation order
        for left, right in zip(*weights):
            np.testing.assert_allclose(left, right, atol=1e-8)

    def test_cosine_recorded(self) -> None:
        config = small_config(algorithm="ostl", **{"model.depth": 1, "diagnostics.cosine_vs_bptt": True})
        result = train(config, build_source(config.dataset, config.seed))
        for record in result.log.records:
            assert record.cos_model == pytest.approx(1.0)
            assert len(record.cos_layers) == 1

    def test_trace_elements_logged(self) -> None:
        config = small_config(algorithm="ottt")
        result = train(config, build_source(config.dataset, config.seed))
        # â per layer input: 8 + 6
        assert {record.trace_elements for record in result.log.records} == {14}

    def test_otpe_keeps_surrogate_average(self) -> None:
        config = small_config(algorithm="otpe")
        result = train(config, build_source(config.dataset, config.seed))
        # P and R̂ per layer, plus ḡ and W for the hidden layer: 2·6·8 + 6 + 1 + 2·3·6
        assert {record.trace_elements for record in result.log.records} == {139}

    def test_rtrl_cap(self) -> None:
        config = small_config(algorithm="rtrl", **{"algorithm_options.rtrl_memory_cap": 10})
        with pytest.raises(ResourceCapException):
            train(config, build_source(config.dataset, config.seed))

    def test_stored_raster(self, context: Dict[str, Any]) -> None:
        spec = small_config().dataset.randman
        path = context["directory"] / "train.spkr"
        raster_write(path, RandmanGenerator(spec).held_out(DATASET_STREAM, 40))

        config = small_config(**{"dataset.kind": "raster_file", "dataset.path": str(path)})
        result = train(config, build_source(config.dataset, config.seed))
        assert result.summary.minibatches == 3


class TestOnlineTraining:
    """
    Updates from instantaneous losses.
    """

    @pytest.mark.parametrize("algorithm", ["ostl", "ottt", "otpe", "approx_otpe", "f_otpe", "f_approx_otpe", "rtrl"])
    def test_runs(self, algorithm: str) -> None:
        config = small_config(mode="online", algorithm=algorithm)
        result = train(config, build_source(config.dataset, config.seed))
        assert len(result.log.records) == 3
        assert all(np.all(np.isfinite(w)) for w in result.net.weights)

    def test_per_example_update(self) -> None:
        config = small_config(mode="online", algorithm="otpe", **{"schedule.online_update": "example"})
        source = build_source(config.dataset, config.seed)
        result = train(config, source)
        initial = build_network(config, source).weights
        assert any(not np.array_equal(a, b) for a, b in zip(initial, result.net.weights))
        assert all(np.all(np.isfinite(w)) for w in result.net.weights)

    def test_zero_learning_rate(self) -> None:
        config = small_config(mode="online", algorithm="f_otpe", **{"optimizer.learning_rate": 0.0})
        source = build_source(config.dataset, config.seed)
        result = train(config, source)
        for initial, final in zip(build_network(config, source).weights, result.net.weights):
            np.testing.assert_array_equal(initial, final)


class TestCompareGradients:
    """
    Side-by-side cosines along BPTT's trajectory.
    """

    def test_rows(self, context: Dict[str, Any]) -> None:
        config = small_config()
        results = compare_gradients(
            config, build_source(config.dataset, config.seed), context["directory"], [Algorithm.OTTT, Algorithm.OTPE]
        )
        assert len(results) == 3 * 2
        lines = (context["directory"] / "compare.csv").read_text().splitlines()
        assert lines[0] == "schema_version,minibatch,algorithm,cos_model,cos_layer_0,cos_layer_1,cos_zero_norm"
        assert len(lines) == 1 + 6

    def test_exact_algorithms_agree(self) -> None:
        config = small_config(**{"algorithm_options.reset_mode": "surrogate"})
        results = compare_gradients(config, build_source(config.dataset, config.seed), None, [Algorithm.RTRL])
        for _, _, report in results:
            assert report.model == pytest.approx(1.0)

    def test_rejects_online_only(self) -> None:
        config = small_config()
        with pytest.raises(ConfigurationException):
            compare_gradients(config, build_source(config.dataset, config.seed), None, [Algorithm.F_OTPE])
