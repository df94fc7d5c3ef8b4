import logging

from pathlib import Path
from typing import Dict, Any

import numpy as np
import pytest

from spikegrad.diagnostics import (
    CosineScope,
    LandscapeSpec,
    compare_records,
    cosine_similarity,
    evaluate,
    landscape_frame,
    landscape_grid,
    memory_report,
    trajectory_project,
)
from spikegrad.exception import ConfigurationException
from spikegrad.gradient import GradientRecord
from spikegrad.lif import LifParams
from spikegrad.network import init_network
from spikegrad.randman import DATASET_STREAM, RandmanGenerator
from spikegrad.type_models import Algorithm, LossSpec, RandmanSpec


@pytest.fixture
def context() -> Dict[str, Any]:
    rng = np.random.default_rng(0)
    spec = RandmanSpec(neurons=8, steps=10, num_classes=3, seed=1)
    net = init_network([8, 5, 3], LifParams(), seed=0)
    return {
        "gradient": GradientRecord([rng.normal(size=(3, 4)), rng.normal(size=(2, 3))]),
        "net": net,
        "initial": [w + rng.normal(scale=0.1, size=w.shape) for w in net.weights],
        "final": [w + rng.normal(scale=0.1, size=w.shape) for w in net.weights],
        "raster": RandmanGenerator(spec).held_out(DATASET_STREAM, 12),
        "loss": LossSpec(num_classes=3),
    }


class TestCosine:
    """
    Gradient direction agreement.
    """

    def test_identical(self, context: Dict[str, Any]) -> None:
        report = compare_records(context["gradient"], context["gradient"])
        assert report.model == pytest.approx(1.0)
        assert report.layers == pytest.approx([1.0, 1.0])
        assert not report.zero_norm

    def test_opposite(self, context: Dict[str, Any]) -> None:
        assert cosine_similarity(context["gradient"], context["gradient"] * -1.0) == pytest.approx(-1.0)

    def test_per_layer_scope(self, context: Dict[str, Any]) -> None:
        other = GradientRecord([context["gradient"].layers[0], -context["gradient"].layers[1]])
        layers = cosine_similarity(context["gradient"], other, CosineScope.PER_LAYER)
        assert layers == pytest.approx([1.0, -1.0])

    def test_zero_norm_flagged(self, context: Dict[str, Any], caplog: pytest.LogCaptureFixture) -> None:
        zero = GradientRecord([np.zeros((3, 4)), context["gradient"].layers[1]])
        with caplog.at_level(logging.WARNING):
            report = compare_records(zero, context["gradient"])
        assert report.zero_norm
        assert report.layers[0] == 0.0
        assert report.layers[1] == pytest.approx(1.0)
        assert "Zero-norm" in caplog.text

    def test_shape_mismatch(self, context: Dict[str, Any]) -> None:
        with pytest.raises(ConfigurationException):
            compare_records(context["gradient"], GradientRecord([np.zeros((3, 4))]))


class TestLandscape:
    """
    Loss over a plane through three parameter points.
    """

    def spec(self, context: Dict[str, Any], points: int = 3) -> LandscapeSpec:
        return LandscapeSpec.from_weights(
            context["net"], context["initial"], context["final"], context["raster"], context["loss"], points=points
        )

    def test_center_matches_direct_loss(self, context: Dict[str, Any]) -> None:
        spec = self.spec(context)
        losses = landscape_grid(spec)
        direct, _ = evaluate(context["net"], context["raster"], context["loss"])
        assert losses.shape == (3, 3)
        assert losses[1, 1] == pytest.approx(direct, abs=1e-12)

    def test_corner_is_initial_model(self, context: Dict[str, Any]) -> None:
        spec = self.spec(context)
        point = spec.point(1.0, 0.0)
        for expected, actual in zip(context["initial"], point.weights):
            np.testing.assert_allclose(actual, expected, atol=1e-12)

    def test_trajectory_checkpoints_follow_interval(self, context: Dict[str, Any], tmp_path: Path) -> None:
        for name in ("ckpt_000000.ckpt", "ckpt_000100.ckpt", "ckpt_000200.ckpt", "ckpt_000400.ckpt", "best.ckpt"):
            (tmp_path / name).write_bytes(b"")
        spec = LandscapeSpec.from_weights(
            context["net"], context["initial"], context["final"], context["raster"], context["loss"], interval=200
        )
        assert [index for index, _ in spec.trajectory_checkpoints(tmp_path)] == [0, 200, 400]

    def test_interval_must_be_positive(self, context: Dict[str, Any]) -> None:
        with pytest.raises(ConfigurationException):
            LandscapeSpec.from_weights(
                context["net"], context["initial"], context["final"], context["raster"], context["loss"], interval=0
            )

    def test_frame(self, context: Dict[str, Any]) -> None:
        spec = self.spec(context)
        frame = landscape_frame(spec, np.arange(9.0).reshape(3, 3))
        assert list(frame.columns) == ["alpha", "beta", "loss"]
        assert frame.iloc[5].tolist() == [0.0, 1.0, 5.0]

    def test_projection(self, context: Dict[str, Any]) -> None:
        spec = self.spec(context)
        target = spec.center.from_vector(spec.center.vector + 2.0 * spec.delta + 3.0 * spec.nu)
        (point,) = trajectory_project([target.weights], spec)
        assert point.alpha == pytest.approx(2.0)
        assert point.beta == pytest.approx(3.0)
        assert point.residual < 1e-10

    def test_off_plane_residual(self, context: Dict[str, Any]) -> None:
        spec = self.spec(context)
        shifted = [w + 0.05 for w in context["net"].weights]
        (point,) = trajectory_project([shifted], spec)
        assert point.residual > 1e-3

    def test_dependent_directions(self, context: Dict[str, Any]) -> None:
        doubled = [2.0 * (i - c) + c for i, c in zip(context["initial"], context["net"].weights)]
        with pytest.raises(ConfigurationException):
            LandscapeSpec.from_weights(
                context["net"], context["initial"], doubled, context["raster"], context["loss"]
            )

    def test_zero_direction(self, context: Dict[str, Any]) -> None:
        with pytest.raises(ConfigurationException):
            LandscapeSpec.from_weights(
                context["net"], context["net"].weights, context["final"], context["raster"], context["loss"]
            )


class TestMemoryReport:
    """
    Persistent elements per algorithm and layer.
    """

    def test_rows(self) -> None:
        frame = memory_report([4, 3], steps=10, algorithms=[Algorithm.OTTT, Algorithm.BPTT])
        assert frame["elements"].tolist() == [4, 130]
        assert frame["algorithm"].tolist() == ["ottt", "bptt"]

    def test_every_algorithm(self) -> None:
        frame = memory_report([6, 5, 4], steps=20)
        assert len(frame) == 2 * len(Algorithm)
