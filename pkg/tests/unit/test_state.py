from typing import Dict, Any

import numpy as np
import pytest

from spikegrad.exception import ConfigurationException
from spikegrad.state import LayerState, SpikeRaster


@pytest.fixture
def context() -> Dict[str, Any]:
    membrane = np.array([[0.1, -0.2, 0.3]])
    spikes = np.array([[1.0, 0.0, 0.0]])
    return {
        "membrane": membrane,
        "spikes": spikes,
        "resulting_state": LayerState(membrane, spikes),
        "raster": SpikeRaster(
            spikes=np.arange(24, dtype=np.uint8).reshape(4, 3, 2) % 2,
            labels=np.array([0, 1, 2, 1]),
            num_classes=3,
        ),
    }


class TestLayerState:
    """
    Membrane and spike vectors carried between steps.
    """

    def test_vector(self, context: Dict[str, Any]) -> None:
        np.testing.assert_array_equal(
            context["resulting_state"].vector,
            np.concatenate([context["membrane"], context["spikes"]], axis=-1),
        )

    def test_from_vector(self, context: Dict[str, Any]) -> None:
        state = LayerState.from_vector(context["resulting_state"].vector)
        np.testing.assert_array_equal(state.membrane, context["membrane"])
        np.testing.assert_array_equal(state.spikes, context["spikes"])

    def test_fresh_is_zero(self) -> None:
        state = LayerState.fresh(5, batch=2)
        assert state.membrane.shape == (2, 5)
        assert not np.any(state.membrane) and not np.any(state.spikes)


class TestSpikeRaster:
    """
    Labelled binary rasters.
    """

    def test_dimensions(self, context: Dict[str, Any]) -> None:
        raster = context["raster"]
        assert (raster.batch, raster.steps, raster.channels) == (4, 3, 2)

    def test_subset(self, context: Dict[str, Any]) -> None:
        subset = context["raster"].subset(np.array([1, 3]))
        np.testing.assert_array_equal(subset.labels, [1, 1])
        np.testing.assert_array_equal(subset.spikes, context["raster"].spikes[[1, 3]])

    def test_label_out_of_range(self) -> None:
        with pytest.raises(ConfigurationException):
            SpikeRaster(np.zeros((2, 3, 4), dtype=np.uint8), np.array([0, 3]), num_classes=3)

    def test_needs_three_axes(self) -> None:
        with pytest.raises(ConfigurationException):
            SpikeRaster(np.zeros((3, 4), dtype=np.uint8), np.array([0, 1, 2]), num_classes=3)
