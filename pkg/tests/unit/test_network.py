from typing import Dict, Any

import numpy as np
import pytest

from spikegrad.exception import ConfigurationException
from spikegrad.lif import LifParams
from spikegrad.network import (
    DenseLayer,
    Network,
    forward_outputs,
    forward_sequence,
    forward_step,
    init_network,
)


@pytest.fixture
def context() -> Dict[str, Any]:
    rng = np.random.default_rng(3)
    return {
        "lif": LifParams(leak=0.8, slope=5.0),
        "widths": [12, 6, 4],
        "spikes": (rng.random((5, 15, 12)) < 0.3).astype(np.uint8),
    }


class TestInitNetwork:
    """
    Seeded scaled-uniform initialisation.
    """

    def test_same_seed_same_weights(self, context: Dict[str, Any]) -> None:
        a = init_network(context["widths"], context["lif"], seed=7)
        b = init_network(context["widths"], context["lif"], seed=7)
        for left, right in zip(a.weights, b.weights):
            np.testing.assert_array_equal(left, right)

    def test_bound(self, context: Dict[str, Any]) -> None:
        net = init_network(context["widths"], context["lif"], seed=0)
        for layer in net.layers:
            assert np.all(np.abs(layer.weights) <= 1.0 / np.sqrt(layer.n_in))

    def test_widths(self, context: Dict[str, Any]) -> None:
        net = init_network(context["widths"], context["lif"], seed=0)
        assert net.widths == context["widths"]
        assert net.shapes == [(6, 12), (4, 6)]

    def test_vector_round_trip(self, context: Dict[str, Any]) -> None:
        net = init_network(context["widths"], context["lif"], seed=0)
        rebuilt = net.from_vector(net.vector)
        for left, right in zip(net.weights, rebuilt.weights):
            np.testing.assert_array_equal(left, right)

    def test_mismatched_layers(self) -> None:
        with pytest.raises(ConfigurationException):
            Network([DenseLayer(np.zeros((3, 4))), DenseLayer(np.zeros((2, 5)))])


class TestForward:
    """
    Simulation through time.
    """

    def test_identity_zero_input(self, context: Dict[str, Any]) -> None:
        net = Network([DenseLayer(np.eye(4))], context["lif"])
        outputs, _, _ = forward_step(net, np.zeros((1, 4)), net.fresh_states(1))
        assert not np.any(outputs)

    def test_zero_input_stays_silent(self, context: Dict[str, Any]) -> None:
        net = init_network(context["widths"], context["lif"], seed=1)
        trajectory = forward_sequence(net, np.zeros((2, 20, 12), dtype=np.uint8))
        assert not np.any(trajectory.outputs)
        for pre_activation in trajectory.pre_activation:
            np.testing.assert_array_equal(pre_activation, -net.lif.threshold)

    def test_deterministic(self, context: Dict[str, Any]) -> None:
        net = init_network(context["widths"], context["lif"], seed=1)
        a = forward_sequence(net, context["spikes"])
        b = forward_sequence(net, context["spikes"])
        np.testing.assert_array_equal(a.outputs, b.outputs)

    def test_memoryless_without_leak(self, context: Dict[str, Any]) -> None:
        lif = LifParams(leak=0.0, slope=5.0)
        net = init_network(context["widths"], lif, seed=1)
        full = forward_sequence(net, context["spikes"])
        for t in range(context["spikes"].shape[1]):
            single = forward_sequence(net, context["spikes"][:, t : t + 1, :])
            # λ = 0 drops the carried membrane entirely
            np.testing.assert_allclose(
                full.pre_activation[0][t], single.pre_activation[0][0]
            )

    def test_trajectory_shapes(self, context: Dict[str, Any]) -> None:
        net = init_network(context["widths"], context["lif"], seed=1)
        trajectory = forward_sequence(net, context["spikes"])
        assert trajectory.steps == 15
        assert trajectory.outputs.shape == (15, 5, 4)
        assert trajectory.presynaptic[1].shape == (15, 5, 6)

    def test_outputs_match_sequence(self, context: Dict[str, Any]) -> None:
        net = init_network(context["widths"], context["lif"], seed=2)
        trajectory = forward_sequence(net, context["spikes"])
        np.testing.assert_array_equal(forward_outputs(net, context["spikes"], chunk=2), trajectory.outputs)

    def test_channel_mismatch(self, context: Dict[str, Any]) -> None:
        net = init_network(context["widths"], context["lif"], seed=1)
        with pytest.raises(ConfigurationException):
            forward_sequence(net, np.zeros((1, 3, 5), dtype=np.uint8))
