import numpy as np

from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

from spikegrad.exception import ConfigurationException
from spikegrad.lif import LifParams, lif_step
from spikegrad.state import LayerState, StepRecord, Trajectory
from spikegrad.util import flatten_arrays, seeded_generator, split_vector


@dataclass
class DenseLayer:
    """Fully connected weights θ of shape [n_out, n_in]."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.weights.ndim != 2:
            raise ConfigurationException("Dense weights must be a matrix.")
        if not np.all(np.isfinite(self.weights)):
            raise ConfigurationException("Dense weights must be finite.")

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]


@dataclass
class Network:
    """Feed-forward stack of LIF dense layers with one global leak."""

    layers: List[DenseLayer]
    lif: LifParams = field(default_factory=LifParams)

    def __post_init__(self) -> None:
        if not self.layers:
            raise ConfigurationException("A network needs at least one layer.")
        for index in range(1, len(self.layers)):
            if self.layers[index].n_in != self.layers[index - 1].n_out:
                raise ConfigurationException(
                    f"Layer {index} expects {self.layers[index].n_in} inputs but "
                    f"layer {index - 1} emits {self.layers[index - 1].n_out}."
                )

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> List[int]:
        """Input size followed by every layer's output size."""
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    @property
    def shapes(self) -> List[Tuple[int, int]]:
        return [layer.weights.shape for layer in self.layers]

    @property
    def dtype(self) -> np.dtype:
        return self.layers[0].weights.dtype

    @property
    def weights(self) -> List[np.ndarray]:
        return [layer.weights for layer in self.layers]

    @property
    def vector(self) -> np.ndarray:
        """All weights flattened in layer order."""
        return flatten_arrays(self.weights)

    def from_vector(self, vector: np.ndarray) -> "Network":
        """Network with this topology and leak holding the given flat weights."""
        return self.with_weights(split_vector(vector, self.shapes))

    def with_weights(self, weights: Sequence[np.ndarray]) -> "Network":
        return replace(self, layers=[DenseLayer(np.array(w)) for w in weights])

    def fresh_states(self, batch: int) -> List[LayerState]:
        return [LayerState.fresh(layer.n_out, batch, self.dtype) for layer in self.layers]


def init_network(
    widths: Sequence[int],
    lif: LifParams,
    seed: int,
    dtype: type = np.float64,
) -> Network:
    """Scaled-uniform initialisation, bound 1/√n_in, seeded per layer.

    Args:
        widths: [n_in, hidden..., n_out]
        lif
        seed
        dtype
    """
    if len(widths) < 2:
        raise ConfigurationException("widths needs an input size and an output size.")

    layers = []
    for index, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / np.sqrt(n_in)
        weights = seeded_generator(seed, index).uniform(-bound, bound, size=(n_out, n_in))
        layers.append(DenseLayer(weights.astype(dtype)))

    return Network(layers=layers, lif=lif)


def forward_step(
    net: Network, inputs: np.ndarray, states: List[LayerState]
) -> Tuple[np.ndarray, List[LayerState], List[StepRecord]]:
    """One time-step through every layer.

    Args:
        net
        inputs: input spikes s⁰_t, shape [batch, n_in]
        states: one LayerState per layer

    Returns:
        outputs: output-layer spikes
        states: updated states
        records: per-layer x_t, g_t, s_t and s_pre_t
    """
    if len(states) != net.depth:
        raise ConfigurationException(
            f"Got {len(states)} layer states for a network of depth {net.depth}."
        )
    if inputs.shape[-1] != net.layers[0].n_in:
        raise ConfigurationException(
            f"Input has {inputs.shape[-1]} channels, the network expects "
            f"{net.layers[0].n_in}."
        )

    presynaptic = inputs.astype(net.dtype, copy=False)
    new_states: List[LayerState] = []
    records: List[StepRecord] = []

    for layer, state in zip(net.layers, states):
        current = presynaptic @ layer.weights.T
        spikes, new_state, pre_activation, derivative = lif_step(state, current, net.lif)

        new_states.append(new_state)
        records.append(StepRecord(pre_activation, derivative, spikes, presynaptic))
        presynaptic = spikes

    return presynaptic, new_states, records


def forward_sequence(net: Network, spikes: np.ndarray) -> Trajectory:
    """Unroll the network over a raster and keep everything reverse mode needs.

    Args:
        net
        spikes: [batch, T, channels] or a single example [T, channels]
    """
    if spikes.ndim == 2:
        spikes = spikes[None]
    if spikes.shape[1] < 1:
        raise ConfigurationException("A raster needs at least one time-step.")

    states = net.fresh_states(spikes.shape[0])
    steps: List[List[StepRecord]] = []

    for t in range(spikes.shape[1]):
        _, states, records = forward_step(net, spikes[:, t, :], states)
        steps.append(records)

    def stack(name: str) -> List[np.ndarray]:
        return [
            np.stack([getattr(step[layer], name) for step in steps])
            for layer in range(net.depth)
        ]

    return Trajectory(
        pre_activation=stack("pre_activation"),
        derivative=stack("derivative"),
        spikes=stack("spikes"),
        presynaptic=stack("presynaptic"),
    )


def forward_outputs(net: Network, spikes: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Output spikes only, [T, batch, n_out], simulated in chunks of examples.

    Keeps memory flat for large evaluation sets; nothing is stored for gradients.
    """
    if spikes.ndim == 2:
        spikes = spikes[None]

    batch, steps = spikes.shape[0], spikes.shape[1]
    outputs = np.zeros((steps, batch, net.layers[-1].n_out), dtype=net.dtype)

    for start in range(0, batch, chunk):
        part = spikes[start : start + chunk]
        states = net.fresh_states(part.shape[0])
        for t in range(steps):
            outputs[t, start : start + part.shape[0]], states, _ = forward_step(net, part[:, t, :], states)

    return outputs
