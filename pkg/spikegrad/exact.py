"""Reference gradient engines: reverse mode through time and full forward mode.

Both are loss-agnostic. They take `deltas`, the loss derivative with respect to
the output spikes at every step, shaped [T, batch, n_classes], and return the
batch-mean gradient.
"""
import logging

import numpy as np

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from spikegrad.exception import ConfigurationException, ResourceCapException
from spikegrad.gradient import GradientRecord
from spikegrad.network import Network, forward_step
from spikegrad.state import StepRecord, Trajectory
from spikegrad.type_models import ResetMode

logger = logging.getLogger(__name__)


def _check_deltas(net: Network, deltas: np.ndarray, steps: int) -> None:
    expected = (steps, net.layers[-1].n_out)
    if deltas.ndim != 3 or (deltas.shape[0], deltas.shape[2]) != expected:
        raise ConfigurationException(
            f"Loss derivative of shape {deltas.shape} does not fit a network with "
            f"{expected[1]} outputs over {expected[0]} steps."
        )


def bptt_gradients(
    net: Network,
    trajectory: Trajectory,
    deltas: np.ndarray,
    reset_mode: ResetMode = ResetMode.DETACH,
) -> GradientRecord:
    """Exact reverse-mode gradients over a stored unroll.

    Args:
        net
        trajectory: from forward_sequence
        deltas: ∂L/∂s^L_t, shape [T, batch, n_out]
        reset_mode: detach takes ∂U_t/∂U_{t-1} = λ; surrogate adds −λ·V_th·g_t

    Returns:
        gradients: batch mean of the per-example gradients
    """
    _check_deltas(net, deltas, trajectory.steps)

    batch = deltas.shape[1]
    lif = net.lif
    grads = GradientRecord.zeros(net.shapes, dtype=net.dtype)
    membrane_adjoint = [np.zeros((batch, layer.n_out), dtype=net.dtype) for layer in net.layers]

    for t in reversed(range(trajectory.steps)):
        upstream = deltas[t]

        for index in reversed(range(net.depth)):
            derivative = trajectory.derivative[index][t]

            spike_adjoint = upstream
            if reset_mode is ResetMode.SURROGATE:
                spike_adjoint = spike_adjoint - lif.threshold * membrane_adjoint[index]

            # ∂L/∂(λU_{t-1} + I_t)
            drive_adjoint = membrane_adjoint[index] + spike_adjoint * derivative

            grads.layers[index] += drive_adjoint.T @ trajectory.presynaptic[index][t] / batch
            membrane_adjoint[index] = lif.leak * drive_adjoint
            upstream = drive_adjoint @ net.layers[index].weights

    return grads


@dataclass
class InfluenceTensor:
    """∂U^l_t/∂θ^m for every state layer l and parameter layer m ≤ l.

    Each block has shape [batch, n_l, n_m, n_{m,in}].
    """

    blocks: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    @staticmethod
    def layer_elements(widths: Sequence[int]) -> List[int]:
        """Per-example numbers of every state layer's blocks."""
        return [
            sum(widths[state + 1] * widths[param + 1] * widths[param] for param in range(state + 1))
            for state in range(len(widths) - 1)
        ]

    @staticmethod
    def elements_for(widths: Sequence[int]) -> int:
        """Numbers stored per example for a network with these widths."""
        return sum(InfluenceTensor.layer_elements(widths))

    @classmethod
    def zeros(cls, net: Network, batch: int) -> "InfluenceTensor":
        widths = net.widths
        blocks = {
            (state, param): np.zeros(
                (batch, widths[state + 1], widths[param + 1], widths[param]),
                dtype=net.dtype,
            )
            for state in range(net.depth)
            for param in range(state + 1)
        }
        return cls(blocks)

    @property
    def num_elements(self) -> int:
        if not self.blocks:
            return 0
        batch = next(iter(self.blocks.values())).shape[0]
        return sum(block.size for block in self.blocks.values()) // batch

    def is_zero(self) -> bool:
        return all(not np.any(block) for block in self.blocks.values())


class RtrlLearner:
    """Forward-mode exact gradients, one time-step at a time.

    Intended for tiny networks: the influence tensor is cubic in the width.
    """

    def __init__(
        self,
        net: Network,
        reset_mode: ResetMode = ResetMode.DETACH,
        memory_cap: int = 1 << 24,
    ) -> None:
        self._reset_mode = reset_mode
        self._memory_cap = memory_cap
        self._widths = net.widths
        self.influence = InfluenceTensor()

    def reset(self, net: Network, batch: int) -> None:
        required = InfluenceTensor.elements_for(net.widths) * batch
        if required > self._memory_cap:
            raise ResourceCapException(
                f"RTRL influence tensor needs {required} numbers for widths "
                f"{net.widths} and batch {batch}, above the memory cap of "
                f"{self._memory_cap}."
            )
        self.influence = InfluenceTensor.zeros(net, batch)

    def trace_elements(self) -> List[int]:
        """Per-example influence numbers, attributed to the state layer."""
        return InfluenceTensor.layer_elements(self._widths)

    def step(
        self, net: Network, records: List[StepRecord], delta: np.ndarray
    ) -> List[np.ndarray]:
        """Advance the influence tensor and return this step's gradient contribution.

        Args:
            net: weights used for this step
            records: forward_step records for this step
            delta: ∂L_t/∂s^L_t, shape [batch, n_out]
        """
        lif = net.lif
        blocks = self.influence.blocks
        spike_influence: Dict[Tuple[int, int], np.ndarray] = {}

        for state in range(net.depth):
            record = records[state]
            gate = record.derivative[:, :, None, None]
            diagonal = np.arange(net.layers[state].n_out)

            for param in range(state + 1):
                drive = lif.leak * blocks[(state, param)]
                if param == state:
                    drive[:, diagonal, diagonal, :] += record.presynaptic[:, None, :]
                else:
                    drive += np.einsum(
                        "ij,bjpq->bipq",
                        net.layers[state].weights,
                        spike_influence[(state - 1, param)],
                    )

                spike_influence[(state, param)] = gate * drive
                if self._reset_mode is ResetMode.SURROGATE:
                    drive = (1.0 - lif.threshold * gate) * drive
                blocks[(state, param)] = drive

        batch = delta.shape[0]
        last = net.depth - 1
        return [
            np.einsum("bi,bipq->pq", delta, spike_influence[(last, param)]) / batch
            for param in range(net.depth)
        ]


def rtrl_gradients(
    net: Network,
    spikes: np.ndarray,
    deltas: np.ndarray,
    reset_mode: ResetMode = ResetMode.DETACH,
    memory_cap: int = 1 << 24,
) -> GradientRecord:
    """Exact forward-mode gradients, accumulated online without storing the unroll.

    Args:
        net
        spikes: input raster [batch, T, channels]
        deltas: ∂L/∂s^L_t, shape [T, batch, n_out]
        reset_mode
        memory_cap: largest influence tensor (numbers, batch included) allowed
    """
    if spikes.ndim == 2:
        spikes = spikes[None]
    _check_deltas(net, deltas, spikes.shape[1])

    learner = RtrlLearner(net, reset_mode=reset_mode, memory_cap=memory_cap)
    learner.reset(net, spikes.shape[0])
    logger.debug("RTRL influence tensor holds %d numbers per example", learner.influence.num_elements)

    grads = GradientRecord.zeros(net.shapes, dtype=net.dtype)
    states = net.fresh_states(spikes.shape[0])

    for t in range(spikes.shape[1]):
        _, states, records = forward_step(net, spikes[:, t, :], states)
        grads.accumulate(learner.step(net, records, deltas[t]))

    return grads
