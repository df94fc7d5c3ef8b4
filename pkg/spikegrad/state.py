import numpy as np

from dataclasses import dataclass
from typing import List, Optional, Tuple

from spikegrad.exception import ConfigurationException


@dataclass
class LayerState:
    """Per-layer neuron state carried across time-steps.

    Args:
        membrane: U, shape [..., n_out]
        spikes: last spike output s, same shape
    """

    membrane: np.ndarray
    spikes: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.membrane, self.spikes], axis=-1)

    @classmethod
    def from_vector(cls, state: np.ndarray) -> "LayerState":
        size = state.shape[-1] // 2
        return cls(membrane=state[..., :size], spikes=state[..., size:])

    @classmethod
    def fresh(
        cls, size: int, batch: Optional[int] = None, dtype: type = np.float64
    ) -> "LayerState":
        shape: Tuple[int, ...] = (size,) if batch is None else (batch, size)
        return cls(membrane=np.zeros(shape, dtype=dtype), spikes=np.zeros(shape, dtype=dtype))


@dataclass
class StepRecord:
    """What any gradient engine needs from one layer at one time-step.

    Args:
        pre_activation: x_t = λU_{t-1} + I_t − V_th
        derivative: surrogate g_t (or the exact smooth derivative)
        spikes: s_t, the layer output
        presynaptic: s_pre_t, the layer input
    """

    pre_activation: np.ndarray
    derivative: np.ndarray
    spikes: np.ndarray
    presynaptic: np.ndarray


@dataclass
class Trajectory:
    """Stored unroll for reverse-mode differentiation.

    Each list holds one array per layer with a leading time axis: [T, batch, n].
    """

    pre_activation: List[np.ndarray]
    derivative: List[np.ndarray]
    spikes: List[np.ndarray]
    presynaptic: List[np.ndarray]

    @property
    def steps(self) -> int:
        return self.spikes[0].shape[0]

    @property
    def outputs(self) -> np.ndarray:
        return self.spikes[-1]

    @property
    def num_elements(self) -> int:
        """Stored numbers per example; grows as O(T·n)."""
        arrays = self.pre_activation + self.derivative + self.spikes + self.presynaptic
        batch = self.spikes[0].shape[1]
        return sum(array.size for array in arrays) // batch

    def record(self, t: int) -> List[StepRecord]:
        return [
            StepRecord(
                pre_activation=self.pre_activation[layer][t],
                derivative=self.derivative[layer][t],
                spikes=self.spikes[layer][t],
                presynaptic=self.presynaptic[layer][t],
            )
            for layer in range(len(self.spikes))
        ]


@dataclass
class SpikeRaster:
    """Binary spike tensor with labels, the universal input format.

    Args:
        spikes: uint8 tensor [batch, T, channels] with entries in {0, 1}
        labels: integer vector [batch]
        num_classes
    """

    spikes: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        if self.spikes.ndim != 3:
            raise ConfigurationException(
                f"Raster spikes must be [batch, T, channels], got shape {self.spikes.shape}"
            )
        if self.labels.shape != (self.spikes.shape[0],):
            raise ConfigurationException("One label per example is required.")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise ConfigurationException(
                f"Labels must lie in [0, {self.num_classes})."
            )

    @property
    def batch(self) -> int:
        return self.spikes.shape[0]

    @property
    def steps(self) -> int:
        return self.spikes.shape[1]

    @property
    def channels(self) -> int:
        return self.spikes.shape[2]

    def subset(self, indices: np.ndarray) -> "SpikeRaster":
        return SpikeRaster(self.spikes[indices], self.labels[indices], self.num_classes)
