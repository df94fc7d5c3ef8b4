import numpy as np

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from spikegrad.util import flatten_arrays


@dataclass
class GradientRecord:
    """Per-layer ∂L/∂θ for one minibatch, shaped like the weights."""

    layers: List[np.ndarray]

    @classmethod
    def zeros(cls, shapes: Sequence[Tuple[int, int]], dtype: type = np.float64) -> "GradientRecord":
        return cls([np.zeros(shape, dtype=dtype) for shape in shapes])

    @property
    def shapes(self) -> List[Tuple[int, ...]]:
        return [layer.shape for layer in self.layers]

    @property
    def vector(self) -> np.ndarray:
        return flatten_arrays(self.layers)

    @property
    def flat_layers(self) -> List[np.ndarray]:
        return [np.ravel(layer) for layer in self.layers]

    def accumulate(self, contributions: Sequence[np.ndarray]) -> None:
        for layer, contribution in zip(self.layers, contributions):
            layer += contribution

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(layer)) for layer in self.layers)

    def __mul__(self, scale: float) -> "GradientRecord":
        return GradientRecord([scale * layer for layer in self.layers])
