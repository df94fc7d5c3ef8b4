import numpy as np

from dataclasses import dataclass
from scipy.special import expit
from typing import Tuple, Union

from spikegrad.exception import ConfigurationException
from spikegrad.state import LayerState

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class LifParams:
    """Leaky integrate-and-fire constants shared by the whole network.

    Args:
        leak: per-step membrane decay λ in [0, 1)
        threshold: firing threshold V_th > 0
        slope: fast-sigmoid surrogate slope k > 0
        smooth: replace the Heaviside by sigmoid(k·x) and use its exact derivative
    """

    leak: float = 0.9
    threshold: float = 0.2
    slope: float = 25.0
    smooth: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.leak < 1.0:
            raise ConfigurationException(f"leak must lie in [0, 1), got {self.leak}")
        if self.threshold <= 0.0:
            raise ConfigurationException(
                f"threshold must be positive, got {self.threshold}"
            )
        if self.slope <= 0.0:
            raise ConfigurationException(f"slope must be positive, got {self.slope}")


def surrogate(x: ArrayLike, k: float) -> ArrayLike:
    """Fast-sigmoid derivative 1 / (1 + k|x|)², evaluated at the pre-threshold argument."""
    return 1.0 / (1.0 + k * np.abs(x)) ** 2


def spike(x: np.ndarray, lif: LifParams) -> Tuple[np.ndarray, np.ndarray]:
    """Spike output and the derivative every gradient engine uses in its place.

    Returns:
        spikes: H(x) (x = 0 fires), or sigmoid(k·x) for smooth networks
        derivative: surrogate(x, k), or the exact sigmoid derivative for smooth networks
    """
    if lif.smooth:
        sigma = expit(lif.slope * x)
        return sigma, lif.slope * sigma * (1.0 - sigma)

    return (x >= 0).astype(x.dtype), surrogate(x, lif.slope)


def lif_step(
    state: LayerState, current: np.ndarray, lif: LifParams
) -> Tuple[np.ndarray, LayerState, np.ndarray, np.ndarray]:
    """Advance one layer by one time-step with subtraction reset.

    Args:
        state: membrane and last spikes, shape [..., n_out]
        current: input current θ·s_pre, same shape as the membrane
        lif

    Returns:
        spikes: new spike output
        state: U' = λU + I − V_th·s
        pre_activation: x = λU + I − V_th, the argument of the spike function
        derivative: surrogate (or smooth) derivative at x
    """
    if current.shape != state.membrane.shape:
        raise ConfigurationException(
            f"Input current of shape {current.shape} does not match "
            f"membrane of shape {state.membrane.shape}."
        )

    drive = lif.leak * state.membrane + current
    pre_activation = drive - lif.threshold
    spikes, derivative = spike(pre_activation, lif)

    return spikes, LayerState(drive - lif.threshold * spikes, spikes), pre_activation, derivative
