import numpy as np

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from spikegrad.exception import ConfigurationException
from spikegrad.gradient import GradientRecord
from spikegrad.type_models import OptimizerConfig


@dataclass
class AdamaxState:
    """Adamax moments per weight matrix.

    Args:
        moments: first moment m
        norms: exponentially weighted infinity norm u
        step: number of updates applied so far
        hyper: η, β₁, β₂, ε
    """

    moments: List[np.ndarray]
    norms: List[np.ndarray]
    step: int
    hyper: OptimizerConfig


def adamax_init(params: Sequence[np.ndarray], hyper: OptimizerConfig) -> AdamaxState:
    return AdamaxState(
        moments=[np.zeros_like(param) for param in params],
        norms=[np.zeros_like(param) for param in params],
        step=0,
        hyper=hyper,
    )


def adamax_step(
    state: AdamaxState, grads: GradientRecord, params: Sequence[np.ndarray]
) -> Tuple[AdamaxState, List[np.ndarray]]:
    """m' = β₁m + (1−β₁)g, u' = max(β₂u, |g|), θ' = θ − η/(1−β₁^t)·m'/(u'+ε).

    Returns:
        state: new moments, step incremented
        params: updated copies, the inputs are left untouched
    """
    if len(grads.layers) != len(params):
        raise ConfigurationException(
            f"Got {len(grads.layers)} gradient matrices for {len(params)} parameters."
        )

    hyper = state.hyper
    step = state.step + 1
    rate = hyper.learning_rate / (1.0 - hyper.beta1**step)

    moments, norms, updated = [], [], []
    for grad, param, moment, norm in zip(grads.layers, params, state.moments, state.norms):
        if grad.shape != param.shape:
            raise ConfigurationException(
                f"Gradient of shape {grad.shape} does not match parameter of shape {param.shape}."
            )
        moment = hyper.beta1 * moment + (1.0 - hyper.beta1) * grad
        norm = np.maximum(hyper.beta2 * norm, np.abs(grad))

        moments.append(moment)
        norms.append(norm)
        updated.append((param - rate * moment / (norm + hyper.eps)).astype(param.dtype, copy=False))

    return AdamaxState(moments, norms, step, hyper), updated
