"""Softmax cross-entropy losses on output spikes and their derivatives.

Derivatives are per example (not divided by the batch size); the gradient
engines take the batch mean themselves.
"""
import numpy as np

from scipy.special import log_softmax, softmax
from typing import Optional, Tuple

from spikegrad.exception import ConfigurationException
from spikegrad.traces import OutputAccumulator, f_accumulate
from spikegrad.type_models import LossKind, LossSpec


def _check_labels(spec: LossSpec, logits: np.ndarray, labels: np.ndarray) -> None:
    if logits.shape[-1] != spec.num_classes:
        raise ConfigurationException(
            f"Loss expects {spec.num_classes} classes, the network emits {logits.shape[-1]}."
        )
    if labels.shape != logits.shape[-2:-1]:
        raise ConfigurationException("One label per example is required.")
    if labels.size and (labels.min() < 0 or labels.max() >= spec.num_classes):
        raise ConfigurationException(f"Labels must lie in [0, {spec.num_classes}).")


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-example softmax cross-entropy and its derivative softmax − onehot.

    Args:
        logits: [..., batch, classes]
        labels: [batch]
    """
    onehot = np.eye(logits.shape[-1], dtype=logits.dtype)[labels]
    log_probs = log_softmax(logits, axis=-1)
    loss = -np.sum(onehot * log_probs, axis=-1)
    return loss, softmax(logits, axis=-1) - onehot


def leaky_sum(outputs: np.ndarray, leak: float) -> np.ndarray:
    """o_t = λ_o·o_{t−1} + s_t for every t, [T, batch, classes]."""
    totals = np.empty_like(outputs)
    running = np.zeros_like(outputs[0])

    for t in range(outputs.shape[0]):
        running = leak * running + outputs[t]
        totals[t] = running

    return totals


def loss_and_delta(spec: LossSpec, outputs: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Loss of a whole unroll and its derivative at the output spikes of every step.

    Args:
        spec
        outputs: output spikes [T, batch, classes]
        labels: [batch]

    Returns:
        loss: batch mean (summed over steps for the per-step kinds)
        deltas: ∂L/∂s^L_t, [T, batch, classes]
    """
    _check_labels(spec, outputs, labels)
    steps = outputs.shape[0]

    match spec.kind:
        case LossKind.PER_STEP_CE:
            loss, deltas = cross_entropy(outputs, labels)
            return float(loss.sum(axis=0).mean()), deltas

        case LossKind.SEQUENCE_CE_ON_SUM:
            total = leaky_sum(outputs, spec.accumulator_leak)[-1]
            loss, derivative = cross_entropy(total, labels)
            # ∂o_T/∂s_t = λ_o^{T−t}
            weights = spec.accumulator_leak ** np.arange(steps - 1, -1, -1, dtype=outputs.dtype)
            return float(loss.mean()), weights[:, None, None] * derivative[None]

        case LossKind.LEAKY_SUM_CE:
            loss, derivatives = cross_entropy(leaky_sum(outputs, spec.accumulator_leak), labels)
            # δ_t = Σ_{τ≥t} λ_o^{τ−t} c_τ, accumulated backwards
            deltas = np.empty_like(derivatives)
            running = np.zeros_like(derivatives[0])
            for t in reversed(range(steps)):
                running = spec.accumulator_leak * running + derivatives[t]
                deltas[t] = running
            return float(loss.sum(axis=0).mean()), deltas

        case _:
            raise ConfigurationException(f"Unknown loss kind {spec.kind}.")


def step_loss_and_delta(
    spec: LossSpec,
    spikes: np.ndarray,
    labels: np.ndarray,
    accumulator: Optional[OutputAccumulator] = None,
) -> Tuple[float, np.ndarray, Optional[OutputAccumulator]]:
    """Instantaneous loss of one online step.

    Args:
        spec: per_step_ce or leaky_sum_ce
        spikes: output spikes of this step, [batch, classes]
        labels
        accumulator: leaky output sum before this step, for leaky_sum_ce

    Returns:
        loss: batch mean of this step's loss
        delta: derivative at the output spikes, which for leaky_sum_ce is the
            derivative at the accumulator, softmax(o_t) − onehot
        accumulator: updated accumulator, or None
    """
    _check_labels(spec, spikes, labels)

    match spec.kind:
        case LossKind.PER_STEP_CE:
            loss, delta = cross_entropy(spikes, labels)
            return float(loss.mean()), delta, accumulator

        case LossKind.LEAKY_SUM_CE:
            if accumulator is None:
                accumulator = OutputAccumulator.zeros(
                    spikes.shape[0], spikes.shape[1], spec.accumulator_leak, spikes.dtype
                )
            accumulator = f_accumulate(accumulator, spikes)
            loss, delta = cross_entropy(accumulator.total, labels)
            return float(loss.mean()), delta, accumulator

        case _:
            raise ConfigurationException(
                f"Loss kind {spec.kind.value} has no instantaneous form for online training."
            )


def predictions(outputs: np.ndarray) -> np.ndarray:
    """Class with the most output spikes over the whole unroll; ties go to the lower index."""
    return np.argmax(outputs.sum(axis=0), axis=-1)


def accuracy(outputs: np.ndarray, labels: np.ndarray) -> float:
    if labels.size == 0:
        return 0.0
    return float(np.mean(predictions(outputs) == labels))
