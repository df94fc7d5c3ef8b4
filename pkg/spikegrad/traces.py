"""Per-layer eligibility traces of the approximate online algorithms.

Every trace carries a leading batch axis. Updates are pure: they return a new
trace and leave their argument untouched. Layer-gradient helpers return the
batch-mean contribution of one time-step.
"""
import numpy as np

from dataclasses import dataclass
from typing import Optional, Tuple

from spikegrad.lif import LifParams
from spikegrad.state import StepRecord
from spikegrad.type_models import ResetMode


def _per_example(*arrays: np.ndarray) -> int:
    return sum(array[0].size for array in arrays)


def _pre_reset_influence(influence: np.ndarray, presynaptic: np.ndarray, leak: float) -> np.ndarray:
    # A_ij = λ·P_ij + s_pre_j
    return leak * influence + presynaptic[:, None, :]


def _through_reset(
    pre_reset: np.ndarray, derivative: np.ndarray, lif: LifParams, reset_mode: ResetMode
) -> np.ndarray:
    if reset_mode is ResetMode.SURROGATE:
        return (1.0 - lif.threshold * derivative)[:, :, None] * pre_reset
    return pre_reset


@dataclass
class OstlTrace:
    """Diagonal influence P = ∂U_t/∂θ and eligibility E = ∂s_t/∂θ, both [batch, n_out, n_in]."""

    influence: np.ndarray
    eligibility: np.ndarray

    @classmethod
    def zeros(cls, batch: int, n_out: int, n_in: int, dtype: type = np.float64) -> "OstlTrace":
        shape = (batch, n_out, n_in)
        return cls(np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype))

    @property
    def num_elements(self) -> int:
        return _per_example(self.influence, self.eligibility)


def ostl_update(
    trace: OstlTrace,
    record: StepRecord,
    lif: LifParams,
    reset_mode: ResetMode = ResetMode.SURROGATE,
) -> OstlTrace:
    pre_reset = _pre_reset_influence(trace.influence, record.presynaptic, lif.leak)
    return OstlTrace(
        influence=_through_reset(pre_reset, record.derivative, lif, reset_mode),
        eligibility=record.derivative[:, :, None] * pre_reset,
    )


def ostl_layer_grad(delta: np.ndarray, trace: OstlTrace) -> np.ndarray:
    """Σ_b δ_bi·E_bij / batch; cross-layer temporal paths are dropped."""
    return np.einsum("bi,bij->ij", delta, trace.eligibility) / delta.shape[0]


@dataclass
class OtttTrace:
    """Leak-weighted sum â of presynaptic spikes, [batch, n_in]."""

    presynaptic_sum: np.ndarray

    @classmethod
    def zeros(cls, batch: int, n_in: int, dtype: type = np.float64) -> "OtttTrace":
        return cls(np.zeros((batch, n_in), dtype=dtype))

    @property
    def num_elements(self) -> int:
        return _per_example(self.presynaptic_sum)


def ottt_update(trace: OtttTrace, presynaptic: np.ndarray, leak: float) -> OtttTrace:
    return OtttTrace(leak * trace.presynaptic_sum + presynaptic)


def ottt_layer_grad(delta: np.ndarray, derivative: np.ndarray, trace: OtttTrace) -> np.ndarray:
    return np.einsum("bi,bj->ij", delta * derivative, trace.presynaptic_sum) / delta.shape[0]


@dataclass
class OtpeTrace:
    """Diagonal influence P and R̂, the leak-weighted sum of ∂s_t/∂θ, both [batch, n_out, n_in]."""

    influence: np.ndarray
    estimate: np.ndarray

    @classmethod
    def zeros(cls, batch: int, n_out: int, n_in: int, dtype: type = np.float64) -> "OtpeTrace":
        shape = (batch, n_out, n_in)
        return cls(np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype))

    @property
    def num_elements(self) -> int:
        return _per_example(self.influence, self.estimate)


def otpe_update(
    trace: OtpeTrace,
    record: StepRecord,
    lif: LifParams,
    reset_mode: ResetMode = ResetMode.SURROGATE,
    leak: Optional[float] = None,
) -> Tuple[OtpeTrace, np.ndarray]:
    """Advance P with the own-layer recursion and fold this step's E into R̂.

    Args:
        trace
        record
        lif
        reset_mode: convention for the own-layer recursion of P
        leak: weighting of R̂; the downstream membrane leak λ unless given
            (the output leak λ_o when R̂ models the output accumulator)

    Returns:
        trace: updated P and R̂ = leak·R̂ + E
        eligibility: E = ∂s_t/∂θ for this step
    """
    estimate_leak = lif.leak if leak is None else leak
    pre_reset = _pre_reset_influence(trace.influence, record.presynaptic, lif.leak)
    eligibility = record.derivative[:, :, None] * pre_reset

    updated = OtpeTrace(
        influence=_through_reset(pre_reset, record.derivative, lif, reset_mode),
        estimate=estimate_leak * trace.estimate + eligibility,
    )
    return updated, eligibility


def otpe_layer_grad(delta: np.ndarray, trace: OtpeTrace) -> np.ndarray:
    """Σ_b d_bi·R̂_bij / batch, with d already carried through the downstream θ⊤."""
    return np.einsum("bi,bij->ij", delta, trace.estimate) / delta.shape[0]


@dataclass
class SurrogateAverage:
    """Leak-weighted running average ḡ of surrogate values with its normaliser W = Σλ^{T−t}."""

    average: np.ndarray
    weight: float = 0.0

    @classmethod
    def zeros(cls, batch: int, n_out: int, dtype: type = np.float64) -> "SurrogateAverage":
        return cls(np.zeros((batch, n_out), dtype=dtype))

    @property
    def num_elements(self) -> int:
        return _per_example(self.average) + 1


def surrogate_average_update(
    average: SurrogateAverage, derivative: np.ndarray, leak: float
) -> SurrogateAverage:
    weight = leak * average.weight + 1.0
    return SurrogateAverage(
        average=(leak * average.weight * average.average + derivative) / weight,
        weight=weight,
    )


@dataclass
class ApproxOtpeTrace:
    """O(n) state: â and ẑ over inputs, ḡ and W over outputs."""

    presynaptic_sum: np.ndarray
    second_order_sum: np.ndarray
    surrogate: SurrogateAverage

    @classmethod
    def zeros(cls, batch: int, n_out: int, n_in: int, dtype: type = np.float64) -> "ApproxOtpeTrace":
        return cls(
            presynaptic_sum=np.zeros((batch, n_in), dtype=dtype),
            second_order_sum=np.zeros((batch, n_in), dtype=dtype),
            surrogate=SurrogateAverage.zeros(batch, n_out, dtype),
        )

    @property
    def average_surrogate(self) -> np.ndarray:
        return self.surrogate.average

    @property
    def num_elements(self) -> int:
        return _per_example(self.presynaptic_sum, self.second_order_sum) + self.surrogate.num_elements


def approx_otpe_update(
    trace: ApproxOtpeTrace, presynaptic_sum: np.ndarray, derivative: np.ndarray, leak: float
) -> ApproxOtpeTrace:
    """ẑ' = λẑ + â_t, W' = λW + 1, ḡ' = (λWḡ + g_t)/W'.

    Args:
        trace
        presynaptic_sum: â_t, already updated for this step
        derivative: g_t
        leak
    """
    return ApproxOtpeTrace(
        presynaptic_sum=presynaptic_sum,
        second_order_sum=leak * trace.second_order_sum + presynaptic_sum,
        surrogate=surrogate_average_update(trace.surrogate, derivative, leak),
    )


def approx_otpe_layer_grad(delta: np.ndarray, trace: ApproxOtpeTrace) -> np.ndarray:
    """((d_raw ⊙ ḡ) ⊗ ẑ) averaged over the batch; d_raw went through θ⊤ only."""
    return (
        np.einsum("bi,bj->ij", delta * trace.average_surrogate, trace.second_order_sum)
        / delta.shape[0]
    )


@dataclass
class OutputAccumulator:
    """Leaky sum o of output spikes, [batch, n_classes]."""

    total: np.ndarray
    leak: float

    @classmethod
    def zeros(cls, batch: int, n_classes: int, leak: float, dtype: type = np.float64) -> "OutputAccumulator":
        return cls(np.zeros((batch, n_classes), dtype=dtype), leak)


def f_accumulate(accumulator: OutputAccumulator, spikes: np.ndarray) -> OutputAccumulator:
    return OutputAccumulator(accumulator.leak * accumulator.total + spikes, accumulator.leak)
