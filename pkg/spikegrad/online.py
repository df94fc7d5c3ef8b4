import logging

import numpy as np

from typing import Dict, List, Optional, Sequence, Union

from spikegrad.exception import ConfigurationException
from spikegrad.gradient import GradientRecord
from spikegrad.exact import InfluenceTensor
from spikegrad.network import DenseLayer, Network
from spikegrad.state import StepRecord, Trajectory
from spikegrad.traces import (
    ApproxOtpeTrace,
    OstlTrace,
    OtpeTrace,
    OtttTrace,
    SurrogateAverage,
    approx_otpe_layer_grad,
    approx_otpe_update,
    ostl_layer_grad,
    ostl_update,
    otpe_layer_grad,
    otpe_update,
    ottt_layer_grad,
    ottt_update,
    surrogate_average_update,
)
from spikegrad.type_models import Algorithm, ResetMode, SpatialFactor

logger = logging.getLogger(__name__)

Trace = Union[OstlTrace, OtttTrace, OtpeTrace, ApproxOtpeTrace]


def spatial_backward(
    net: Network, delta_out: np.ndarray, factors: Sequence[np.ndarray]
) -> List[np.ndarray]:
    """Carry the output loss derivative down through the current time-step only.

    Args:
        net
        delta_out: loss derivative at the output spikes, [batch, n_out]
        factors: per-layer surrogate factor (g_t or ḡ) gating each layer's input path

    Returns:
        d: per-layer derivative at each layer's spike output, d[-1] = delta_out
    """
    d: List[Optional[np.ndarray]] = [None] * net.depth
    d[-1] = delta_out

    for index in range(net.depth - 1, 0, -1):
        d[index - 1] = (d[index] * factors[index]) @ net.layers[index].weights

    return d  # type: ignore[return-value]


class TraceLearner:
    """Runs one approximate online algorithm step by step.

    Each call to `step` folds one time-step of forward records into the
    per-layer traces, backpropagates the loss derivative within that step, and
    returns the batch-mean gradient contribution of every layer.

    Args:
        algorithm: any trace algorithm (not bptt or rtrl)
        reset_mode: own-layer recursion convention for OSTL and OTPE traces
        spatial_factor: g_t or ḡ in the spatial pass for the OTPE family, ḡ when unset
        output_leak: λ_o of the output accumulator modelled by F-variants
    """

    def __init__(
        self,
        algorithm: Algorithm,
        reset_mode: ResetMode = ResetMode.SURROGATE,
        spatial_factor: Optional[SpatialFactor] = None,
        output_leak: Optional[float] = None,
    ) -> None:
        if not algorithm.is_trace:
            raise ConfigurationException(f"{algorithm.value} is not a trace algorithm.")

        if spatial_factor is None:
            spatial_factor = SpatialFactor.RUNNING_AVERAGE

        self.algorithm = algorithm
        self.reset_mode = reset_mode
        self.spatial_factor = spatial_factor
        self.output_leak = output_leak
        self.traces: List[Trace] = []
        self.averages: Dict[int, SurrogateAverage] = {}

    @property
    def _tracks_average(self) -> bool:
        return (
            self.algorithm in (Algorithm.OTPE, Algorithm.F_OTPE)
            and self.spatial_factor is SpatialFactor.RUNNING_AVERAGE
        )

    def _uses_estimate(self, index: int, depth: int) -> bool:
        """Hidden layers use R̂ (or ẑ, ḡ); the output layer only in F-variants."""
        return index < depth - 1 or self.algorithm.is_f_variant

    def _estimate_leak(self, net: Network, index: int) -> float:
        if self.algorithm.is_f_variant and index == net.depth - 1:
            return net.lif.leak if self.output_leak is None else self.output_leak
        return net.lif.leak

    def reset(self, net: Network, batch: int) -> None:
        """Zero every trace; called at example boundaries."""
        dtype = net.dtype
        self.traces = []
        self.averages = {}

        for index, layer in enumerate(net.layers):
            match self.algorithm:
                case Algorithm.OSTL:
                    trace: Trace = OstlTrace.zeros(batch, layer.n_out, layer.n_in, dtype)
                case Algorithm.OTTT:
                    trace = OtttTrace.zeros(batch, layer.n_in, dtype)
                case Algorithm.OTPE | Algorithm.F_OTPE:
                    trace = OtpeTrace.zeros(batch, layer.n_out, layer.n_in, dtype)
                case Algorithm.APPROX_OTPE | Algorithm.F_APPROX_OTPE:
                    trace = ApproxOtpeTrace.zeros(batch, layer.n_out, layer.n_in, dtype)
                case _:
                    raise ConfigurationException(f"No trace for {self.algorithm.value}.")
            self.traces.append(trace)

            if self._tracks_average and self._uses_estimate(index, net.depth):
                self.averages[index] = SurrogateAverage.zeros(batch, layer.n_out, dtype)

    def trace_elements(self) -> List[int]:
        """Persistent numbers per example held for each layer."""
        return [
            trace.num_elements
            + (self.averages[index].num_elements if index in self.averages else 0)
            for index, trace in enumerate(self.traces)
        ]

    def step(
        self, net: Network, records: List[StepRecord], delta: np.ndarray
    ) -> List[np.ndarray]:
        """Gradient contribution of one time-step.

        Args:
            net: current weights
            records: forward_step records for this step
            delta: loss derivative at the output spikes (at the output
                accumulator for F-variants), [batch, n_out]
        """
        if not self.traces:
            raise ConfigurationException("TraceLearner.step called before reset.")

        match self.algorithm:
            case Algorithm.OSTL:
                return self._step_ostl(net, records, delta)
            case Algorithm.OTTT:
                return self._step_ottt(net, records, delta)
            case Algorithm.OTPE | Algorithm.F_OTPE:
                return self._step_otpe(net, records, delta)
            case _:
                return self._step_approx_otpe(net, records, delta)

    def _step_ostl(self, net: Network, records: List[StepRecord], delta: np.ndarray) -> List[np.ndarray]:
        self.traces = [
            ostl_update(trace, record, net.lif, self.reset_mode)
            for trace, record in zip(self.traces, records)
        ]
        d = spatial_backward(net, delta, [record.derivative for record in records])
        return [ostl_layer_grad(d[index], trace) for index, trace in enumerate(self.traces)]

    def _step_ottt(self, net: Network, records: List[StepRecord], delta: np.ndarray) -> List[np.ndarray]:
        self.traces = [
            ottt_update(trace, record.presynaptic, net.lif.leak)
            for trace, record in zip(self.traces, records)
        ]
        d = spatial_backward(net, delta, [record.derivative for record in records])
        return [
            ottt_layer_grad(d[index], records[index].derivative, trace)
            for index, trace in enumerate(self.traces)
        ]

    def _step_otpe(self, net: Network, records: List[StepRecord], delta: np.ndarray) -> List[np.ndarray]:
        eligibilities = []
        factors = []

        for index, record in enumerate(records):
            trace, eligibility = otpe_update(
                self.traces[index],
                record,
                net.lif,
                self.reset_mode,
                leak=self._estimate_leak(net, index),
            )
            self.traces[index] = trace
            eligibilities.append(eligibility)

            factor = record.derivative
            if index in self.averages:
                self.averages[index] = surrogate_average_update(
                    self.averages[index], record.derivative, self._estimate_leak(net, index)
                )
                factor = self.averages[index].average
            factors.append(factor)

        d = spatial_backward(net, delta, factors)

        contributions = []
        for index, trace in enumerate(self.traces):
            if self._uses_estimate(index, net.depth):
                contributions.append(otpe_layer_grad(d[index], trace))
            else:
                contributions.append(
                    np.einsum("bi,bij->ij", d[index], eligibilities[index]) / delta.shape[0]
                )
        return contributions

    def _step_approx_otpe(
        self, net: Network, records: List[StepRecord], delta: np.ndarray
    ) -> List[np.ndarray]:
        factors = []

        for index, record in enumerate(records):
            trace = self.traces[index]
            presynaptic_sum = ottt_update(
                OtttTrace(trace.presynaptic_sum), record.presynaptic, net.lif.leak
            ).presynaptic_sum
            trace = approx_otpe_update(
                trace, presynaptic_sum, record.derivative, self._estimate_leak(net, index)
            )
            self.traces[index] = trace

            running = self.spatial_factor is SpatialFactor.RUNNING_AVERAGE
            if running and self._uses_estimate(index, net.depth):
                factors.append(trace.average_surrogate)
            else:
                factors.append(record.derivative)

        d = spatial_backward(net, delta, factors)

        contributions = []
        for index, trace in enumerate(self.traces):
            if self._uses_estimate(index, net.depth):
                contributions.append(approx_otpe_layer_grad(d[index], trace))
            else:
                contributions.append(
                    ottt_layer_grad(
                        d[index], records[index].derivative, OtttTrace(trace.presynaptic_sum)
                    )
                )
        return contributions


def trace_gradients(
    net: Network, trajectory: Trajectory, deltas: np.ndarray, learner: TraceLearner
) -> GradientRecord:
    """Offline use of an online algorithm: replay a stored unroll step by step and sum.

    Args:
        net
        trajectory: from forward_sequence
        deltas: per-step loss derivative, [T, batch, n_out]
        learner: reset here, so its traces start from zero
    """
    if deltas.shape[0] != trajectory.steps:
        raise ConfigurationException(
            f"Got loss derivatives for {deltas.shape[0]} steps, trajectory has {trajectory.steps}."
        )

    learner.reset(net, deltas.shape[1])
    grads = GradientRecord.zeros(net.shapes, dtype=net.dtype)

    for t in range(trajectory.steps):
        grads.accumulate(learner.step(net, trajectory.record(t), deltas[t]))

    return grads


def persistent_elements(
    algorithm: Algorithm,
    widths: Sequence[int],
    steps: int = 1,
    spatial_factor: Optional[SpatialFactor] = None,
) -> List[int]:
    """Per-layer numbers each example keeps between time-steps.

    Reverse mode keeps its whole stored unroll, so its count grows with `steps`;
    every other algorithm's count is independent of sequence length.

    Args:
        algorithm
        widths: [n_in, hidden..., n_out]
        steps: sequence length, only used for bptt
        spatial_factor: as passed to TraceLearner
    """
    pairs = list(zip(widths[:-1], widths[1:]))

    match algorithm:
        case Algorithm.BPTT:
            # x_t, g_t and s_t per neuron plus the layer input, every step
            return [steps * (3 * n_out + n_in) for n_in, n_out in pairs]
        case Algorithm.RTRL:
            return InfluenceTensor.layer_elements(widths)
        case _:
            net = Network([DenseLayer(np.zeros((n_out, n_in))) for n_in, n_out in pairs])
            learner = TraceLearner(algorithm, spatial_factor=spatial_factor)
            learner.reset(net, batch=1)
            return learner.trace_elements()
