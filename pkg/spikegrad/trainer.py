"""Offline and online training loops and the side-by-side gradient comparison."""
import logging

import numpy as np

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from spikegrad.checkpoint import save_checkpoint
from spikegrad.data import BatchSource
from spikegrad.diagnostics import CosineReport, compare_records, evaluate
from spikegrad.exact import InfluenceTensor, RtrlLearner, bptt_gradients, rtrl_gradients
from spikegrad.exception import ConfigurationException, ResourceCapException, SpikegradException
from spikegrad.gradient import GradientRecord
from spikegrad.lif import LifParams
from spikegrad.losses import loss_and_delta, step_loss_and_delta
from spikegrad.network import Network, forward_sequence, forward_step, init_network
from spikegrad.online import TraceLearner, persistent_elements, trace_gradients
from spikegrad.optimizer import AdamaxState, adamax_init, adamax_step
from spikegrad.runlog import CsvWriter, RunLog, RunRecord, RunSummary, cosine_columns, write_summary
from spikegrad.state import SpikeRaster, Trajectory
from spikegrad.traces import OutputAccumulator
from spikegrad.type_models import (
    AlgorithmOptions,
    Algorithm,
    ExperimentConfig,
    LossSpec,
    Mode,
    OnlineUpdate,
)

logger = logging.getLogger(__name__)

Learner = Union[TraceLearner, RtrlLearner]


@dataclass
class GradientStep:
    """Everything one offline minibatch produces.

    Args:
        loss: batch-mean training loss
        grads: batch-mean gradient of the running algorithm
        trajectory: stored unroll the gradient was computed on
        deltas: loss derivative at the output spikes, [T, batch, n_out]
    """

    loss: float
    grads: GradientRecord
    trajectory: Trajectory
    deltas: np.ndarray


@dataclass
class TrainingResult:
    log: RunLog
    summary: RunSummary
    net: Network
    best_weights: List[np.ndarray]


def network_widths(config: ExperimentConfig, source: BatchSource) -> List[int]:
    return [source.channels, *config.hidden_widths, source.num_classes]


def build_network(config: ExperimentConfig, source: BatchSource) -> Network:
    lif = LifParams(
        leak=config.model.leak,
        threshold=config.model.threshold,
        slope=config.model.slope,
    )
    return init_network(
        network_widths(config, source), lif, config.seed, dtype=np.dtype(config.model.dtype).type
    )


def resolve_loss(config: ExperimentConfig, source: BatchSource) -> LossSpec:
    """Loss section with the class count taken from the data."""
    return config.loss.model_copy(update={"num_classes": source.num_classes})


def check_rtrl_cap(widths: Sequence[int], batch: int, options: AlgorithmOptions) -> None:
    required = InfluenceTensor.elements_for(widths) * batch
    if required > options.rtrl_memory_cap:
        raise ResourceCapException(
            f"RTRL influence tensor needs {required} numbers for widths {list(widths)} "
            f"and batch {batch}, above the memory cap of {options.rtrl_memory_cap}."
        )


def make_learner(net: Network, algorithm: Algorithm, options: AlgorithmOptions, loss: LossSpec) -> Learner:
    if algorithm is Algorithm.RTRL:
        return RtrlLearner(net, reset_mode=options.reset_mode, memory_cap=options.rtrl_memory_cap)
    return TraceLearner(
        algorithm,
        reset_mode=options.reset_mode,
        spatial_factor=options.spatial_factor,
        output_leak=loss.output_leak if algorithm.is_f_variant else None,
    )


def compute_gradients(
    net: Network,
    raster: SpikeRaster,
    loss: LossSpec,
    algorithm: Algorithm,
    options: AlgorithmOptions,
) -> GradientStep:
    """Offline minibatch gradient: full unroll, then the algorithm's accumulation over all steps."""
    trajectory = forward_sequence(net, raster.spikes)
    value, deltas = loss_and_delta(loss, trajectory.outputs, raster.labels)

    match algorithm:
        case Algorithm.BPTT:
            grads = bptt_gradients(net, trajectory, deltas, options.reset_mode)
        case Algorithm.RTRL:
            grads = rtrl_gradients(
                net, raster.spikes, deltas, options.reset_mode, options.rtrl_memory_cap
            )
        case _:
            if algorithm.is_f_variant:
                raise ConfigurationException(f"Algorithm {algorithm.value} is online-only.")
            grads = trace_gradients(net, trajectory, deltas, make_learner(net, algorithm, options, loss))

    return GradientStep(value, grads, trajectory, deltas)


class _Trainer:
    """State shared by both loops: parameters, optimizer, evaluation and checkpoints."""

    def __init__(self, config: ExperimentConfig, source: BatchSource, directory: Optional[Path]) -> None:
        self.config = config
        self.source = source
        self.directory = directory
        self.loss = resolve_loss(config, source)
        self.net = build_network(config, source)
        self.optimizer: AdamaxState = adamax_init(self.net.weights, config.optimizer)
        self.log = RunLog(self.net.depth, directory)
        self.best_accuracy = -1.0
        self.best_weights = [w.copy() for w in self.net.weights]
        self.trace_elements = sum(
            persistent_elements(
                config.algorithm,
                self.net.widths,
                source.steps,
                config.algorithm_options.spatial_factor,
            )
        )

        if config.algorithm is Algorithm.RTRL:
            check_rtrl_cap(self.net.widths, config.schedule.batch_size, config.algorithm_options)

        self.checkpoint("ckpt_000000.ckpt")

    def checkpoint(self, name: str) -> None:
        if self.directory is not None:
            save_checkpoint(self.directory / name, self.net.weights)

    def apply(self, grads: GradientRecord, minibatch: int) -> None:
        if not grads.is_finite():
            raise SpikegradException(f"Non-finite gradient at minibatch {minibatch}.")
        self.optimizer, weights = adamax_step(self.optimizer, grads, self.net.weights)
        self.net = self.net.with_weights(weights)

    def finish_minibatch(
        self, minibatch: int, train_loss: float, cosine: Optional[CosineReport] = None
    ) -> None:
        schedule = self.config.schedule
        valid_accuracy = None

        if (minibatch + 1) % schedule.validation_every == 0 or minibatch + 1 == schedule.minibatches:
            _, valid_accuracy = evaluate(self.net, self.source.validation(), self.loss)
            logger.info(
                "minibatch %d: train loss %.4f, validation accuracy %.4f",
                minibatch,
                train_loss,
                valid_accuracy,
            )
            if valid_accuracy > self.best_accuracy:
                self.best_accuracy = valid_accuracy
                self.best_weights = [w.copy() for w in self.net.weights]
                self.checkpoint("best.ckpt")

        if (minibatch + 1) % schedule.checkpoint_every == 0:
            self.checkpoint(f"ckpt_{minibatch + 1:06d}.ckpt")
            logger.info("Checkpoint after %d minibatches", minibatch + 1)

        self.log.append(
            RunRecord(
                minibatch=minibatch,
                train_loss=train_loss,
                valid_accuracy=valid_accuracy,
                cos_model=None if cosine is None else cosine.model,
                cos_layers=[] if cosine is None else cosine.layers,
                cos_zero_norm=None if cosine is None else cosine.zero_norm,
                trace_elements=self.trace_elements,
            )
        )

    def finish(self) -> TrainingResult:
        self.checkpoint("final.ckpt")
        self.log.close()

        summary = self.log.summarize(self.config.schedule.summary_window)
        test = self.source.test()
        if test is not None:
            _, summary.test_accuracy = evaluate(self.net.with_weights(self.best_weights), test, self.loss)
        summary.clamped_rate = self.source.clamped

        if self.directory is not None:
            write_summary(self.directory / "summary.json", summary)

        return TrainingResult(self.log, summary, self.net, self.best_weights)


def train_offline(
    config: ExperimentConfig, source: BatchSource, directory: Optional[Path] = None
) -> TrainingResult:
    """One optimizer update per minibatch from gradients accumulated over the whole unroll.

    With `diagnostics.cosine_vs_bptt` BPTT runs on the same unroll under
    `algorithm_options.comparison_reset_mode` and is compared, never applied.
    """
    if config.mode is not Mode.OFFLINE:
        raise ConfigurationException("train_offline needs mode offline.")

    trainer = _Trainer(config, source, directory)
    options = config.algorithm_options

    for minibatch in range(config.schedule.minibatches):
        raster = source.batch(minibatch, config.schedule.batch_size)
        step = compute_gradients(trainer.net, raster, trainer.loss, config.algorithm, options)

        cosine = None
        if config.diagnostics.cosine_vs_bptt:
            reference = bptt_gradients(
                trainer.net, step.trajectory, step.deltas, options.comparison_reset_mode
            )
            cosine = compare_records(step.grads, reference)

        trainer.apply(step.grads, minibatch)
        trainer.finish_minibatch(minibatch, step.loss, cosine)

    return trainer.finish()


def train_online(
    config: ExperimentConfig, source: BatchSource, directory: Optional[Path] = None
) -> TrainingResult:
    """Instantaneous-loss updates at every time-step (or once per example).

    Traces, neuron states and the output accumulator restart with every minibatch.
    """
    if config.mode is not Mode.ONLINE:
        raise ConfigurationException("train_online needs mode online.")
    if config.algorithm is Algorithm.BPTT:
        raise ConfigurationException("Algorithm bptt cannot run online.")
    if config.diagnostics.cosine_vs_bptt:
        logger.warning("cosine_vs_bptt is only recorded in offline mode; ignoring it.")

    trainer = _Trainer(config, source, directory)
    per_step = config.schedule.online_update is OnlineUpdate.STEP

    for minibatch in range(config.schedule.minibatches):
        raster = source.batch(minibatch, config.schedule.batch_size)
        learner = make_learner(trainer.net, config.algorithm, config.algorithm_options, trainer.loss)
        learner.reset(trainer.net, raster.batch)

        states = trainer.net.fresh_states(raster.batch)
        accumulator: Optional[OutputAccumulator] = None
        pending = GradientRecord.zeros(trainer.net.shapes, dtype=trainer.net.dtype)
        train_loss = 0.0

        for t in range(raster.steps):
            outputs, states, records = forward_step(trainer.net, raster.spikes[:, t, :], states)
            value, delta, accumulator = step_loss_and_delta(
                trainer.loss, outputs, raster.labels, accumulator
            )
            train_loss += value

            contributions = learner.step(trainer.net, records, delta)
            if per_step:
                trainer.apply(GradientRecord(contributions), minibatch)
            else:
                pending.accumulate(contributions)

        if not per_step:
            trainer.apply(pending, minibatch)

        trainer.finish_minibatch(minibatch, train_loss)

    return trainer.finish()


def train(config: ExperimentConfig, source: BatchSource, directory: Optional[Path] = None) -> TrainingResult:
    if config.mode is Mode.ONLINE:
        return train_online(config, source, directory)
    return train_offline(config, source, directory)


def compare_gradients(
    config: ExperimentConfig,
    source: BatchSource,
    directory: Optional[Path] = None,
    algorithms: Optional[Sequence[Algorithm]] = None,
) -> List[Tuple[int, Algorithm, CosineReport]]:
    """Cosine of every requested algorithm against BPTT along BPTT's own training trajectory.

    All algorithms see identical weights and minibatches. BPTT uses
    `algorithm_options.comparison_reset_mode`; the others use `reset_mode`.
    """
    algorithms = list(config.diagnostics.compare_algorithms if algorithms is None else algorithms)
    for algorithm in algorithms:
        if algorithm.is_f_variant:
            raise ConfigurationException(
                f"Algorithm {algorithm.value} is online-only and cannot be compared offline."
            )

    options = config.algorithm_options
    reference_options = options.model_copy(update={"reset_mode": options.comparison_reset_mode})
    loss = resolve_loss(config, source)
    net = build_network(config, source)
    if Algorithm.RTRL in algorithms:
        check_rtrl_cap(net.widths, config.schedule.batch_size, options)

    optimizer = adamax_init(net.weights, config.optimizer)
    writer = None
    if directory is not None:
        writer = CsvWriter(
            directory / "compare.csv",
            ["minibatch", "algorithm", "cos_model", *cosine_columns(net.depth), "cos_zero_norm"],
        )

    results = []
    try:
        for minibatch in range(config.schedule.minibatches):
            raster = source.batch(minibatch, config.schedule.batch_size)
            step = compute_gradients(net, raster, loss, Algorithm.BPTT, reference_options)

            rows = []
            for algorithm in algorithms:
                if algorithm is Algorithm.RTRL:
                    grads = rtrl_gradients(
                        net, raster.spikes, step.deltas, options.reset_mode, options.rtrl_memory_cap
                    )
                elif algorithm is Algorithm.BPTT:
                    grads = bptt_gradients(net, step.trajectory, step.deltas, options.reset_mode)
                else:
                    learner = make_learner(net, algorithm, options, loss)
                    grads = trace_gradients(net, step.trajectory, step.deltas, learner)

                report = compare_records(grads, step.grads)
                results.append((minibatch, algorithm, report))
                row = {
                    "minibatch": minibatch,
                    "algorithm": algorithm.value,
                    "cos_model": report.model,
                    "cos_zero_norm": int(report.zero_norm),
                }
                row.update(dict(zip(cosine_columns(net.depth), report.layers)))
                rows.append(row)

            if writer is not None:
                writer.write_rows(rows)

            if not step.grads.is_finite():
                raise SpikegradException(f"Non-finite BPTT gradient at minibatch {minibatch}.")
            optimizer, weights = adamax_step(optimizer, step.grads, net.weights)
            net = net.with_weights(weights)
            logger.debug("Compared %d algorithms at minibatch %d", len(algorithms), minibatch)
    finally:
        if writer is not None:
            writer.close()

    return results
