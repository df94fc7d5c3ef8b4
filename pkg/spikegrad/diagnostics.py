"""Gradient-fidelity and loss-landscape diagnostics."""
import logging
import re

import numpy as np
import pandas as pd

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from spikegrad.exception import ConfigurationException
from spikegrad.gradient import GradientRecord
from spikegrad.losses import accuracy, loss_and_delta
from spikegrad.network import Network, forward_outputs
from spikegrad.online import persistent_elements
from spikegrad.state import SpikeRaster
from spikegrad.type_models import Algorithm, LossSpec, SpatialFactor

logger = logging.getLogger(__name__)

NUMBERED_CHECKPOINT = re.compile(r"ckpt_(\d+)\.ckpt")


class CosineScope(str, Enum):
    PER_LAYER = "per_layer"
    MODEL_WIDE = "model_wide"


@dataclass
class CosineReport:
    """Model-wide and per-layer cosine similarity of two gradient records.

    Args:
        model
        layers
        zero_norm: True when any compared operand had zero norm; those
            similarities are reported as 0
    """

    model: float
    layers: List[float]
    zero_norm: bool


def _cosine(a: np.ndarray, b: np.ndarray) -> Tuple[float, bool]:
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0.0:
        return 0.0, True
    return float(np.clip(np.dot(a, b) / norm, -1.0, 1.0)), False


def cosine_similarity(
    a: GradientRecord, b: GradientRecord, scope: CosineScope = CosineScope.MODEL_WIDE
) -> Union[float, List[float]]:
    """Cosine of the flattened gradients over the whole model or each layer."""
    report = compare_records(a, b)
    return report.layers if scope is CosineScope.PER_LAYER else report.model


def compare_records(a: GradientRecord, b: GradientRecord) -> CosineReport:
    if a.shapes != b.shapes:
        raise ConfigurationException(f"Cannot compare gradients of shapes {a.shapes} and {b.shapes}.")

    model, zero_norm = _cosine(a.vector, b.vector)
    layers = []
    for left, right in zip(a.flat_layers, b.flat_layers):
        value, flagged = _cosine(left, right)
        layers.append(value)
        zero_norm = zero_norm or flagged

    if zero_norm:
        logger.warning("Zero-norm gradient in cosine comparison; similarity reported as 0.")

    return CosineReport(model=model, layers=layers, zero_norm=zero_norm)


def evaluate(net: Network, raster: SpikeRaster, loss: LossSpec) -> Tuple[float, float]:
    """Loss and accuracy (argmax of time-summed output spikes) on a held-out raster."""
    outputs = forward_outputs(net, raster.spikes)
    value, _ = loss_and_delta(loss, outputs, raster.labels)
    return value, accuracy(outputs, raster.labels)


@dataclass
class LandscapeSpec:
    """Plane θ* + αδ + βν through parameter space.

    Args:
        center: network at θ*
        delta: δ, flattened initial − center
        nu: ν, flattened final − center
        alphas
        betas
        evaluation: raster the loss is measured on
        loss
        interval: minibatches between the run checkpoints sampled for a trajectory
    """

    center: Network
    delta: np.ndarray
    nu: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    evaluation: SpikeRaster
    loss: LossSpec
    interval: int = 200

    def __post_init__(self) -> None:
        size = self.center.vector.size
        if self.delta.shape != (size,) or self.nu.shape != (size,):
            raise ConfigurationException("Landscape directions must match the center's parameters.")
        if not np.any(self.delta) or not np.any(self.nu):
            raise ConfigurationException("Landscape directions must be nonzero.")
        if np.linalg.matrix_rank(np.stack([self.delta, self.nu])) < 2:
            raise ConfigurationException("Landscape directions must be linearly independent.")
        if self.interval < 1:
            raise ConfigurationException(f"Trajectory interval must be positive, got {self.interval}")

    @classmethod
    def from_weights(
        cls,
        center: Network,
        initial: Sequence[np.ndarray],
        final: Sequence[np.ndarray],
        evaluation: SpikeRaster,
        loss: LossSpec,
        points: int = 21,
        extent: Tuple[float, float] = (-1.0, 1.0),
        interval: int = 200,
    ) -> "LandscapeSpec":
        """Directions toward the initial and the final model; grid of `points` per axis over `extent`."""
        grid = np.linspace(extent[0], extent[1], points)
        return cls(
            center=center,
            delta=center.with_weights(initial).vector - center.vector,
            nu=center.with_weights(final).vector - center.vector,
            alphas=grid,
            betas=grid.copy(),
            evaluation=evaluation,
            loss=loss,
            interval=interval,
        )

    @property
    def directions(self) -> np.ndarray:
        """[parameters, 2] matrix with columns δ and ν."""
        return np.stack([self.delta, self.nu], axis=1)

    def point(self, alpha: float, beta: float) -> Network:
        return self.center.from_vector(self.center.vector + alpha * self.delta + beta * self.nu)

    def trajectory_checkpoints(self, run: Path) -> List[Tuple[int, Path]]:
        """Numbered checkpoints of a run directory taken every `interval` minibatches, in training order."""
        sampled = []
        for path in run.glob("ckpt_*.ckpt"):
            match = NUMBERED_CHECKPOINT.fullmatch(path.name)
            if match and int(match.group(1)) % self.interval == 0:
                sampled.append((int(match.group(1)), path))
        return sorted(sampled)


def landscape_grid(spec: LandscapeSpec) -> np.ndarray:
    """Loss at every (α, β) of the grid, [len(alphas), len(betas)]."""
    losses = np.empty((spec.alphas.size, spec.betas.size))

    for i, alpha in enumerate(spec.alphas):
        for j, beta in enumerate(spec.betas):
            losses[i, j], _ = evaluate(spec.point(alpha, beta), spec.evaluation, spec.loss)

    if not np.all(np.isfinite(losses)):
        logger.warning("Landscape grid holds non-finite losses.")
    return losses


def landscape_frame(spec: LandscapeSpec, losses: np.ndarray) -> pd.DataFrame:
    alphas, betas = np.meshgrid(spec.alphas, spec.betas, indexing="ij")
    return pd.DataFrame({"alpha": alphas.ravel(), "beta": betas.ravel(), "loss": losses.ravel()})


@dataclass
class ProjectedPoint:
    alpha: float
    beta: float
    residual: float


def trajectory_project(checkpoints: Sequence[Sequence[np.ndarray]], spec: LandscapeSpec) -> List[ProjectedPoint]:
    """Least-squares coordinates of each checkpoint in span{δ, ν}, with residual norms."""
    directions = spec.directions
    center = spec.center.vector
    points = []

    for weights in checkpoints:
        offset = spec.center.with_weights(weights).vector - center
        (alpha, beta), *_ = np.linalg.lstsq(directions, offset, rcond=None)
        residual = float(np.linalg.norm(directions @ np.array([alpha, beta]) - offset))
        points.append(ProjectedPoint(float(alpha), float(beta), residual))

    return points


def memory_report(
    widths: Sequence[int],
    steps: int,
    algorithms: Optional[Sequence[Algorithm]] = None,
    spatial_factor: Optional[SpatialFactor] = None,
) -> pd.DataFrame:
    """Per-layer persistent elements per example for each algorithm, one row per (algorithm, layer)."""
    algorithms = list(Algorithm) if algorithms is None else algorithms
    rows = []

    for algorithm in algorithms:
        for layer, elements in enumerate(persistent_elements(algorithm, widths, steps, spatial_factor)):
            rows.append(
                {
                    "algorithm": algorithm.value,
                    "layer": layer,
                    "n_in": widths[layer],
                    "n_out": widths[layer + 1],
                    "elements": elements,
                }
            )

    return pd.DataFrame(rows, columns=["algorithm", "layer", "n_in", "n_out", "elements"])
