"""Random smooth manifold classification data, encoded as spike rasters.

Every class owns one manifold, a smooth map from the unit cube [0,1]^D into
[0,1]^N. An example is the image of a uniformly drawn intrinsic point, turned
into spikes either by timing (one spike per neuron) or by rate (a count per
neuron at shuffled time-steps).
"""
import logging

import numpy as np

from dataclasses import dataclass
from typing import List, Optional, Tuple

from spikegrad.state import SpikeRaster
from spikegrad.type_models import RandmanSpec
from spikegrad.util import seeded_generator

logger = logging.getLogger(__name__)

# Stream tags keep manifold, batch and held-out draws independent for one seed.
MANIFOLD_STREAM = 0
BATCH_STREAM = 1
VALID_STREAM = 2
TEST_STREAM = 3
DATASET_STREAM = 4

NORMALISATION_SAMPLES = 4096


@dataclass
class RandmanManifold:
    """Truncated Fourier series per embedding coordinate, summed over intrinsic dimensions.

    Args:
        amplitudes: [N, D, K], uniform draws scaled by k^{−α}
        phases: [N, D, K], uniform in [0, 1)
        low: per-coordinate minimum over the normalisation sample
        span: per-coordinate max − min over the same sample
    """

    amplitudes: np.ndarray
    phases: np.ndarray
    low: np.ndarray
    span: np.ndarray

    @property
    def dimension(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def neurons(self) -> int:
        return self.amplitudes.shape[0]

    def raw(self, points: np.ndarray) -> np.ndarray:
        """Unnormalised series at intrinsic points [..., D] → [..., N]."""
        harmonics = np.arange(1, self.amplitudes.shape[2] + 1)
        # broadcasts to [..., N, D, K]
        angle = 2.0 * np.pi * (
            points[..., None, :, None] * harmonics + self.phases
        )
        return np.sum(self.amplitudes * np.sin(angle), axis=(-2, -1))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.clip((self.raw(points) - self.low) / self.span, 0.0, 1.0)


def randman_manifold(spec: RandmanSpec, class_id: int, seed: Optional[int] = None) -> RandmanManifold:
    """Deterministic manifold for (seed, class_id); seed defaults to spec.seed."""
    seed = spec.seed if seed is None else seed
    rng = seeded_generator(seed, MANIFOLD_STREAM, class_id)

    shape = (spec.neurons, spec.dimension, spec.harmonics)
    decay = np.arange(1, spec.harmonics + 1, dtype=np.float64) ** (-spec.alpha)
    amplitudes = rng.uniform(0.0, 1.0, size=shape) * decay
    phases = rng.uniform(0.0, 1.0, size=shape)

    manifold = RandmanManifold(
        amplitudes=amplitudes,
        phases=phases,
        low=np.zeros(spec.neurons),
        span=np.ones(spec.neurons),
    )

    values = manifold.raw(rng.uniform(0.0, 1.0, size=(NORMALISATION_SAMPLES, spec.dimension)))
    low = values.min(axis=0)
    span = values.max(axis=0) - low
    manifold.low = low
    manifold.span = np.where(span > 0.0, span, 1.0)

    return manifold


def randman_time_sample(spec: RandmanSpec, values: np.ndarray) -> np.ndarray:
    """One spike per neuron at step floor(x·(T−1)).

    Args:
        spec
        values: manifold values in [0,1], [N] or [batch, N]

    Returns:
        spikes: uint8 [T, N] or [batch, T, N]
    """
    steps = np.floor(np.clip(values, 0.0, 1.0) * (spec.steps - 1)).astype(np.int64)
    spikes = (np.arange(spec.steps)[:, None] == steps[..., None, :])
    return spikes.astype(np.uint8)


def max_spike_count(spec: RandmanSpec) -> Tuple[int, bool]:
    """Largest per-neuron count for rate encoding, and whether it had to be clamped to T."""
    requested = spec.steps if spec.max_spikes is None else spec.max_spikes
    if requested > spec.steps:
        return spec.steps, True
    return requested, False


def randman_rate_sample(spec: RandmanSpec, values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """round(x·T_max) spikes per neuron at distinct, uniformly shuffled time-steps.

    Args:
        spec
        values: manifold values in [0,1], [N] or [batch, N]
        rng: drives the placement only, counts are fixed by the values

    Returns:
        spikes: uint8 [T, N] or [batch, T, N]
    """
    limit, clamped = max_spike_count(spec)
    if clamped:
        logger.warning(
            "Requested %d spikes per neuron but only %d time-steps exist; clamped to %d.",
            spec.max_spikes,
            spec.steps,
            limit,
        )

    counts = np.rint(np.clip(values, 0.0, 1.0) * limit).astype(np.int64)

    shape = values.shape[:-1] + (spec.steps, values.shape[-1])
    # Rank of each step in a random order, per neuron; the lowest `count` ranks fire.
    ranks = np.argsort(np.argsort(rng.random(shape), axis=-2), axis=-2)
    return (ranks < counts[..., None, :]).astype(np.uint8)


class RandmanGenerator:
    """Draws labelled Randman rasters, T- or R-encoded.

    Args:
        spec
        rate: True for rate (R-) encoding, False for time (T-) encoding
    """

    def __init__(self, spec: RandmanSpec, rate: bool = False) -> None:
        self.spec = spec
        self.rate = rate
        self.manifolds: List[RandmanManifold] = [
            randman_manifold(spec, class_id) for class_id in range(spec.num_classes)
        ]
        self.clamped = rate and max_spike_count(spec)[1]

    @property
    def channels(self) -> int:
        return self.spec.neurons

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def values(self, labels: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Manifold values [batch, N] of each example's class at its intrinsic point."""
        values = np.empty((labels.shape[0], self.spec.neurons))
        for class_id in np.unique(labels):
            mask = labels == class_id
            values[mask] = self.manifolds[class_id](points[mask])
        return values

    def sample(self, rng: np.random.Generator, size: int) -> SpikeRaster:
        labels = rng.integers(0, self.spec.num_classes, size=size)
        points = rng.uniform(0.0, 1.0, size=(size, self.spec.dimension))
        values = self.values(labels, points)

        if self.rate:
            spikes = randman_rate_sample(self.spec, values, rng)
        else:
            spikes = randman_time_sample(self.spec, values)

        return SpikeRaster(spikes=spikes, labels=labels, num_classes=self.spec.num_classes)

    def batch(self, batch_index: int, size: int) -> SpikeRaster:
        """Fresh draw from the manifolds, seeded by (seed, batch_index)."""
        return self.sample(seeded_generator(self.spec.seed, BATCH_STREAM, batch_index), size)

    def held_out(self, stream: int, size: int) -> SpikeRaster:
        return self.sample(seeded_generator(self.spec.seed, stream, size), size)
