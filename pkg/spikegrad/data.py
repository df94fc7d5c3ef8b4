import logging

import numpy as np

from typing import Optional, Protocol, Tuple

from spikegrad.exception import ConfigurationException
from spikegrad.randman import BATCH_STREAM, TEST_STREAM, VALID_STREAM, RandmanGenerator
from spikegrad.raster_io import RasterEncoding, raster_read
from spikegrad.state import SpikeRaster
from spikegrad.type_models import DatasetConfig, DatasetKind
from spikegrad.util import seeded_generator

logger = logging.getLogger(__name__)


def split_train_valid(raster: SpikeRaster, fraction: float, seed: int) -> Tuple[SpikeRaster, SpikeRaster]:
    """Seeded disjoint split; the validation part holds round(fraction·n) examples, at least one.

    Args:
        raster
        fraction: share of examples held out, in (0, 1)
        seed
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigurationException(f"Validation fraction must lie in (0, 1), got {fraction}")

    if raster.batch < 2:
        raise ConfigurationException(
            f"Cannot split {raster.batch} example(s) into training and validation parts."
        )

    order = seeded_generator(seed).permutation(raster.batch)
    held_out = min(max(1, int(round(fraction * raster.batch))), raster.batch - 1)

    valid = np.sort(order[:held_out])
    train = np.sort(order[held_out:])
    return raster.subset(train), raster.subset(valid)


class BatchSource(Protocol):
    channels: int
    num_classes: int
    steps: int
    encoding: RasterEncoding
    clamped: bool

    def batch(self, batch_index: int, size: int) -> SpikeRaster:
        ...

    def validation(self) -> SpikeRaster:
        ...

    def test(self) -> Optional[SpikeRaster]:
        ...


class RandmanSource:
    """Fresh manifold draws for every minibatch, fixed held-out draws for evaluation."""

    def __init__(self, generator: RandmanGenerator, valid_examples: int, test_examples: int = 0) -> None:
        self.generator = generator
        self.channels = generator.channels
        self.num_classes = generator.num_classes
        self.steps = generator.spec.steps
        self.encoding = RasterEncoding.R_RANDMAN if generator.rate else RasterEncoding.T_RANDMAN
        self.clamped = generator.clamped
        self._valid = generator.held_out(VALID_STREAM, valid_examples)
        self._test = generator.held_out(TEST_STREAM, test_examples) if test_examples else None

    def batch(self, batch_index: int, size: int) -> SpikeRaster:
        return self.generator.batch(batch_index, size)

    def validation(self) -> SpikeRaster:
        return self._valid

    def test(self) -> Optional[SpikeRaster]:
        return self._test


class RasterSource:
    """Minibatches drawn without replacement from a stored training split."""

    def __init__(
        self,
        train: SpikeRaster,
        valid: SpikeRaster,
        seed: int,
        test: Optional[SpikeRaster] = None,
        encoding: RasterEncoding = RasterEncoding.UNKNOWN,
    ) -> None:
        if train.batch == 0:
            raise ConfigurationException("The training split holds no examples.")
        self.train = train
        self.seed = seed
        self.channels = train.channels
        self.num_classes = train.num_classes
        self.steps = train.steps
        self.encoding = encoding
        self.clamped = False
        self._valid = valid
        self._test = test

    def batch(self, batch_index: int, size: int) -> SpikeRaster:
        rng = seeded_generator(self.seed, BATCH_STREAM, batch_index)
        indices = np.sort(rng.choice(self.train.batch, size=min(size, self.train.batch), replace=False))
        return self.train.subset(indices)

    def validation(self) -> SpikeRaster:
        return self._valid

    def test(self) -> Optional[SpikeRaster]:
        return self._test


def build_source(config: DatasetConfig, seed: int) -> BatchSource:
    """Batch source for a dataset section; `seed` drives splits and minibatch draws of stored rasters."""
    match config.kind:
        case DatasetKind.RANDMAN_T | DatasetKind.RANDMAN_R:
            generator = RandmanGenerator(config.randman, rate=config.kind is DatasetKind.RANDMAN_R)
            return RandmanSource(generator, config.valid_examples, config.test_examples)
        case DatasetKind.RASTER_FILE:
            if config.path is None or not config.path.is_file():
                raise ConfigurationException(f"Raster file {config.path} does not exist.")
            raster = raster_read(config.path)
            train, valid = split_train_valid(raster, config.valid_fraction, seed)

            test = None
            if config.test_path is not None:
                if not config.test_path.is_file():
                    raise ConfigurationException(f"Raster file {config.test_path} does not exist.")
                test = raster_read(config.test_path)
                if (test.steps, test.channels) != (train.steps, train.channels):
                    raise ConfigurationException(
                        "Test raster shape does not match the training raster."
                    )

            logger.info(
                "Loaded %d examples (%d train, %d valid) from %s",
                raster.batch,
                train.batch,
                valid.batch,
                config.path,
            )
            return RasterSource(train, valid, seed, test)
        case _:
            raise ConfigurationException(f"Unknown dataset kind {config.kind}.")
