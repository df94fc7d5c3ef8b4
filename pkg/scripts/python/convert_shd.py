"""Bin Spiking Heidelberg Digits HDF5 recordings into a raster file.

Each recording's events are split into equal-width time bins spanning that
recording's own duration. A (bin, channel) cell spikes when it holds any event.
"""
import logging

import click
import h5py
import numpy as np

from pathlib import Path
from rich.logging import RichHandler
from typing import Optional, Sequence, Tuple

from spikegrad.raster_io import RasterEncoding, raster_write
from spikegrad.state import SpikeRaster
from spikegrad.util import seeded_generator

logger = logging.getLogger(__name__)

SHD_CHANNELS = 700
SHD_CLASSES = 20


def bin_recording(times: np.ndarray, units: np.ndarray, steps: int, channels: int) -> np.ndarray:
    """Binary occupancy [steps, channels] of one recording's events."""
    raster = np.zeros((steps, channels), dtype=np.uint8)
    if times.size == 0:
        return raster

    duration = float(times.max())
    if duration > 0.0:
        bins = np.minimum((times / duration * steps).astype(np.int64), steps - 1)
    else:
        bins = np.zeros(times.shape, dtype=np.int64)

    raster[bins, units.astype(np.int64)] = 1
    return raster


def select(labels: np.ndarray, classes: Optional[int], limit: Optional[int], seed: int) -> np.ndarray:
    """Indices of the recordings to keep: the first `classes` labels, at most `limit` of them."""
    indices = np.arange(labels.size)
    if classes is not None:
        indices = indices[labels < classes]
    if limit is not None and indices.size > limit:
        indices = np.sort(seeded_generator(seed).choice(indices, size=limit, replace=False))
    return indices


def convert(
    source: Path,
    target: Path,
    steps: int = 50,
    classes: Optional[int] = None,
    limit: Optional[int] = None,
    seed: int = 0,
) -> Tuple[int, int]:
    with h5py.File(source, "r") as handle:
        times: Sequence[np.ndarray] = handle["spikes"]["times"]
        units: Sequence[np.ndarray] = handle["spikes"]["units"]
        labels = np.asarray(handle["labels"], dtype=np.int64)

        keep = select(labels, classes, limit, seed)
        spikes = np.stack(
            [bin_recording(np.asarray(times[i]), np.asarray(units[i]), steps, SHD_CHANNELS) for i in keep]
        )

    num_classes = SHD_CLASSES if classes is None else classes
    raster_write(target, SpikeRaster(spikes, labels[keep], num_classes), RasterEncoding.SHD)
    return keep.size, num_classes


@click.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("target", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--classes", type=int, help="Keep only labels below this value.")
@click.option("--limit", type=int, help="Keep at most this many recordings, drawn with --seed.")
@click.option("--seed", type=int, default=0, show_default=True)
def main(source: Path, target: Path, steps: int, classes: Optional[int], limit: Optional[int], seed: int) -> None:
    logging.basicConfig(level=logging.INFO, format="%(message)s", handlers=[RichHandler(show_path=False)])

    examples, num_classes = convert(source, target, steps, classes, limit, seed)
    logger.info("Wrote %d recordings over %d classes to %s", examples, num_classes, target)


if __name__ == "__main__":
    main()
