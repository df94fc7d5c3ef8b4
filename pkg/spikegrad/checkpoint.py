"""Versioned parameter checkpoints.

Layout, little-endian: magic "SPKC" | version u16 | layer count u16, then per
layer n_out u32 | n_in u32 followed by n_out·n_in float64 weights, row-major.
"""
import struct

import numpy as np

from pathlib import Path
from typing import List, Sequence, Union

from spikegrad.exception import CheckpointFormatException, ConfigurationException

MAGIC = b"SPKC"
VERSION = 1
HEADER = struct.Struct("<4sHH")
LAYER = struct.Struct("<II")


def save_checkpoint(path: Union[str, Path], weights: Sequence[np.ndarray]) -> None:
    if len(weights) > np.iinfo(np.uint16).max:
        raise ConfigurationException(f"Cannot checkpoint {len(weights)} layers.")

    with open(path, "wb") as handle:
        handle.write(HEADER.pack(MAGIC, VERSION, len(weights)))
        for matrix in weights:
            if matrix.ndim != 2:
                raise ConfigurationException("Checkpointed weights must be matrices.")
            handle.write(LAYER.pack(*matrix.shape))
            handle.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes())


def load_checkpoint(path: Union[str, Path]) -> List[np.ndarray]:
    data = Path(path).read_bytes()

    if len(data) < HEADER.size:
        raise CheckpointFormatException("Checkpoint shorter than its header", len(data))
    magic, version, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointFormatException(f"Bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise CheckpointFormatException(f"Unsupported checkpoint version {version}", 4)

    weights = []
    offset = HEADER.size
    for index in range(count):
        if len(data) < offset + LAYER.size:
            raise CheckpointFormatException(f"Truncated shape of layer {index}", len(data))
        n_out, n_in = LAYER.unpack_from(data, offset)
        offset += LAYER.size

        size = n_out * n_in * 8
        if len(data) < offset + size:
            raise CheckpointFormatException(f"Truncated weights of layer {index}", len(data))
        matrix = np.frombuffer(data, dtype="<f8", count=n_out * n_in, offset=offset)
        weights.append(matrix.reshape(n_out, n_in).astype(np.float64))
        offset += size

    if offset != len(data):
        raise CheckpointFormatException(
            f"{len(data) - offset} trailing bytes after the last layer", offset
        )

    return weights
