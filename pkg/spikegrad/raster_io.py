"""Binary on-disk format for labelled spike rasters.

Layout, all little-endian::

    header (24 bytes)  magic "SPKR" | version u16 | encoding u8 | reserved u8
                       | T u32 | channels u32 | num_examples u32 | num_classes u32
    per example        ceil(T·channels / 8) bytes of packed bits, row-major over
                       [T, channels], least significant bit first | label u16
"""
import struct

import numpy as np

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Tuple, Union

from spikegrad.exception import ConfigurationException, RasterFormatException
from spikegrad.state import SpikeRaster

MAGIC = b"SPKR"
VERSION = 1
HEADER = struct.Struct("<4sHBBIIII")
LABEL_BYTES = 2


class RasterEncoding(IntEnum):
    UNKNOWN = 0
    T_RANDMAN = 1
    R_RANDMAN = 2
    SHD = 3


@dataclass(frozen=True)
class RasterHeader:
    steps: int
    channels: int
    num_examples: int
    num_classes: int
    encoding: RasterEncoding = RasterEncoding.UNKNOWN
    version: int = VERSION

    @property
    def example_bytes(self) -> int:
        return -(-self.steps * self.channels // 8)

    @property
    def record_bytes(self) -> int:
        return self.example_bytes + LABEL_BYTES

    @property
    def payload_bytes(self) -> int:
        return self.num_examples * self.record_bytes

    def pack(self) -> bytes:
        return HEADER.pack(
            MAGIC,
            self.version,
            int(self.encoding),
            0,
            self.steps,
            self.channels,
            self.num_examples,
            self.num_classes,
        )

    @classmethod
    def unpack(cls, data: bytes) -> "RasterHeader":
        if len(data) < HEADER.size:
            raise RasterFormatException(
                f"File holds {len(data)} bytes, shorter than the {HEADER.size}-byte header",
                len(data),
            )

        magic, version, encoding, _, steps, channels, examples, classes = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise RasterFormatException(f"Bad magic {magic!r}, expected {MAGIC!r}", 0)
        if version != VERSION:
            raise RasterFormatException(f"Unsupported raster version {version}", 4)
        try:
            encoding = RasterEncoding(encoding)
        except ValueError:
            raise RasterFormatException(f"Unknown encoding tag {encoding}", 6) from None

        return cls(steps, channels, examples, classes, encoding, version)


def raster_write(
    path: Union[str, Path],
    raster: SpikeRaster,
    encoding: RasterEncoding = RasterEncoding.UNKNOWN,
) -> RasterHeader:
    """Write a raster bit-exactly; returns the header that was written."""
    spikes = np.asarray(raster.spikes)
    if spikes.size and not np.all((spikes == 0) | (spikes == 1)):
        raise ConfigurationException("Only binary spike rasters can be written.")
    if raster.num_classes > np.iinfo(np.uint16).max + 1:
        raise ConfigurationException(
            f"{raster.num_classes} classes do not fit the 16-bit label field."
        )

    header = RasterHeader(
        steps=raster.steps,
        channels=raster.channels,
        num_examples=raster.batch,
        num_classes=raster.num_classes,
        encoding=encoding,
    )

    flat = spikes.reshape(raster.batch, -1).astype(np.uint8)
    records = np.empty((raster.batch, header.record_bytes), dtype=np.uint8)
    records[:, : header.example_bytes] = np.packbits(flat, axis=1, bitorder="little")
    records[:, header.example_bytes :] = (
        raster.labels.astype("<u2").view(np.uint8).reshape(raster.batch, LABEL_BYTES)
    )

    with open(path, "wb") as handle:
        handle.write(header.pack())
        handle.write(records.tobytes())

    return header


def read_header(path: Union[str, Path]) -> RasterHeader:
    with open(path, "rb") as handle:
        return RasterHeader.unpack(handle.read(HEADER.size))


def raster_read(path: Union[str, Path]) -> SpikeRaster:
    raster, _ = raster_read_with_header(path)
    return raster


def raster_read_with_header(path: Union[str, Path]) -> Tuple[SpikeRaster, RasterHeader]:
    """Read and validate a whole raster file; never returns partial data."""
    data = Path(path).read_bytes()
    header = RasterHeader.unpack(data)

    expected = HEADER.size + header.payload_bytes
    if len(data) < expected:
        raise RasterFormatException(
            f"Truncated raster: header promises {header.num_examples} examples "
            f"({expected} bytes), file holds {len(data)}",
            len(data),
        )
    if len(data) > expected:
        raise RasterFormatException(
            f"{len(data) - expected} trailing bytes after the last example", expected
        )

    records = np.frombuffer(data, dtype=np.uint8, offset=HEADER.size).reshape(
        header.num_examples, header.record_bytes
    )
    bits = np.unpackbits(
        records[:, : header.example_bytes],
        axis=1,
        count=header.steps * header.channels,
        bitorder="little",
    )
    spikes = bits.reshape(header.num_examples, header.steps, header.channels)
    labels = (
        np.ascontiguousarray(records[:, header.example_bytes :]).view("<u2").ravel().astype(np.int64)
    )

    invalid = np.flatnonzero(labels >= header.num_classes)
    if invalid.size:
        index = int(invalid[0])
        offset = HEADER.size + index * header.record_bytes + header.example_bytes
        raise RasterFormatException(
            f"Example {index} has label {labels[index]}, not below num_classes "
            f"{header.num_classes}",
            offset,
        )

    return SpikeRaster(spikes=spikes, labels=labels, num_classes=header.num_classes), header
