import json
import logging
import time

import numpy as np
import pandas as pd

from pathlib import Path
from pydantic import BaseModel, Field
from typing import Any, Dict, IO, List, Optional, Sequence, Union

from spikegrad.type_models import ExperimentConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class CsvWriter:
    """Append-only CSV with a fixed column order and a leading schema_version column.

    Each row is written and flushed whole, so an interrupted run leaves only
    complete rows behind.
    """

    def __init__(self, path: Union[str, Path], columns: Sequence[str]) -> None:
        self.path = Path(path)
        self.columns = ["schema_version", *columns]
        self._handle: Optional[IO[str]] = open(self.path, "w", newline="")
        self._handle.write(",".join(self.columns) + "\n")
        self._handle.flush()

    def write(self, row: Dict[str, Any]) -> None:
        self.write_rows([row])

    def write_rows(self, rows: Sequence[Dict[str, Any]]) -> None:
        if self._handle is None:
            raise ValueError(f"{self.path} is already closed.")
        frame = pd.DataFrame(
            [{"schema_version": SCHEMA_VERSION, **row} for row in rows],
            columns=self.columns,
        )
        frame.to_csv(self._handle, header=False, index=False, na_rep="", lineterminator="\n")
        self._handle.flush()

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> "CsvWriter":
        return self

    def __exit__(self, *_: Any) -> None:
        self.close()


class RunRecord(BaseModel):
    """One minibatch of a training run."""

    minibatch: int = Field(ge=0)
    train_loss: float
    valid_accuracy: Optional[float] = None
    cos_model: Optional[float] = None
    cos_layers: List[Optional[float]] = Field(default_factory=list)
    cos_zero_norm: Optional[bool] = None
    trace_elements: int = 0

    def row(self, depth: int) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            "minibatch": self.minibatch,
            "train_loss": self.train_loss,
            "valid_accuracy": self.valid_accuracy,
            "cos_model": self.cos_model,
        }
        for index in range(depth):
            row[f"cos_layer_{index}"] = self.cos_layers[index] if index < len(self.cos_layers) else None
        row["cos_zero_norm"] = None if self.cos_zero_norm is None else int(self.cos_zero_norm)
        row["trace_elements"] = self.trace_elements
        return row


class RunSummary(BaseModel):
    minibatches: int
    final_valid_accuracy: Optional[float] = None
    best_valid_accuracy: Optional[float] = None
    best_minibatch: Optional[int] = None
    window_mean_accuracy: Optional[float] = None
    test_accuracy: Optional[float] = None
    clamped_rate: bool = False


def cosine_columns(depth: int) -> List[str]:
    return [f"cos_layer_{index}" for index in range(depth)]


def runlog_columns(depth: int) -> List[str]:
    return [
        "minibatch",
        "train_loss",
        "valid_accuracy",
        "cos_model",
        *cosine_columns(depth),
        "cos_zero_norm",
        "trace_elements",
    ]


class RunLog:
    """Records of one run, mirrored to runlog.csv (and timing.csv) when a directory is given.

    Args:
        depth: layer count, fixes the per-layer cosine columns
        directory: run output directory, or None to keep records in memory only
    """

    def __init__(self, depth: int, directory: Optional[Path] = None) -> None:
        self.depth = depth
        self.records: List[RunRecord] = []
        self._csv: Optional[CsvWriter] = None
        self._timing: Optional[CsvWriter] = None
        self._started = time.perf_counter()

        if directory is not None:
            self._csv = CsvWriter(directory / "runlog.csv", runlog_columns(depth))
            self._timing = CsvWriter(directory / "timing.csv", ["minibatch", "wall_clock"])

    def append(self, record: RunRecord) -> None:
        self.records.append(record)
        if self._csv is not None:
            self._csv.write(record.row(self.depth))
        if self._timing is not None:
            self._timing.write(
                {
                    "minibatch": record.minibatch,
                    "wall_clock": round(time.perf_counter() - self._started, 3),
                }
            )

    def close(self) -> None:
        for writer in (self._csv, self._timing):
            if writer is not None:
                writer.close()

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([record.row(self.depth) for record in self.records], columns=runlog_columns(self.depth))

    def summarize(self, window: int) -> RunSummary:
        """Final, best and trailing-window mean validation accuracy."""
        validated = [r for r in self.records if r.valid_accuracy is not None]
        if not validated:
            return RunSummary(minibatches=len(self.records))

        best = max(validated, key=lambda r: r.valid_accuracy)
        last = self.records[-1].minibatch
        trailing = [r.valid_accuracy for r in validated if r.minibatch > last - window]

        return RunSummary(
            minibatches=len(self.records),
            final_valid_accuracy=validated[-1].valid_accuracy,
            best_valid_accuracy=best.valid_accuracy,
            best_minibatch=best.minibatch,
            window_mean_accuracy=float(np.mean(trailing)),
        )


def write_config_snapshot(path: Union[str, Path], config: ExperimentConfig, **extra: Any) -> None:
    """Fully resolved config as JSON, written before any compute."""
    payload = {"config": config.model_dump(mode="json"), **extra}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_summary(path: Union[str, Path], summary: RunSummary) -> None:
    Path(path).write_text(summary.model_dump_json(indent=2) + "\n")
