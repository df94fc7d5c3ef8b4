from enum import Enum
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ResetMode(str, Enum):
    """How the derivative flows through the subtraction reset."""

    DETACH = "detach"
    SURROGATE = "surrogate"


class SpatialFactor(str, Enum):
    CURRENT = "current"
    RUNNING_AVERAGE = "running_average"


class Algorithm(str, Enum):
    BPTT = "bptt"
    RTRL = "rtrl"
    OSTL = "ostl"
    OTTT = "ottt"
    OTPE = "otpe"
    APPROX_OTPE = "approx_otpe"
    F_OTPE = "f_otpe"
    F_APPROX_OTPE = "f_approx_otpe"

    @property
    def is_f_variant(self) -> bool:
        return self in (Algorithm.F_OTPE, Algorithm.F_APPROX_OTPE)

    @property
    def is_trace(self) -> bool:
        return self not in (Algorithm.BPTT, Algorithm.RTRL)


class Mode(str, Enum):
    OFFLINE = "offline"
    ONLINE = "online"


class LossKind(str, Enum):
    PER_STEP_CE = "per_step_ce"
    SEQUENCE_CE_ON_SUM = "sequence_ce_on_sum"
    LEAKY_SUM_CE = "leaky_sum_ce"


class DatasetKind(str, Enum):
    RANDMAN_T = "randman_t"
    RANDMAN_R = "randman_r"
    RASTER_FILE = "raster_file"


class OnlineUpdate(str, Enum):
    STEP = "step"
    EXAMPLE = "example"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=False)


class LossSpec(_Section):
    """Loss applied to the output spikes.

    Args:
        kind
        output_leak: λ_o of the output accumulator, where the kind uses one;
            unset means the experiment default, or 1 for a standalone spec
        num_classes
    """

    kind: LossKind = LossKind.SEQUENCE_CE_ON_SUM
    output_leak: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    num_classes: int = Field(default=10, ge=2)

    @property
    def accumulator_leak(self) -> float:
        return 1.0 if self.output_leak is None else self.output_leak


class RandmanSpec(_Section):
    dimension: int = Field(default=3, ge=1)
    num_classes: int = Field(default=10, ge=2)
    neurons: int = Field(default=50, ge=1)
    alpha: float = Field(default=1.0, gt=0.0)
    harmonics: int = Field(default=4, ge=1)
    steps: int = Field(default=50, ge=1)
    max_spikes: Optional[int] = Field(default=None, ge=0)
    seed: int = 0


class DatasetConfig(_Section):
    kind: DatasetKind = DatasetKind.RANDMAN_T
    path: Optional[Path] = None
    test_path: Optional[Path] = None
    randman: RandmanSpec = Field(default_factory=RandmanSpec)
    valid_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)
    valid_examples: int = Field(default=256, ge=1)
    test_examples: int = Field(default=0, ge=0)


class ModelConfig(_Section):
    depth: int = Field(default=3, ge=1)
    width: int = Field(default=64, ge=1)
    leak: float = Field(default=0.9, ge=0.0, lt=1.0)
    threshold: float = Field(default=0.2, gt=0.0)
    slope: float = Field(default=25.0, gt=0.0)
    dtype: str = Field(default="float64", pattern="^(float64|float32)$")


class AlgorithmOptions(_Section):
    reset_mode: ResetMode = ResetMode.SURROGATE
    comparison_reset_mode: ResetMode = ResetMode.SURROGATE
    spatial_factor: Optional[SpatialFactor] = None
    output_leak: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    rtrl_memory_cap: int = Field(default=1 << 24, ge=1)


class OptimizerConfig(_Section):
    learning_rate: float = Field(default=1e-3, ge=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, ge=0.0)


class ScheduleConfig(_Section):
    minibatches: int = Field(default=600, ge=1)
    batch_size: int = Field(default=128, ge=1)
    validation_every: int = Field(default=1, ge=1)
    checkpoint_every: int = Field(default=200, ge=1)
    online_update: OnlineUpdate = OnlineUpdate.STEP
    summary_window: int = Field(default=1000, ge=1)


class DiagnosticsConfig(_Section):
    cosine_vs_bptt: bool = False
    report_memory: bool = False
    compare_algorithms: List[Algorithm] = Field(
        default_factory=lambda: [
            Algorithm.OSTL,
            Algorithm.OTTT,
            Algorithm.OTPE,
            Algorithm.APPROX_OTPE,
        ]
    )


class ExperimentConfig(_Section):
    """Everything that defines one run."""

    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    algorithm: Algorithm = Algorithm.OTPE
    algorithm_options: AlgorithmOptions = Field(default_factory=AlgorithmOptions)
    mode: Mode = Mode.OFFLINE
    loss: Optional[LossSpec] = None
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    diagnostics: DiagnosticsConfig = Field(default_factory=DiagnosticsConfig)
    seed: int = 0
    output_dir: Optional[Path] = None

    @model_validator(mode="after")
    def _check_compatibility(self) -> "ExperimentConfig":
        if self.mode is Mode.ONLINE and self.algorithm is Algorithm.BPTT:
            raise ValueError("algorithm bptt cannot run in online mode")
        if self.algorithm.is_f_variant and self.mode is Mode.OFFLINE:
            raise ValueError(f"algorithm {self.algorithm.value} is online-only")
        if self.dataset.kind is DatasetKind.RASTER_FILE and self.dataset.path is None:
            raise ValueError("dataset.path is required for raster_file datasets")

        if self.loss is None:
            self.loss = LossSpec(kind=self.default_loss_kind(), num_classes=self.dataset.randman.num_classes)
        if self.loss.output_leak is None:
            self.loss = self.loss.model_copy(update={"output_leak": self.default_output_leak(self.loss.kind)})
        if self.algorithm.is_f_variant and self.loss.kind is not LossKind.LEAKY_SUM_CE:
            raise ValueError(
                f"algorithm {self.algorithm.value} requires loss.kind leaky_sum_ce"
            )
        if self.mode is Mode.ONLINE and self.loss.kind is LossKind.SEQUENCE_CE_ON_SUM:
            raise ValueError("loss.kind sequence_ce_on_sum has no online form")
        return self

    def default_loss_kind(self) -> LossKind:
        if self.algorithm.is_f_variant:
            return LossKind.LEAKY_SUM_CE
        if self.mode is Mode.ONLINE:
            return LossKind.PER_STEP_CE
        return LossKind.SEQUENCE_CE_ON_SUM

    def default_output_leak(self, kind: LossKind) -> float:
        """The network leak for leaky_sum_ce unless algorithm_options.output_leak is set, else 1."""
        if kind is not LossKind.LEAKY_SUM_CE:
            return 1.0
        if self.algorithm_options.output_leak is not None:
            return self.algorithm_options.output_leak
        return self.model.leak

    @property
    def hidden_widths(self) -> List[int]:
        return [self.model.width] * (self.model.depth - 1)
