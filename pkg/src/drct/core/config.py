import math
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from .exceptions import ConfigError

DENSE_STAGES = 5
LEAKY_SLOPE = 0.2
SUPPORTED_SCALES = (2, 3, 4)
DF2K_RGB_MEAN = (0.4488, 0.4371, 0.4040)

# Halving points of the multistep schedule as fractions of a stage's length
# (300k, 500k, 650k, 700k and 750k of 800k iterations).
DEFAULT_MILESTONES = (0.375, 0.625, 0.8125, 0.875, 0.9375)
DEFAULT_BASE_LR = 2e-4

StageId = Literal["pretrain", "l1_finetune", "l2_polish"]
STAGE_ORDER = ("pretrain", "l1_finetune", "l2_polish")
TapLevel = Literal["per_rdg", "per_sdrcb", "per_stage"]


def default_growth(embed_dim: int, num_heads: int) -> int:
    """Smallest multiple of num_heads that is at least embed_dim / 6."""
    return num_heads * math.ceil(embed_dim / (6 * num_heads))


def model_config_violations(config: "ModelConfig") -> List[str]:
    """Return a message for every violated architectural constraint."""
    violations = []
    if config.scale not in SUPPORTED_SCALES:
        violations.append(
            f"scale must be one of {list(SUPPORTED_SCALES)}, got {config.scale}"
        )
    if config.dense_stages != DENSE_STAGES:
        violations.append(
            f"dense_stages is fixed at {DENSE_STAGES}, got {config.dense_stages}"
        )
    if not 0 < config.alpha <= 1:
        violations.append(f"alpha must lie in (0, 1], got {config.alpha}")
    growth = config.growth_channels
    for j in range(config.dense_stages):
        width = config.embed_dim + j * growth
        if width % config.num_heads != 0:
            violations.append(
                f"attention width {width} (embed_dim {config.embed_dim} + "
                f"{j}*growth {growth}) is not divisible by num_heads "
                f"{config.num_heads}"
            )
    return violations


def check_model_config(config: "ModelConfig") -> None:
    """Raise ConfigError naming every violated constraint."""
    violations = model_config_violations(config)
    if violations:
        raise ConfigError(
            "Invalid model configuration: " + "; ".join(violations)
        )


def _validate_milestones(value: List[float]) -> List[float]:
    previous = 0.0
    for fraction in value:
        if not 0 < fraction < 1:
            raise ValueError(
                f"milestone fractions must lie in (0, 1), got {fraction}"
            )
        if fraction <= previous:
            raise ValueError(
                f"milestone fractions must be strictly increasing: {value}"
            )
        previous = fraction
    return value


class ModelConfig(BaseModel):
    scale: int = 4
    in_channels: int = Field(default=3, ge=1)
    embed_dim: int = Field(default=180, ge=1)
    num_rdg: int = Field(default=6, ge=1)
    # Six per the implementation details; the architecture figure shows five.
    sdrcb_per_rdg: int = Field(default=6, ge=1)
    dense_stages: int = DENSE_STAGES
    growth: Optional[int] = Field(default=None, ge=1)
    num_heads: int = Field(default=6, ge=1)
    window_size: int = Field(default=16, ge=2)
    mlp_ratio: float = Field(default=2.0, gt=0)
    alpha: float = 0.2
    leaky_slope: float = LEAKY_SLOPE
    img_range: float = Field(default=1.0, gt=0)
    transition_kernel: int = 1
    recon_features: int = Field(default=64, ge=1)
    subtract_mean: bool = True
    rgb_mean: Tuple[float, float, float] = DF2K_RGB_MEAN
    qkv_bias: bool = True
    identity_init: bool = False

    @field_validator('transition_kernel')
    @classmethod
    def check_transition_kernel(cls, value):
        if value not in (1, 3):
            raise ValueError(
                f"transition_kernel must be 1 or 3, got {value}"
            )
        return value

    @field_validator('leaky_slope')
    @classmethod
    def check_leaky_slope(cls, value):
        if value != LEAKY_SLOPE:
            raise ValueError(
                f"leaky_slope is fixed at {LEAKY_SLOPE}, got {value}"
            )
        return value

    @model_validator(mode='after')
    def check_architecture(self):
        violations = model_config_violations(self)
        if violations:
            raise ValueError("; ".join(violations))
        return self

    @property
    def growth_channels(self) -> int:
        if self.growth is not None:
            return self.growth
        return default_growth(self.embed_dim, self.num_heads)

    def stage_widths(self) -> List[int]:
        """Input width of each dense stage: C + (j-1)*g for j = 1..5."""
        g = self.growth_channels
        return [self.embed_dim + j * g for j in range(self.dense_stages)]

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "ModelConfig":
        if name not in MODEL_PRESETS:
            raise ConfigError(
                f"Unknown model preset '{name}'. "
                f"Available presets: {sorted(MODEL_PRESETS)}"
            )
        return cls(**{**MODEL_PRESETS[name], **overrides})


MODEL_PRESETS: Dict[str, Dict[str, Any]] = {
    # CPU-sized network for tests and quick experiments.
    "desk": {
        "embed_dim": 60, "num_rdg": 2, "sdrcb_per_rdg": 2, "growth": 12,
        "num_heads": 6, "window_size": 8,
    },
    # One SDRCB per RDG lands on the published 14.13M parameter scale.
    "full": {
        "embed_dim": 180, "num_rdg": 6, "sdrcb_per_rdg": 1, "growth": 30,
        "num_heads": 6, "window_size": 16,
    },
}


class StageConfig(BaseModel):
    id: StageId
    corpus: str = "synthetic"
    loss: Literal["l1", "l2"]
    total_iters: int = Field(gt=0)
    milestones: Optional[List[float]] = None
    base_lr: Optional[float] = Field(default=None, gt=0)
    init_checkpoint: Optional[str] = None

    @field_validator('loss', mode='before')
    @classmethod
    def normalize_loss(cls, value):
        return str(value).lower()

    @field_validator('milestones')
    @classmethod
    def check_milestones(cls, value):
        if value is None:
            return value
        return _validate_milestones(value)


class StagePlan(BaseModel):
    stages: List[StageConfig] = Field(min_length=1)

    @model_validator(mode='after')
    def check_stage_sequence(self):
        last = len(self.stages) - 1
        for index, stage in enumerate(self.stages):
            if stage.loss == "l2" and index != last:
                raise ValueError(
                    f"stage '{stage.id}' uses L2 loss but only the final "
                    "stage may"
                )
        order = [STAGE_ORDER.index(stage.id) for stage in self.stages]
        if order != sorted(order) or len(set(order)) != len(order):
            raise ValueError(
                "stages must follow pretrain -> l1_finetune -> l2_polish "
                f"without repeats, got {[s.id for s in self.stages]}"
            )
        return self


class AugmentationConfig(BaseModel):
    hflip: bool = True
    rotations: List[int] = Field(default_factory=lambda: [0, 90, 180, 270])

    @field_validator('rotations')
    @classmethod
    def check_rotations(cls, value):
        allowed = {0, 90, 180, 270}
        if not set(value) <= allowed:
            raise ValueError(f"rotations must be a subset of {sorted(allowed)}")
        if 0 not in value:
            raise ValueError("rotations must include 0 (identity transform)")
        return sorted(set(value))


class TrainingConfig(BaseModel):
    stages: List[StageConfig] = Field(default_factory=list)
    base_lr: float = Field(default=DEFAULT_BASE_LR, gt=0)
    milestones: List[float] = Field(
        default_factory=lambda: list(DEFAULT_MILESTONES)
    )
    batch_size: int = Field(default=32, ge=1)
    patch: int = Field(default=64, ge=1)
    augmentation: AugmentationConfig = Field(
        default_factory=AugmentationConfig
    )
    num_workers: int = Field(default=0, ge=0)
    grad_clip: Optional[float] = Field(default=None, gt=0)
    log_every: int = Field(default=10, ge=1)
    val_every: int = Field(default=100, ge=1)
    checkpoint_every: int = Field(default=500, ge=1)

    @field_validator('milestones')
    @classmethod
    def check_milestones(cls, value):
        return _validate_milestones(value)

    @model_validator(mode='after')
    def resolve_stage_defaults(self):
        for stage in self.stages:
            if stage.base_lr is None:
                stage.base_lr = self.base_lr
            if stage.milestones is None:
                stage.milestones = list(self.milestones)
        if self.stages:
            StagePlan(stages=self.stages)
        return self

    def plan(self) -> StagePlan:
        if not self.stages:
            raise ConfigError("training.stages is empty: nothing to train")
        return StagePlan(stages=self.stages)


class DataConfig(BaseModel):
    train_root: Optional[str] = None
    val_root: Optional[str] = None
    val_limit: Optional[int] = Field(default=None, ge=1)
    benchmarks: Dict[str, str] = Field(default_factory=dict)
    synthetic_images: int = Field(default=10, ge=1)
    synthetic_size: int = Field(default=96, ge=8)


class EvaluationConfig(BaseModel):
    tta: bool = False
    method_name: str = "DRCT"
    training_label: str = "DF2K"


class DiagnosticsConfig(BaseModel):
    tap_level: TapLevel = "per_rdg"


class LogConfig(BaseModel):
    file: Optional[str] = None


class RunConfig(BaseModel):
    title: str = "drct - image super-resolution"
    version: str = "0.3.0"
    seed: int = 0
    deterministic: bool = False
    output_dir: str = "runs/desk"
    model: ModelConfig = Field(default_factory=ModelConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    diagnostics: DiagnosticsConfig = Field(default_factory=DiagnosticsConfig)
    log: LogConfig = Field(default_factory=LogConfig)

    @field_validator('model', mode='before')
    @classmethod
    def expand_preset(cls, value):
        if isinstance(value, dict) and 'preset' in value:
            value = dict(value)
            name = value.pop('preset')
            if name not in MODEL_PRESETS:
                raise ValueError(
                    f"unknown model preset '{name}', "
                    f"available: {sorted(MODEL_PRESETS)}"
                )
            value = {**MODEL_PRESETS[name], **value}
        return value

    def check_trainable(self) -> None:
        """
        Raise ConfigError unless the HR patch divides by the scale.

        Only training crops patches, so eval, infer and diagnose accept any
        supported scale under the default patch.
        """
        if self.training.patch % self.model.scale != 0:
            raise ConfigError(
                f"training.patch {self.training.patch} is not divisible by "
                f"model.scale {self.model.scale}"
            )

    @property
    def log_file(self) -> str:
        if self.log.file:
            return self.log.file
        return f"{self.output_dir}/drct.log"
