from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from tapmicro._exceptions import InvalidConfigError

####################################################################################################
# Configurations
####################################################################################################


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(_StrictModel):
    """Architecture of the tracker: backbone, token codec and heads."""

    num_layers: int = Field(default=4, ge=1)
    width: int = Field(default=128, ge=4)
    num_heads: int = Field(default=4, ge=1)
    lru_expansion: int = Field(default=2, ge=1)
    patch_size: int = Field(default=4, ge=1)
    image_size: Tuple[int, int] = Field(default=(32, 32))  # (H, W)
    num_bins: int = Field(default=32, ge=2)
    softargmax_delta: int = Field(default=3, ge=0)
    temperature: float = Field(default=2.0, gt=0.0)
    pos_embed_resolution: int = Field(default=64, ge=1)
    temporal_block: Literal["ssm", "attention"] = "ssm"
    forget_gate_clamp: Optional[Tuple[float, float]] = None
    forget_gate_clamp_target: Literal["gate", "decay"] = "gate"
    query_broadcast: bool = False
    temporal_conv: bool = False
    conv_width: int = Field(default=4, ge=1)
    decay_constant: float = Field(default=8.0, gt=0.0)
    mlp_ratio: int = Field(default=4, ge=1)
    head_type: Literal["classification", "regression"] = "classification"
    head_hidden: int = Field(default=256, ge=1)
    head_layers: int = Field(default=3, ge=1)
    occlusion_radius: float = Field(default=8.0, gt=0.0)  # pixels at 256-pixel extent
    rotary_base: float = Field(default=10000.0, gt=1.0)
    init_std: float = Field(default=0.02, gt=0.0)
    attention_capture_layers: Tuple[int, ...] = ()

    @field_validator("image_size")
    @classmethod
    def _positive_image(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        if value[0] <= 0 or value[1] <= 0:
            raise ValueError("image_size must be positive")
        return value

    @field_validator("forget_gate_clamp")
    @classmethod
    def _valid_clamp(cls, value: Optional[Tuple[float, float]]) -> Optional[Tuple[float, float]]:
        if value is not None and not (0.0 <= value[0] < value[1] <= 1.0):
            raise ValueError("forget_gate_clamp must satisfy 0 <= lo < hi <= 1")
        return value

    @model_validator(mode="after")
    def _consistent(self) -> "ModelConfig":
        height, width = self.image_size
        if height % self.patch_size or width % self.patch_size:
            raise ValueError(f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}")
        if self.width % 4:
            raise ValueError("width must be divisible by 4 for the 2D sinusoidal embedding")
        if self.width % self.num_heads:
            raise ValueError("width must be divisible by num_heads")
        if self.temporal_block == "attention" and (self.width // self.num_heads) % 2:
            raise ValueError("rotary embedding needs an even head dimension")
        for layer in self.attention_capture_layers:
            if not 0 <= layer < self.num_layers:
                raise ValueError(f"attention_capture_layers entry {layer} outside [0, {self.num_layers})")
        return self

    @property
    def grid_size(self) -> Tuple[int, int]:
        return self.image_size[0] // self.patch_size, self.image_size[1] // self.patch_size

    @property
    def num_patches(self) -> int:
        h, w = self.grid_size
        return h * w

    @property
    def lru_width(self) -> int:
        return self.width * self.lru_expansion

    @property
    def head_dim(self) -> int:
        return self.width // self.num_heads

    @property
    def scaled_occlusion_radius(self) -> Tuple[float, float]:
        """Occlusion radius in (x, y) pixels of this model's frame extent."""
        height, width = self.image_size
        return self.occlusion_radius * width / 256.0, self.occlusion_radius * height / 256.0


class LossWeights(_StrictModel):
    huber_x: float = Field(default=0.1, ge=0.0)
    huber_y: float = Field(default=0.1, ge=0.0)
    ce_x: float = Field(default=1.0, ge=0.0)
    ce_y: float = Field(default=1.0, ge=0.0)
    visibility: float = Field(default=1.0, ge=0.0)
    intermediate_losses: bool = True


class SceneSpec(_StrictModel):
    """Distribution of procedural scenes; one seed yields one clip deterministically."""

    seed: int = 0
    num_frames: int = Field(default=16, ge=1)
    height: int = Field(default=32, ge=1)
    width: int = Field(default=32, ge=1)
    sprite_count: Tuple[int, int] = (2, 5)
    sprite_size: Tuple[float, float] = (3.0, 8.0)  # radius or half-extent in pixels
    sprite_speed: Tuple[float, float] = (0.0, 1.5)  # pixels per frame
    pan_speed: Tuple[float, float] = (0.0, 0.75)  # pixels per frame
    wobble_probability: float = Field(default=0.5, ge=0.0, le=1.0)
    wobble_amplitude: Tuple[float, float] = (0.5, 3.0)
    wobble_period: Tuple[float, float] = (6.0, 20.0)  # frames
    disc_probability: float = Field(default=0.5, ge=0.0, le=1.0)
    blur_taps: int = Field(default=4, ge=1)
    shutter: float = Field(default=0.5, ge=0.0, le=1.0)  # fraction of the frame interval the shutter is open
    points_per_sprite: int = Field(default=6, ge=0)
    background_points: int = Field(default=4, ge=0)  # per axis, on a uniform grid

    @model_validator(mode="after")
    def _ranges(self) -> "SceneSpec":
        for name in ("sprite_count", "sprite_size", "sprite_speed", "pan_speed", "wobble_amplitude", "wobble_period"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must be a non-negative (lo, hi) range, got {(lo, hi)}")
        if self.sprite_size[0] <= 0:
            raise ValueError("sprite_size must be positive")
        return self


class TrainConfig(_StrictModel):
    preset: str = "toy"
    steps: int = Field(default=5000, ge=1)
    batch_size: int = Field(default=8, ge=1)
    queries_per_clip: int = Field(default=32, ge=1)
    t0_probability: float = Field(default=0.8, ge=0.0, le=1.0)
    peak_lr: float = Field(default=1e-3, gt=0.0)
    warmup_steps: int = Field(default=250, ge=0)
    min_lr: float = Field(default=0.0, ge=0.0)
    weight_decay: float = Field(default=0.01, ge=0.0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0.0)
    grad_clip_norm: float = Field(default=1.0, gt=0.0)
    loss: LossWeights = Field(default_factory=LossWeights)
    seed: int = 0
    num_clips: int = Field(default=2000, ge=1)
    validation_clips: int = Field(default=64, ge=0)
    log_every: int = Field(default=50, ge=1)
    checkpoint_every: int = Field(default=500, ge=1)
    eval_every: int = Field(default=500, ge=1)
    keep_checkpoints: int = Field(default=3, ge=0)
    prefetch: int = Field(default=2, ge=0)

    @model_validator(mode="after")
    def _schedule(self) -> "TrainConfig":
        if self.warmup_steps >= self.steps:
            raise ValueError(f"warmup_steps ({self.warmup_steps}) must be smaller than steps ({self.steps})")
        if self.min_lr > self.peak_lr:
            raise ValueError("min_lr cannot exceed peak_lr")
        return self


class EvalConfig(_StrictModel):
    query_mode: Literal["first", "t0", "strided"] = "first"
    query_stride: int = Field(default=5, ge=1)
    thresholds: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    eval_resolution: Tuple[int, int] = (256, 256)  # (H, W)
    use_support_points: bool = False
    support_local_size: int = Field(default=9, ge=0)
    support_local_radius: float = Field(default=0.125, ge=0.0)  # fraction of the frame extent
    support_global_size: int = Field(default=4, ge=0)
    one_point_at_a_time: bool = False

    @field_validator("thresholds")
    @classmethod
    def _positive_thresholds(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value or any(t <= 0 for t in value):
            raise ValueError("thresholds must be a non-empty tuple of positive values")
        return value


def validate_config(model_cls: type, data: Dict[str, Any]) -> Any:
    """Build a config from a dict, turning validation failures into InvalidConfigError."""
    try:
        return model_cls.model_validate(data)
    except ValidationError as e:
        raise InvalidConfigError(f"Invalid {model_cls.__name__}: {e}") from e


####################################################################################################
# Manifests
####################################################################################################


class TensorEntry(BaseModel):
    name: str
    shape: List[int]
    dtype: str
    offset: int
    nbytes: int
    checksum: str


class TensorManifest(BaseModel):
    format_version: int = 1
    tensors: List[TensorEntry] = Field(default_factory=list)
    metadata: Dict[str, Any] = Field(default_factory=dict)


class ClipSidecar(BaseModel):
    num_frames: int
    height: int
    width: int
    seed: Optional[int] = None
    dtype: Literal["uint8"] = "uint8"


class RunManifest(BaseModel):
    command: str
    config_hash: str
    seed: Optional[int] = None
    config: Dict[str, Any] = Field(default_factory=dict)
    artifacts: Dict[str, str] = Field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    tool_version: str = ""


class MetricsReport(BaseModel):
    average_jaccard: float = Field(serialization_alias="AJ")
    delta_avg: float
    occlusion_accuracy: float = Field(serialization_alias="OA")
    per_threshold: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    per_video: List[Dict[str, float]] = Field(default_factory=list)


class AttentionProbeEntry(BaseModel):
    key: str
    layer: int
    head: int
    quadrant: Literal["point_to_image", "point_to_point", "image_to_image", "image_to_point"]
    shape: List[int]


class AttentionProbeIndex(BaseModel):
    arrays_file: str
    grid_size: Tuple[int, int]
    num_image_tokens: int
    num_points: int
    num_frames: int
    entries: List[AttentionProbeEntry] = Field(default_factory=list)
