"""Named model/training configurations."""

from typing import Any, Dict, Tuple

from tapmicro._exceptions import InvalidConfigError
from tapmicro._models import ModelConfig, TrainConfig, validate_config

PRESETS: Dict[str, Dict[str, Dict[str, Any]]] = {}

PRESETS["toy"] = {
    "model": {
        "num_layers": 4,
        "width": 128,
        "num_heads": 4,
        "lru_expansion": 2,
        "patch_size": 4,
        "image_size": (32, 32),
        "num_bins": 32,
        "softargmax_delta": 3,
        "temperature": 2.0,
        "pos_embed_resolution": 64,
    },
    "train": {"steps": 5000, "batch_size": 8, "queries_per_clip": 32, "num_clips": 2000, "peak_lr": 1e-3},
}

# Gradient-check scale.
PRESETS["tiny"] = {
    "model": {
        "num_layers": 2,
        "width": 32,
        "num_heads": 2,
        "patch_size": 4,
        "image_size": (16, 16),
        "num_bins": 16,
        "softargmax_delta": 3,
        "pos_embed_resolution": 32,
        "head_hidden": 32,
    },
    "train": {"steps": 100, "warmup_steps": 10, "batch_size": 2, "queries_per_clip": 4, "num_clips": 16},
}

PRESETS["small"] = {
    "model": {
        "num_layers": 12,
        "width": 384,
        "num_heads": 12,
        "lru_expansion": 2,
        "patch_size": 8,
        "image_size": (256, 256),
        "num_bins": 256,
        "softargmax_delta": 20,
        "temperature": 2.0,
        "pos_embed_resolution": 256,
    },
    "train": {
        "steps": 300000,
        "warmup_steps": 2500,
        "peak_lr": 1e-3,
        "batch_size": 256,
        "queries_per_clip": 256,
        "num_clips": 500000,
    },
}

PRESETS["base"] = {
    "model": {**PRESETS["small"]["model"], "width": 768, "lru_expansion": 1},
    "train": {**PRESETS["small"]["train"], "peak_lr": 5e-4},
}

# Ablations at toy scale.
PRESETS["toy-regression"] = {
    "model": {**PRESETS["toy"]["model"], "head_type": "regression"},
    "train": dict(PRESETS["toy"]["train"]),
}
PRESETS["toy-no-intermediate"] = {
    "model": dict(PRESETS["toy"]["model"]),
    "train": {**PRESETS["toy"]["train"], "loss": {"intermediate_losses": False}},
}
PRESETS["toy-classification-only"] = {
    "model": dict(PRESETS["toy"]["model"]),
    "train": {**PRESETS["toy"]["train"], "loss": {"huber_x": 0.0, "huber_y": 0.0}},
}
PRESETS["toy-patch16"] = {
    "model": {**PRESETS["toy"]["model"], "patch_size": 16},
    "train": dict(PRESETS["toy"]["train"]),
}
PRESETS["toy-attention"] = {
    "model": {**PRESETS["toy"]["model"], "temporal_block": "attention"},
    "train": dict(PRESETS["toy"]["train"]),
}
PRESETS["toy-expansion1"] = {
    "model": {**PRESETS["toy"]["model"], "lru_expansion": 1},
    "train": dict(PRESETS["toy"]["train"]),
}


def get_preset(name: str, **train_overrides: Any) -> Tuple[ModelConfig, TrainConfig]:
    """Resolve a preset name into validated model and training configurations."""
    if name not in PRESETS:
        raise InvalidConfigError(f"Unknown preset '{name}'. Available: {', '.join(sorted(PRESETS))}")
    preset = PRESETS[name]
    model_config = validate_config(ModelConfig, dict(preset["model"]))
    train_config = validate_config(TrainConfig, {**preset["train"], "preset": name, **train_overrides})
    return model_config, train_config
