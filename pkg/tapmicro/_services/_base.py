from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import torch

from tapmicro._models import ModelConfig, TrainConfig
from tapmicro._storage._namespace import Workspace
from tapmicro._types import GroundTruth, VideoClip


@dataclass
class BaseClipSource:
    """Indexable collection of (clip, ground truth) pairs."""

    def __len__(self) -> int:
        raise NotImplementedError

    def get(self, index: int) -> Tuple[VideoClip, GroundTruth]:
        raise NotImplementedError


@dataclass
class Checkpoint:
    step: int
    model_config: ModelConfig
    parameters: Dict[str, torch.Tensor]
    train_config: Optional[TrainConfig] = field(default=None)
    metrics: Dict[str, float] = field(default_factory=dict)
    trainer_state: Optional[Dict[str, Any]] = field(default=None)


@dataclass
class BaseCheckpointManagerService:
    workspace: Optional[Workspace] = field(default=None)

    def save(
        self,
        step: int,
        model: torch.nn.Module,
        model_config: ModelConfig,
        train_config: Optional[TrainConfig] = None,
        metrics: Optional[Dict[str, float]] = None,
        trainer_state: Optional[Dict[str, Any]] = None,
    ) -> str:
        """Persist a checkpoint for `step` and return its directory."""
        raise NotImplementedError

    def load(self, with_trainer_state: bool = True) -> Checkpoint:
        """Load the newest readable checkpoint."""
        raise NotImplementedError
