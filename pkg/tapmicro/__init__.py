"""Top-level package for tapmicro."""

__all__ = [
    "EvalConfig",
    "ModelConfig",
    "QueryPoint",
    "SceneSpec",
    "SyntheticClipSource",
    "TapMicro",
    "TrackStream",
    "TrainConfig",
    "VideoClip",
    "get_preset",
]

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Type

from tapmicro._model import TrackerModel
from tapmicro._models import EvalConfig, ModelConfig, SceneSpec, TrainConfig
from tapmicro._policies._base import BaseOcclusionPolicy
from tapmicro._presets import get_preset
from tapmicro._services import (
    BaseCheckpointManagerService,
    BaseClipSource,
    DefaultCheckpointManagerService,
    SyntheticClipSource,
)
from tapmicro._storage._namespace import Workspace
from tapmicro._types import GroundTruth, QueryPoint, VideoClip
from tapmicro._utils import set_seed

from ._tracker import BaseTracker, TrackStream


@dataclass
class TapMicro(BaseTracker):
    """A causal point tracker over a checkpoint workspace: resumes from the newest checkpoint when one exists."""

    @dataclass
    class Config:
        """Configuration for the TapMicro class."""

        model_config: ModelConfig = field(default_factory=lambda: get_preset("toy")[0])
        occlusion_policy: Optional[BaseOcclusionPolicy] = field(default=None)
        checkpoint_manager_cls: Type[BaseCheckpointManagerService] = field(default=DefaultCheckpointManagerService)
        seed: int = field(default=0)

    config: Config = field(default_factory=Config)

    def __post_init__(self):
        """Initialize the TapMicro class."""
        set_seed(self.config.seed)
        self.model = TrackerModel(self.config.model_config, self.config.occlusion_policy)
        self.checkpoint_manager = self.config.checkpoint_manager_cls(
            workspace=Workspace.new(self.working_dir, keep_n=self.n_checkpoints)
        )
        self.try_load()

    def train(
        self,
        source: BaseClipSource,
        config: TrainConfig,
        validation_clips: Sequence[Tuple[VideoClip, GroundTruth]] = (),
        metrics_path: Optional[str] = None,
        end_step: Optional[int] = None,
        show_progress: bool = True,
    ) -> Dict[str, float]:
        service = self.training_service(config, validation_clips, metrics_path, show_progress)
        service.resume()
        return service.train(self.batch_feed(source, config), end_step)

    def save(self) -> str:
        step = 0
        workspace = self.checkpoint_manager.workspace
        if workspace is not None and workspace.checkpoints:
            step = workspace.checkpoints[0]
        return self.checkpoint_manager.save(step, self.model, self.model.config)
