"""This module implements the user-facing point tracker: training, offline, streaming and strided tracking."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import torch

from tapmicro._exceptions import InvalidStorageError
from tapmicro._model import StreamingState, TrackerModel
from tapmicro._model._backbone import QueryInput
from tapmicro._models import EvalConfig, MetricsReport, TrainConfig
from tapmicro._services._base import BaseCheckpointManagerService
from tapmicro._services._data_feed import BaseClipSource, BatchFeed
from tapmicro._services._evaluation import evaluate_clips, track_strided
from tapmicro._services._training import TrainingService
from tapmicro._types import GroundTruth, QueryPoint, StreamPrediction, TrackPrediction, VideoClip
from tapmicro._utils import logger

VideoInput = Union[VideoClip, torch.Tensor]


def _as_tensor(video: VideoInput, dtype: torch.dtype) -> torch.Tensor:
    if isinstance(video, VideoClip):
        return video.to_tensor(dtype)
    return video.to(dtype)


@dataclass
class TrackStream:
    """A live stream: push one frame at a time, get predictions for every active query right away."""

    model: TrackerModel
    state: StreamingState

    @property
    def frame_index(self) -> int:
        return self.state.frame_index

    @property
    def step_times(self) -> List[float]:
        """Seconds spent on each of the most recent frames."""
        return list(self.state.step_times)

    def push(self, frame: torch.Tensor, new_queries: QueryInput = ()) -> StreamPrediction:
        self.state, prediction = self.model.stream_step(self.state, frame, new_queries)
        return prediction


@dataclass
class BaseTracker:
    working_dir: str = field()
    n_checkpoints: int = field(default=3)

    model: TrackerModel = field(init=False)
    checkpoint_manager: BaseCheckpointManagerService = field(init=False, default_factory=BaseCheckpointManagerService)

    def track_offline(self, video: VideoInput, queries: Sequence[QueryPoint]) -> TrackPrediction:
        """Predictions [T, Q] for a whole clip, every query at its own frame."""
        self.model.eval()
        return self.model.track_offline(_as_tensor(video, self.model.dtype), list(queries))

    def open_stream(self, queries_at_t0: QueryInput = (), num_slots: Optional[int] = None) -> TrackStream:
        self.model.eval()
        return TrackStream(model=self.model, state=self.model.init_streaming(queries_at_t0, num_slots))

    def track_strided(
        self, video: VideoInput, queries: Sequence[QueryPoint], config: Optional[EvalConfig] = None
    ) -> TrackPrediction:
        self.model.eval()
        return track_strided(self.model, _as_tensor(video, self.model.dtype), list(queries), config)

    def evaluate(
        self, clips: Sequence[Tuple[VideoClip, GroundTruth]], config: Optional[EvalConfig] = None
    ) -> MetricsReport:
        self.model.eval()
        return evaluate_clips(self.model, clips, config)

    def train(
        self,
        source: BaseClipSource,
        config: TrainConfig,
        validation_clips: Sequence[Tuple[VideoClip, GroundTruth]] = (),
        metrics_path: Optional[str] = None,
        end_step: Optional[int] = None,
        show_progress: bool = True,
    ) -> Dict[str, float]:
        raise NotImplementedError

    def save(self) -> str:
        raise NotImplementedError

    def load(self) -> int:
        """Load the newest checkpoint into the model and return its step."""
        checkpoint = self.checkpoint_manager.load(with_trainer_state=False)
        if checkpoint.model_config != self.model.config:
            logger.warning("Checkpoint model configuration differs from the current one; rebuilding the model.")
            self.model = TrackerModel(checkpoint.model_config)
        self.model.load_state_dict(checkpoint.parameters)
        return checkpoint.step

    def try_load(self) -> Optional[int]:
        try:
            return self.load()
        except InvalidStorageError:
            logger.info(f"No checkpoint to load in '{self.working_dir}'; starting from fresh parameters.")
            return None

    def training_service(
        self,
        config: TrainConfig,
        validation_clips: Sequence[Tuple[VideoClip, GroundTruth]] = (),
        metrics_path: Optional[str] = None,
        show_progress: bool = True,
    ) -> TrainingService:
        return TrainingService(
            model=self.model,
            config=config,
            checkpoint_manager=self.checkpoint_manager,
            metrics_path=metrics_path,
            validation_clips=validation_clips,
            show_progress=show_progress,
        )

    def batch_feed(self, source: BaseClipSource, config: TrainConfig) -> BatchFeed:
        return BatchFeed(source=source, config=config)
