import threading
from dataclasses import dataclass, field
from queue import Queue
from typing import Iterator, List, Optional, Tuple

import numpy as np
import torch

from tapmicro._exceptions import GenerationError
from tapmicro._losses import LossTargets
from tapmicro._models import SceneSpec, TrainConfig
from tapmicro._storage._clip_files import GT_SUFFIX, list_clips, read_clip, read_ground_truth
from tapmicro._types import GroundTruth, QueryBatch, VideoClip
from tapmicro._utils import derive_seed, logger

from ._base import BaseClipSource
from ._query_sampling import sample_queries
from ._synthetic_data import generate_clip


@dataclass
class SyntheticClipSource(BaseClipSource):
    """Clip i is rendered from `scene` with its own seed derived from (scene.seed, i)."""

    scene: SceneSpec = field(default_factory=SceneSpec)
    num_clips: int = field(default=2000)

    def __len__(self) -> int:
        return self.num_clips

    def spec_for(self, index: int) -> SceneSpec:
        return self.scene.model_copy(update={"seed": derive_seed(self.scene.seed, index)})

    def get(self, index: int) -> Tuple[VideoClip, GroundTruth]:
        return generate_clip(self.spec_for(index))


@dataclass
class DirectoryClipSource(BaseClipSource):
    directory: str = field(default="")
    _stems: List[str] = field(init=False, default_factory=list)

    def __post_init__(self):
        self._stems = list_clips(self.directory)
        if not self._stems:
            raise GenerationError(f"No clips found in '{self.directory}'.")

    def __len__(self) -> int:
        return len(self._stems)

    def get(self, index: int) -> Tuple[VideoClip, GroundTruth]:
        clip, sidecar = read_clip(self._stems[index])
        return clip, read_ground_truth(self._stems[index] + GT_SUFFIX, sidecar.num_frames)


@dataclass
class TrainingBatch:
    video: torch.Tensor  # [B, T, H, W, 3]
    queries: torch.Tensor  # [B, Q, 3]
    targets: LossTargets

    def to(self, dtype: torch.dtype) -> "TrainingBatch":
        return TrainingBatch(
            video=self.video.to(dtype),
            queries=self.queries.to(dtype),
            targets=LossTargets(
                coords=self.targets.coords.to(dtype),
                visible=self.targets.visible.to(dtype),
                coord_mask=self.targets.coord_mask,
            ),
        )


def collate(clips: List[VideoClip], query_batches: List[QueryBatch]) -> TrainingBatch:
    return TrainingBatch(
        video=torch.from_numpy(np.stack([c.frames for c in clips])),
        queries=torch.from_numpy(np.stack([qb.query_array() for qb in query_batches])),
        targets=LossTargets(
            coords=torch.from_numpy(np.stack([qb.target_coords for qb in query_batches])),
            visible=torch.from_numpy(np.stack([qb.visibility_target for qb in query_batches])),
            coord_mask=torch.from_numpy(np.stack([qb.coord_loss_mask & qb.target_visible for qb in query_batches])),
        ),
    )


@dataclass
class BatchFeed:
    """Training batches whose content depends only on (seed, step), produced ahead of the consumer.

    The producer thread blocks once `config.prefetch` batches wait unconsumed.
    """

    source: BaseClipSource = field()
    config: TrainConfig = field()
    max_attempts: int = field(default=32)

    def make_batch(self, step: int) -> TrainingBatch:
        rng = np.random.default_rng(derive_seed(self.config.seed, step))
        clips: List[VideoClip] = []
        query_batches: List[QueryBatch] = []
        for b in range(self.config.batch_size):
            for attempt in range(self.max_attempts):
                index = int(rng.integers(len(self.source)))
                clip, gt = self.source.get(index)
                try:
                    qb = sample_queries(
                        gt,
                        self.config.queries_per_clip,
                        self.config.t0_probability,
                        derive_seed(self.config.seed, step, b, attempt),
                    )
                except GenerationError:
                    logger.debug(f"Clip {index} has no visible points; drawing another for step {step}.")
                    continue
                clips.append(clip)
                query_batches.append(qb)
                break
            else:
                raise GenerationError(f"No usable clip found for step {step} after {self.max_attempts} attempts.")
        return collate(clips, query_batches)

    def iterate(self, start_step: int, end_step: int) -> Iterator[Tuple[int, TrainingBatch]]:
        if self.config.prefetch <= 0:
            for step in range(start_step, end_step):
                yield step, self.make_batch(step)
            return

        channel: "Queue[Tuple[int, Optional[TrainingBatch], Optional[BaseException]]]" = Queue(
            maxsize=self.config.prefetch
        )
        stop = threading.Event()

        def _produce():
            for step in range(start_step, end_step):
                if stop.is_set():
                    return
                try:
                    channel.put((step, self.make_batch(step), None))
                except BaseException as e:  # surfaced to the consumer
                    channel.put((step, None, e))
                    return

        producer = threading.Thread(target=_produce, daemon=True, name="tapmicro-batch-feed")
        producer.start()
        try:
            for _ in range(start_step, end_step):
                step, batch, error = channel.get()
                if error is not None:
                    raise error
                assert batch is not None
                yield step, batch
        finally:
            stop.set()
            while not channel.empty():
                channel.get_nowait()
