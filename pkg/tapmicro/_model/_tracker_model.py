import time
from typing import Iterable, Optional, Sequence, Tuple

import torch
from torch import nn

from tapmicro._models import ModelConfig
from tapmicro._policies._base import BaseOcclusionPolicy
from tapmicro._policies._occlusion import occlusion_policy_for
from tapmicro._types import BackboneOutput, HeadOutput, QueryPoint, StreamPrediction, TrackPrediction, queries_to_tensor

from ._backbone import Backbone, QueryInput, StreamingState
from ._heads import TrackHeads


class TrackerModel(nn.Module):
    """Backbone plus heads; the unit that is trained, checkpointed and run."""

    def __init__(self, config: ModelConfig, occlusion_policy: Optional[BaseOcclusionPolicy] = None):
        super().__init__()
        self.config = config
        self.backbone = Backbone(config)
        self.heads = TrackHeads(config)
        self.occlusion_policy = occlusion_policy or occlusion_policy_for(config)

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    @property
    def dtype(self) -> torch.dtype:
        return self.backbone.codec.mask_token.dtype

    def forward(
        self, video: torch.Tensor, queries: torch.Tensor, capture_attention_layers: Optional[Iterable[int]] = None
    ) -> BackboneOutput:
        return self.backbone(video, queries, capture_attention_layers)

    def decode(self, point_tokens: torch.Tensor) -> TrackPrediction:
        output: HeadOutput = self.heads(point_tokens)
        occluded, mass_in = self.occlusion_policy(output)
        return TrackPrediction(
            coords=output.coords,
            visible_prob=torch.sigmoid(output.visible_logit),
            occluded=occluded,
            mass_in_radius=mass_in,
            distribution=output.distribution,
        )

    @torch.no_grad()
    def track_offline(self, video: torch.Tensor, queries: Sequence[QueryPoint]) -> TrackPrediction:
        """Predictions [T, Q] for one clip [T, H, W, 3]."""
        out = self.backbone(video.to(self.dtype), queries_to_tensor(queries, self.dtype).to(video.device), ())
        return self.decode(out.point_tokens)

    def init_streaming(
        self, queries_at_t0: QueryInput = (), num_slots: Optional[int] = None
    ) -> StreamingState:
        return self.backbone.init_streaming(queries_at_t0, num_slots)

    @torch.no_grad()
    def stream_step(
        self, state: StreamingState, frame: torch.Tensor, new_queries: QueryInput = ()
    ) -> Tuple[StreamingState, StreamPrediction]:
        """Advance the stream by one frame; the wall time of the step is appended to `state.step_times`."""
        start = time.perf_counter()
        frame_index = state.frame_index
        state, slot_tokens = self.backbone.stream_step(state, frame.to(self.dtype), new_queries)
        active = state.active_slots
        prediction = self.decode(slot_tokens[active])
        state.step_times.append(time.perf_counter() - start)
        return state, StreamPrediction(
            frame_index=frame_index,
            query_ids=[state.slot_ids[i] for i in active],
            coords=prediction.coords,
            visible_prob=prediction.visible_prob,
            occluded=prediction.occluded,
            mass_in_radius=prediction.mass_in_radius,
        )
