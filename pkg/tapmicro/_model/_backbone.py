from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import torch
from torch import nn

from tapmicro._exceptions import DimensionMismatchError, InvalidQueryError, UnsupportedModeError
from tapmicro._models import ModelConfig
from tapmicro._types import BackboneOutput, QueryPoint
from tapmicro._utils import logger

from ._codec import TokenCodec
from ._recurrent import RecurrentBlock, RecurrentState
from ._spatial import SpatialBlock
from ._temporal_attention import TemporalAttentionBlock

QueryInput = Union[Sequence[QueryPoint], Mapping[Hashable, QueryPoint]]

STEP_TIMES_WINDOW = 1024


class TapLayer(nn.Module):
    """One temporal block (over T, tubes as batch) followed by one spatial block (over tokens, frames as batch)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.temporal_block == "ssm":
            self.temporal: nn.Module = RecurrentBlock(config)
        else:
            self.temporal = TemporalAttentionBlock(config)
        self.spatial = SpatialBlock(config)


@dataclass
class StreamingState:
    """Everything a stream carries between frames: one recurrent state per layer over hw + num_slots tubes."""

    layer_states: List[RecurrentState]
    slot_queries: torch.Tensor  # [S, 3] (t, x, y); t < 0 marks a free slot
    slot_ids: List[Optional[Hashable]]
    num_image_tokens: int
    frame_index: int = 0
    next_auto_id: int = field(default=0)
    step_times: Deque[float] = field(default_factory=lambda: deque(maxlen=STEP_TIMES_WINDOW))  # seconds per frame

    @property
    def num_slots(self) -> int:
        return len(self.slot_ids)

    @property
    def active_slots(self) -> List[int]:
        return [i for i, qid in enumerate(self.slot_ids) if qid is not None]

    def free_slots(self) -> List[int]:
        return [i for i, qid in enumerate(self.slot_ids) if qid is None]


class Backbone(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.codec = TokenCodec(config)
        self.layers = nn.ModuleList([TapLayer(config) for _ in range(config.num_layers)])

    def run_layers(
        self, tokens: torch.Tensor, num_image_tokens: int, capture_attention_layers: Iterable[int] = ()
    ) -> BackboneOutput:
        capture = set(capture_attention_layers)
        per_layer = []
        attention = {}
        for i, layer in enumerate(self.layers):
            tokens, _ = layer.temporal(tokens)
            tokens, attn = layer.spatial(tokens, capture_attention=i in capture)
            if attn is not None:
                attention[i] = attn
            per_layer.append(tokens[..., num_image_tokens:, :])
        return BackboneOutput(
            per_layer_point_tokens=torch.stack(per_layer),
            image_tokens=tokens[..., :num_image_tokens, :],
            attention=attention,
        )

    def forward(
        self, video: torch.Tensor, queries: torch.Tensor, capture_attention_layers: Optional[Iterable[int]] = None
    ) -> BackboneOutput:
        """Offline pass over a whole clip [..., T, H, W, 3] with queries [..., Q, 3]."""
        if capture_attention_layers is None:
            capture_attention_layers = self.config.attention_capture_layers
        grid = self.codec(video, queries.to(video.dtype))
        return self.run_layers(grid.tokens, grid.num_image_tokens, capture_attention_layers)

    ################################################################################################
    # Streaming
    ################################################################################################

    def _check_streamable(self) -> None:
        if self.config.temporal_block != "ssm":
            raise UnsupportedModeError("Streaming needs recurrent temporal blocks; temporal attention is offline-only.")

    def _validate_query(self, query: QueryPoint) -> None:
        height, width = self.config.image_size
        if not (0.0 <= query.x <= width and 0.0 <= query.y <= height):
            raise InvalidQueryError(f"Query {query} outside the {width}x{height} frame")

    def init_streaming(
        self, queries_at_t0: QueryInput = (), num_slots: Optional[int] = None, dtype: Optional[torch.dtype] = None
    ) -> StreamingState:
        """Zero recurrent states for hw image tubes and `num_slots` point tubes, with the t = 0 queries placed.

        Slots left free carry mask tokens until a later query takes them.
        """
        self._check_streamable()
        dtype = dtype or self.codec.mask_token.dtype
        device = self.codec.mask_token.device
        items = list(_query_items(queries_at_t0, 0))
        for _, query in items:
            if query.t != 0:
                raise InvalidQueryError(f"Only t = 0 queries can open a stream, got {query}")
            self._validate_query(query)

        num_slots = len(items) if num_slots is None else num_slots
        if num_slots < len(items):
            raise InvalidQueryError(f"{len(items)} queries do not fit in {num_slots} slots")

        slot_queries = torch.full((num_slots, 3), -1.0, dtype=dtype, device=device)
        slot_ids: List[Optional[Hashable]] = [None] * num_slots
        for slot, (qid, query) in enumerate(items):
            slot_queries[slot] = torch.tensor(query.as_row(), dtype=dtype)
            slot_ids[slot] = qid

        hw = self.codec.num_image_tokens
        layer_states = [
            layer.temporal.initial_state((hw + num_slots,), dtype=dtype, device=device) for layer in self.layers
        ]
        return StreamingState(
            layer_states=layer_states,
            slot_queries=slot_queries,
            slot_ids=slot_ids,
            num_image_tokens=hw,
            next_auto_id=0 if isinstance(queries_at_t0, Mapping) else len(items),
        )

    def _place_queries(self, state: StreamingState, new_queries: QueryInput) -> StreamingState:
        items = list(_query_items(new_queries, state.next_auto_id))
        if not items:
            return state
        known = set(state.slot_ids)
        for qid, query in items:
            if query.t != state.frame_index:
                when = "late" if query.t < state.frame_index else "early"
                raise InvalidQueryError(f"Query {qid!r} at t={query.t} is {when} for frame {state.frame_index}")
            if qid in known:
                raise InvalidQueryError(f"Query id {qid!r} is already tracked")
            self._validate_query(query)

        free = state.free_slots()
        missing = len(items) - len(free)
        slot_queries = state.slot_queries.clone()
        slot_ids = list(state.slot_ids)
        layer_states = state.layer_states
        if missing > 0:
            logger.warning(
                f"Stream has {len(free)} free slots for {len(items)} new queries; adding {missing} tubes at frame "
                f"{state.frame_index}. Reserve slots at init to match offline predictions."
            )
            first_new = len(slot_ids)
            slot_queries = torch.cat([slot_queries, slot_queries.new_full((missing, 3), -1.0)])
            slot_ids += [None] * missing
            layer_states = [s.append_tubes(missing) for s in layer_states]
            free = free + list(range(first_new, first_new + missing))

        for slot, (qid, query) in zip(free, items):
            slot_queries[slot] = torch.tensor(query.as_row(), dtype=slot_queries.dtype)
            slot_ids[slot] = qid
        return StreamingState(
            layer_states=layer_states,
            slot_queries=slot_queries,
            slot_ids=slot_ids,
            num_image_tokens=state.num_image_tokens,
            frame_index=state.frame_index,
            next_auto_id=state.next_auto_id + (0 if isinstance(new_queries, Mapping) else len(items)),
            step_times=state.step_times,
        )

    def stream_step(
        self, state: StreamingState, frame: torch.Tensor, new_queries: QueryInput = ()
    ) -> Tuple[StreamingState, torch.Tensor]:
        """Advance every tube by one frame [H, W, 3]; returns the new state and last-layer slot tokens [S, C]."""
        self._check_streamable()
        if frame.ndim != 3 or tuple(frame.shape[:2]) != tuple(self.config.image_size):
            raise DimensionMismatchError(f"Expected a frame of {self.config.image_size} x 3, got {tuple(frame.shape)}")
        state = self._place_queries(state, new_queries)

        dtype = state.slot_queries.dtype
        image_tokens = self.codec.embed_frames(frame[None].to(dtype))
        frames = torch.tensor([state.frame_index], device=state.slot_queries.device)
        point_tokens = self.codec.point_tokens(state.slot_queries, frames).to(dtype)
        tokens = torch.cat([image_tokens, point_tokens], dim=-2)

        layer_states = []
        for layer, layer_state in zip(self.layers, state.layer_states):
            tokens, layer_state = layer.temporal(tokens, state=layer_state, mode="step")
            tokens, _ = layer.spatial(tokens)
            layer_states.append(layer_state)

        new_state = StreamingState(
            layer_states=layer_states,
            slot_queries=state.slot_queries,
            slot_ids=state.slot_ids,
            num_image_tokens=state.num_image_tokens,
            frame_index=state.frame_index + 1,
            next_auto_id=state.next_auto_id,
            step_times=state.step_times,
        )
        return new_state, tokens[0, state.num_image_tokens :, :]


def _query_items(queries: QueryInput, first_id: int) -> Iterable[Tuple[Hashable, QueryPoint]]:
    if isinstance(queries, Mapping):
        return list(queries.items())
    return [(first_id + i, q) for i, q in enumerate(queries)]
