from dataclasses import dataclass, field
from typing import Any, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import torch

from tapmicro._exceptions import DimensionMismatchError, InvalidQueryError, InvalidVideoError

####################################################################################################
# Videos and queries
####################################################################################################


@dataclass(frozen=True)
class QueryPoint:
    """A point to track, given at frame `t` in pixel coordinates (x horizontal, y vertical)."""

    t: int
    x: float
    y: float

    def as_row(self) -> Tuple[float, float, float]:
        return float(self.t), float(self.x), float(self.y)


def queries_to_tensor(queries: Sequence[QueryPoint], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Pack query points into a [Q, 3] tensor of (t, x, y) rows."""
    if len(queries) == 0:
        return torch.zeros((0, 3), dtype=dtype)
    return torch.tensor([q.as_row() for q in queries], dtype=dtype)


@dataclass
class VideoClip:
    """RGB frames in [0, 1], laid out [T, H, W, 3]."""

    frames: npt.NDArray[np.float32]

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise DimensionMismatchError(f"Expected frames of shape [T, H, W, 3], got {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise InvalidVideoError("Frames contain non-finite values.")
        if self.frames.size and (self.frames.min() < 0.0 or self.frames.max() > 1.0):
            raise InvalidVideoError(
                f"Frame values must lie in [0, 1], got [{self.frames.min():.4g}, {self.frames.max():.4g}]."
            )

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        return torch.from_numpy(np.ascontiguousarray(self.frames)).to(dtype)

    def to_uint8(self) -> npt.NDArray[np.uint8]:
        return np.clip(np.round(self.frames * 255.0), 0, 255).astype(np.uint8)

    def validate_queries(self, queries: Sequence[QueryPoint]) -> None:
        for q in queries:
            if not (0 <= q.t < self.num_frames and 0.0 <= q.x <= self.width and 0.0 <= q.y <= self.height):
                raise InvalidQueryError(
                    f"Query {q} outside clip of {self.num_frames} frames at {self.width}x{self.height}."
                )


@dataclass
class GroundTruth:
    """Analytic tracks [T, P, 2] (x, y) and visibility [T, P] for the points of a clip."""

    tracks: npt.NDArray[np.float32]
    visible: npt.NDArray[np.bool_]

    @property
    def num_points(self) -> int:
        return self.tracks.shape[1]


@dataclass
class QueryBatch:
    """Queries sampled from one clip with the per-cell training targets they induce, laid out [T, Q].

    `coord_loss_mask` is false exactly before each query frame. `visibility_target` is the ground-truth
    visibility forced to 0 before the query frame; `target_visible` is the untouched ground truth.
    """

    queries: List[QueryPoint]
    point_ids: npt.NDArray[np.int64]
    target_coords: npt.NDArray[np.float32]
    target_visible: npt.NDArray[np.bool_]
    coord_loss_mask: npt.NDArray[np.bool_]
    visibility_target: npt.NDArray[np.float32]

    @property
    def num_queries(self) -> int:
        return len(self.queries)

    def query_array(self) -> npt.NDArray[np.float32]:
        return np.array([q.as_row() for q in self.queries], dtype=np.float32).reshape(-1, 3)


####################################################################################################
# Model outputs
####################################################################################################


@dataclass
class TokenGrid:
    """Image tokens followed by point tokens along the token axis: [..., T, hw + Q, C]."""

    tokens: torch.Tensor
    num_image_tokens: int

    @property
    def image_tokens(self) -> torch.Tensor:
        return self.tokens[..., : self.num_image_tokens, :]

    @property
    def point_tokens(self) -> torch.Tensor:
        return self.tokens[..., self.num_image_tokens :, :]


@dataclass
class CoordinateDistribution:
    """Per-axis bin probabilities (tempered) and the raw logits they came from."""

    p_x: torch.Tensor
    p_y: torch.Tensor
    logits_x: torch.Tensor
    logits_y: torch.Tensor


@dataclass
class HeadOutput:
    coords: torch.Tensor  # [..., 2]
    visible_logit: torch.Tensor  # [...]
    distribution: Optional[CoordinateDistribution] = field(default=None)


@dataclass
class TrackPrediction:
    """Per frame, per query predictions laid out [..., T, Q]."""

    coords: torch.Tensor  # [..., T, Q, 2]
    visible_prob: torch.Tensor  # [..., T, Q]
    occluded: torch.Tensor  # [..., T, Q] bool
    mass_in_radius: torch.Tensor  # [..., T, Q]
    distribution: Optional[CoordinateDistribution] = field(default=None)

    @property
    def num_frames(self) -> int:
        return self.coords.shape[-3]

    @property
    def num_queries(self) -> int:
        return self.coords.shape[-2]


@dataclass
class StreamPrediction:
    """Predictions emitted by one streaming step, keyed by query id."""

    frame_index: int
    query_ids: List[Hashable]
    coords: torch.Tensor  # [Q', 2]
    visible_prob: torch.Tensor  # [Q']
    occluded: torch.Tensor  # [Q']
    mass_in_radius: torch.Tensor  # [Q']

    def as_dict(self) -> Dict[Hashable, Dict[str, Any]]:
        return {
            qid: {
                "x": float(self.coords[i, 0]),
                "y": float(self.coords[i, 1]),
                "visible_prob": float(self.visible_prob[i]),
                "occluded": bool(self.occluded[i]),
                "mass_in_radius": float(self.mass_in_radius[i]),
            }
            for i, qid in enumerate(self.query_ids)
        }


@dataclass
class AttentionQuadrants:
    """The four blocks of a point-augmented attention map, any leading dims."""

    point_to_image: torch.Tensor
    point_to_point: torch.Tensor
    image_to_image: torch.Tensor
    image_to_point: torch.Tensor


@dataclass
class BackboneOutput:
    per_layer_point_tokens: torch.Tensor  # [L, ..., T, Q, C]
    image_tokens: torch.Tensor  # [..., T, hw, C]
    attention: Dict[int, torch.Tensor] = field(default_factory=dict)  # layer -> [..., T, heads, N, N]

    @property
    def point_tokens(self) -> torch.Tensor:
        return self.per_layer_point_tokens[-1]
