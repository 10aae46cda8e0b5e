from typing import List

import numpy as np

from tapmicro._exceptions import GenerationError
from tapmicro._types import GroundTruth, QueryBatch, QueryPoint
from tapmicro._utils import logger


def build_query_batch(gt: GroundTruth, point_ids: np.ndarray, query_frames: np.ndarray) -> QueryBatch:
    """Queries at the given (point, frame) pairs plus the targets and masks they induce."""
    num_frames = gt.tracks.shape[0]
    point_ids = np.asarray(point_ids, dtype=np.int64)
    query_frames = np.asarray(query_frames, dtype=np.int64)
    queries = [
        QueryPoint(t=int(t), x=float(gt.tracks[t, p, 0]), y=float(gt.tracks[t, p, 1]))
        for p, t in zip(point_ids, query_frames)
    ]
    target_visible = gt.visible[:, point_ids]
    coord_loss_mask = np.arange(num_frames)[:, None] >= query_frames[None, :]
    return QueryBatch(
        queries=queries,
        point_ids=point_ids,
        target_coords=gt.tracks[:, point_ids].astype(np.float32),
        target_visible=target_visible,
        coord_loss_mask=coord_loss_mask,
        visibility_target=(target_visible & coord_loss_mask).astype(np.float32),
    )


def sample_queries(gt: GroundTruth, num_queries: int, t0_probability: float, seed: int) -> QueryBatch:
    """Draw queries at visible cells: frame 0 with probability `t0_probability`, otherwise a later visible frame.

    When one component has no candidates the other one is used.
    """
    rng = np.random.default_rng(seed)
    first_frame = np.flatnonzero(gt.visible[0]) if gt.visible.shape[0] > 0 else np.zeros(0, dtype=np.int64)
    later = np.argwhere(gt.visible[1:])  # rows of (t - 1, point)
    if first_frame.size == 0 and later.shape[0] == 0:
        raise GenerationError("No visible points to sample queries from.")
    if first_frame.size == 0 or later.shape[0] == 0:
        logger.debug("Only one query component has candidates; sampling all queries from it.")

    point_ids: List[int] = []
    frames: List[int] = []
    for _ in range(num_queries):
        use_first = rng.random() < t0_probability
        if (use_first and first_frame.size > 0) or later.shape[0] == 0:
            point_ids.append(int(rng.choice(first_frame)))
            frames.append(0)
        else:
            t, p = later[rng.integers(later.shape[0])]
            point_ids.append(int(p))
            frames.append(int(t) + 1)
    return build_query_batch(gt, np.array(point_ids), np.array(frames))


def first_frame_queries(gt: GroundTruth) -> QueryBatch:
    """One query per track, at the track's first visible frame; tracks never visible are skipped."""
    visible_any = gt.visible.any(axis=0)
    point_ids = np.flatnonzero(visible_any)
    frames = np.argmax(gt.visible[:, point_ids], axis=0) if point_ids.size else np.zeros(0, dtype=np.int64)
    return build_query_batch(gt, point_ids, frames)


def frame_zero_queries(gt: GroundTruth) -> QueryBatch:
    """One query per track visible in frame 0, at frame 0."""
    if gt.visible.shape[0] == 0:
        return build_query_batch(gt, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    point_ids = np.flatnonzero(gt.visible[0])
    return build_query_batch(gt, point_ids, np.zeros_like(point_ids))


def strided_queries(gt: GroundTruth, stride: int = 5) -> QueryBatch:
    """A query at every `stride`-th frame where the track is visible; a track may yield several queries."""
    frames = np.arange(0, gt.visible.shape[0], stride)
    rows = np.argwhere(gt.visible[frames])  # (frame slot, point)
    return build_query_batch(gt, rows[:, 1], frames[rows[:, 0]])
