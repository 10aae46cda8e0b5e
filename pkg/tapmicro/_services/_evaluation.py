import os
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from tapmicro._exceptions import MetricError, UnsupportedModeError
from tapmicro._metrics import EvalRecords, compute_metrics, evaluation_mask
from tapmicro._model import TrackerModel
from tapmicro._model._spatial import split_attention_quadrants
from tapmicro._models import AttentionProbeEntry, AttentionProbeIndex, EvalConfig, MetricsReport
from tapmicro._types import (
    AttentionQuadrants,
    GroundTruth,
    QueryBatch,
    QueryPoint,
    TrackPrediction,
    VideoClip,
    queries_to_tensor,
)
from tapmicro._utils import logger

from ._query_sampling import first_frame_queries, frame_zero_queries, strided_queries

Predictor = Callable[[VideoClip, List[QueryPoint]], TrackPrediction]

QUADRANTS = ("point_to_image", "point_to_point", "image_to_image", "image_to_point")


####################################################################################################
# Support points
####################################################################################################


def build_support_grid(
    query: QueryPoint, local_size: int, local_radius: float, global_size: int, height: int, width: int
) -> List[QueryPoint]:
    """The query followed by an m x m global lattice over the frame and a k x k local lattice around the query.

    The global lattice sits at cell centers; the local one spans a square of side 2 * local_radius centered on the
    query. Every point shares the query's frame and is clamped into the frame.
    """
    points = [query]
    if global_size > 0:
        xs = (np.arange(global_size) + 0.5) * width / global_size
        ys = (np.arange(global_size) + 0.5) * height / global_size
        points += [QueryPoint(t=query.t, x=float(x), y=float(y)) for y in ys for x in xs]
    if local_size > 0:
        offsets = np.linspace(-local_radius, local_radius, local_size) if local_size > 1 else np.zeros(1)
        for dy in offsets:
            for dx in offsets:
                points.append(
                    QueryPoint(
                        t=query.t,
                        x=float(np.clip(query.x + dx, 0.0, width)),
                        y=float(np.clip(query.y + dy, 0.0, height)),
                    )
                )
    return points


####################################################################################################
# Tracking protocols
####################################################################################################


def _stack_predictions(parts: List[TrackPrediction]) -> TrackPrediction:
    return TrackPrediction(
        coords=torch.cat([p.coords for p in parts], dim=-3),
        visible_prob=torch.cat([p.visible_prob for p in parts], dim=-2),
        occluded=torch.cat([p.occluded for p in parts], dim=-2),
        mass_in_radius=torch.cat([p.mass_in_radius for p in parts], dim=-2),
    )


def track_streaming(model: TrackerModel, video: torch.Tensor, queries: Sequence[QueryPoint]) -> TrackPrediction:
    """Frame-by-frame predictions [T, Q] for t = 0 queries, emitted as each frame is consumed."""
    state = model.init_streaming(list(queries))
    rows: List[TrackPrediction] = []
    for frame in video:
        state, step = model.stream_step(state, frame)
        rows.append(
            TrackPrediction(
                coords=step.coords[None],
                visible_prob=step.visible_prob[None],
                occluded=step.occluded[None],
                mass_in_radius=step.mass_in_radius[None],
            )
        )
    return _stack_predictions(rows)


def _causal_pass(model: TrackerModel, video: torch.Tensor, queries: Sequence[QueryPoint]) -> TrackPrediction:
    if model.config.temporal_block == "ssm":
        return track_streaming(model, video, queries)
    return model.track_offline(video, list(queries))


def _strided_group(model: TrackerModel, video: torch.Tensor, xy: List[Tuple[float, float]], t: int) -> TrackPrediction:
    anchors = [QueryPoint(t=0, x=x, y=y) for x, y in xy]
    forward = _causal_pass(model, video[t:], anchors)
    if t == 0:
        return forward
    backward = _causal_pass(model, torch.flip(video[: t + 1], dims=[0]), anchors)
    # Backward row k is frame t - k; row 0 repeats the query frame and the forward value is kept there.
    earlier = TrackPrediction(
        coords=torch.flip(backward.coords[1:], dims=[0]),
        visible_prob=torch.flip(backward.visible_prob[1:], dims=[0]),
        occluded=torch.flip(backward.occluded[1:], dims=[0]),
        mass_in_radius=torch.flip(backward.mass_in_radius[1:], dims=[0]),
    )
    return _stack_predictions([earlier, forward])


def _scatter_columns(target: TrackPrediction, columns: List[int], source: TrackPrediction) -> None:
    index = torch.tensor(columns, dtype=torch.long)
    target.coords[:, index] = source.coords.to(target.coords.dtype)
    target.visible_prob[:, index] = source.visible_prob.to(target.visible_prob.dtype)
    target.occluded[:, index] = source.occluded
    target.mass_in_radius[:, index] = source.mass_in_radius.to(target.mass_in_radius.dtype)


def _empty_prediction(num_frames: int, num_queries: int, dtype: torch.dtype) -> TrackPrediction:
    return TrackPrediction(
        coords=torch.zeros((num_frames, num_queries, 2), dtype=dtype),
        visible_prob=torch.zeros((num_frames, num_queries), dtype=dtype),
        occluded=torch.ones((num_frames, num_queries), dtype=torch.bool),
        mass_in_radius=torch.zeros((num_frames, num_queries), dtype=dtype),
    )


def track_strided(
    model: TrackerModel,
    video: torch.Tensor,
    queries: Sequence[QueryPoint],
    config: Optional[EvalConfig] = None,
) -> TrackPrediction:
    """Full-length tracks [T, Q] for queries at any frame, using a causal model forwards and backwards in time.

    Queries sharing a frame are tracked jointly; with support points or one-point-at-a-time each query is tracked
    on its own (with its support grid) and the support predictions are dropped.
    """
    config = config or EvalConfig(query_mode="strided")
    num_frames = video.shape[0]
    height, width = model.config.image_size
    result = _empty_prediction(num_frames, len(queries), model.dtype)

    if config.use_support_points or config.one_point_at_a_time:
        radius = config.support_local_radius * min(height, width)
        for column, query in enumerate(queries):
            points = [query]
            if config.use_support_points:
                points = build_support_grid(
                    query, config.support_local_size, radius, config.support_global_size, height, width
                )
            tracked = _strided_group(model, video, [(p.x, p.y) for p in points], query.t)
            _scatter_columns(result, [column], _select_columns(tracked, [0]))
        return result

    by_frame: Dict[int, List[int]] = {}
    for column, query in enumerate(queries):
        by_frame.setdefault(query.t, []).append(column)
    for t, columns in sorted(by_frame.items()):
        tracked = _strided_group(model, video, [(queries[c].x, queries[c].y) for c in columns], t)
        _scatter_columns(result, columns, tracked)
    return result


def _select_columns(prediction: TrackPrediction, columns: List[int]) -> TrackPrediction:
    return TrackPrediction(
        coords=prediction.coords[:, columns],
        visible_prob=prediction.visible_prob[:, columns],
        occluded=prediction.occluded[:, columns],
        mass_in_radius=prediction.mass_in_radius[:, columns],
    )


def copy_query_baseline(clip: VideoClip, queries: List[QueryPoint]) -> TrackPrediction:
    """Predicts every query at its query coordinate in every frame, always visible."""
    xy = torch.tensor([[q.x, q.y] for q in queries], dtype=torch.float32).reshape(-1, 2)
    num_frames = clip.num_frames
    return TrackPrediction(
        coords=xy[None].expand(num_frames, -1, -1).clone(),
        visible_prob=torch.ones((num_frames, len(queries))),
        occluded=torch.zeros((num_frames, len(queries)), dtype=torch.bool),
        mass_in_radius=torch.ones((num_frames, len(queries))),
    )


def model_predictor(model: TrackerModel, config: EvalConfig) -> Predictor:
    """Offline tracking for query-first protocols, forward/backward causal tracking for strided ones."""

    def _predict(clip: VideoClip, queries: List[QueryPoint]) -> TrackPrediction:
        video = clip.to_tensor(model.dtype)
        if config.query_mode == "strided" or config.use_support_points or config.one_point_at_a_time:
            return track_strided(model, video, queries, config)
        return model.track_offline(video, queries)

    return _predict


####################################################################################################
# Evaluation
####################################################################################################


def _queries_for(gt: GroundTruth, config: EvalConfig) -> QueryBatch:
    if config.query_mode == "t0":
        return frame_zero_queries(gt)
    if config.query_mode == "strided":
        return strided_queries(gt, config.query_stride)
    return first_frame_queries(gt)


def evaluation_records(
    clip: VideoClip, gt: GroundTruth, prediction: TrackPrediction, batch: QueryBatch, config: EvalConfig, name=None
) -> EvalRecords:
    query_frames = np.array([q.t for q in batch.queries], dtype=np.int64)
    mode = "strided" if config.query_mode == "strided" else "first"
    return EvalRecords.for_clip(
        pred_tracks=prediction.coords.detach().cpu().numpy(),
        pred_visible=~prediction.occluded.cpu().numpy(),
        gt_tracks=batch.target_coords,
        gt_visible=batch.target_visible,
        mask=evaluation_mask(query_frames, clip.num_frames, mode),
        clip_size=(clip.height, clip.width),
        eval_resolution=config.eval_resolution,
        name=name,
    )


def evaluate_clips(
    model: Optional[TrackerModel],
    clips: Sequence[Tuple[VideoClip, GroundTruth]],
    config: Optional[EvalConfig] = None,
    predictor: Optional[Predictor] = None,
    show_progress: bool = False,
) -> MetricsReport:
    """Track the protocol's queries on every clip and aggregate the metrics per video, then over videos."""
    config = config or EvalConfig()
    if predictor is None:
        if model is None:
            raise MetricError("Either a model or a predictor is required.")
        predictor = model_predictor(model, config)

    records: List[EvalRecords] = []
    for index, (clip, gt) in enumerate(tqdm(clips, desc="Evaluating", disable=not show_progress)):
        batch = _queries_for(gt, config)
        if batch.num_queries == 0:
            logger.warning(f"Clip {index} has no queries under the '{config.query_mode}' protocol; skipping it.")
            continue
        prediction = predictor(clip, batch.queries)
        records.append(evaluation_records(clip, gt, prediction, batch, config, name=str(index)))
    return compute_metrics(records, config.thresholds)


####################################################################################################
# Attention probe
####################################################################################################


def attention_probe(
    model: TrackerModel,
    video: torch.Tensor,
    queries: Sequence[QueryPoint],
    layers: Optional[Sequence[int]] = None,
    heads: Optional[Sequence[int]] = None,
) -> Dict[Tuple[int, int], AttentionQuadrants]:
    """Spatial attention of the selected layers and heads, split into quadrants laid out [T, ...].

    Without explicit layers the model's configured capture layers are used.
    """
    if layers is None:
        layers = model.config.attention_capture_layers
        if not layers:
            raise UnsupportedModeError("Attention capture is disabled: no layers configured or selected.")
    layers = list(layers)
    if not layers:
        return {}
    for layer in layers:
        if not 0 <= layer < model.config.num_layers:
            raise UnsupportedModeError(f"Layer {layer} outside [0, {model.config.num_layers})")
    heads = list(range(model.config.num_heads)) if heads is None else list(heads)
    for head in heads:
        if not 0 <= head < model.config.num_heads:
            raise UnsupportedModeError(f"Head {head} outside [0, {model.config.num_heads})")

    with torch.no_grad():
        output = model(video.to(model.dtype), queries_to_tensor(list(queries), model.dtype), layers)
    num_image_tokens = output.image_tokens.shape[-2]
    probe: Dict[Tuple[int, int], AttentionQuadrants] = {}
    for layer in layers:
        attn = output.attention[layer]  # [T, heads, N, N]
        for head in heads:
            probe[(layer, head)] = split_attention_quadrants(attn[:, head], num_image_tokens, len(queries))
    return probe


def save_attention_probe(
    directory: str,
    probe: Dict[Tuple[int, int], AttentionQuadrants],
    grid_size: Tuple[int, int],
    num_points: int,
    num_frames: int,
    name: str = "attention",
) -> Tuple[str, str]:
    """One `.npz` array per (layer, head, quadrant) plus a JSON index describing them."""
    os.makedirs(directory, exist_ok=True)
    arrays_path = os.path.join(directory, f"{name}.npz")
    index_path = os.path.join(directory, f"{name}.json")
    arrays: Dict[str, np.ndarray] = {}
    index = AttentionProbeIndex(
        arrays_file=os.path.basename(arrays_path),
        grid_size=grid_size,
        num_image_tokens=grid_size[0] * grid_size[1],
        num_points=num_points,
        num_frames=num_frames,
    )
    for (layer, head), quadrants in sorted(probe.items()):
        for quadrant in QUADRANTS:
            key = f"layer{layer}_head{head}_{quadrant}"
            array = getattr(quadrants, quadrant).detach().cpu().numpy()
            arrays[key] = array
            index.entries.append(
                AttentionProbeEntry(key=key, layer=layer, head=head, quadrant=quadrant, shape=list(array.shape))
            )
    np.savez(arrays_path, **arrays)
    with open(index_path, "w") as f:
        f.write(index.model_dump_json(indent=2))
    logger.debug(f"Saved {len(arrays)} attention arrays to '{arrays_path}'.")
    return arrays_path, index_path
