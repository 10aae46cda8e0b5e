"""Point tracking metrics: occlusion accuracy, position accuracy (delta avg) and average Jaccard.

Every metric is computed per video over the cells selected by the evaluation mask and then averaged over videos.
A video whose denominator is zero for a metric does not enter that metric's average.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from tapmicro._exceptions import DimensionMismatchError, MetricError
from tapmicro._models import MetricsReport

DEFAULT_THRESHOLDS: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
EVAL_EXTENT = 256.0


def evaluation_mask(query_frames: npt.NDArray[np.int64], num_frames: int, mode: Literal["first", "strided"]):
    """[T, Q] cells that count.

    "first" keeps the frames after the query frame, "strided" every frame but the query frame.
    """
    frames = np.arange(num_frames)[:, None]
    query_frames = np.asarray(query_frames, dtype=np.int64)[None, :]
    if mode == "first":
        return frames > query_frames
    if mode == "strided":
        return frames != query_frames
    raise ValueError(f"Unknown query mode '{mode}'")


@dataclass
class EvalRecords:
    """Predictions and ground truth of one video laid out [T, Q], in the clip's pixel coordinates."""

    pred_tracks: npt.NDArray[np.floating]
    pred_visible: npt.NDArray[np.bool_]
    gt_tracks: npt.NDArray[np.floating]
    gt_visible: npt.NDArray[np.bool_]
    mask: npt.NDArray[np.bool_]
    scale: Tuple[float, float] = field(default=(1.0, 1.0))  # (x, y) factors to the evaluation resolution
    name: Optional[str] = field(default=None)

    def __post_init__(self):
        shape = self.gt_visible.shape
        if (
            self.pred_visible.shape != shape
            or self.mask.shape != shape
            or self.pred_tracks.shape != shape + (2,)
            or self.gt_tracks.shape != shape + (2,)
        ):
            raise DimensionMismatchError(
                f"Record shapes disagree: pred {self.pred_tracks.shape}/{self.pred_visible.shape}, "
                f"gt {self.gt_tracks.shape}/{self.gt_visible.shape}, mask {self.mask.shape}"
            )

    @staticmethod
    def for_clip(
        pred_tracks: npt.NDArray[np.floating],
        pred_visible: npt.NDArray[np.bool_],
        gt_tracks: npt.NDArray[np.floating],
        gt_visible: npt.NDArray[np.bool_],
        mask: npt.NDArray[np.bool_],
        clip_size: Tuple[int, int],
        eval_resolution: Tuple[int, int] = (256, 256),
        name: Optional[str] = None,
    ) -> "EvalRecords":
        """Records for a clip of (H, W) `clip_size`, rescaled to an (H, W) `eval_resolution`."""
        height, width = clip_size
        eval_height, eval_width = eval_resolution
        return EvalRecords(
            pred_tracks=np.asarray(pred_tracks, dtype=np.float64),
            pred_visible=np.asarray(pred_visible, dtype=bool),
            gt_tracks=np.asarray(gt_tracks, dtype=np.float64),
            gt_visible=np.asarray(gt_visible, dtype=bool),
            mask=np.asarray(mask, dtype=bool),
            scale=(eval_width / width, eval_height / height),
            name=name,
        )

    def errors(self) -> npt.NDArray[np.float64]:
        """Euclidean distance per cell at the evaluation resolution."""
        delta = (self.pred_tracks - self.gt_tracks) * np.asarray(self.scale)
        return np.sqrt(np.sum(np.square(delta), axis=-1))


def _require(records: Sequence[EvalRecords]) -> None:
    if len(records) == 0:
        raise MetricError("No records to evaluate.")


def _mean_over_videos(values: List[Optional[float]], what: str) -> float:
    kept = [v for v in values if v is not None]
    if not kept:
        raise MetricError(f"No video has cells to compute {what}.")
    return float(np.mean(kept))


def _video_occlusion_accuracy(r: EvalRecords) -> Optional[float]:
    total = int(r.mask.sum())
    if total == 0:
        return None
    return float(np.sum((r.pred_visible == r.gt_visible) & r.mask) / total)


def _video_within(r: EvalRecords, threshold: float) -> Optional[float]:
    visible = r.gt_visible & r.mask
    total = int(visible.sum())
    if total == 0:
        return None
    return float(np.sum((r.errors() <= threshold) & visible) / total)


def _video_jaccard(r: EvalRecords, threshold: float) -> Optional[float]:
    close = r.errors() <= threshold
    gt_visible = r.gt_visible & r.mask
    gt_occluded = ~r.gt_visible & r.mask
    true_positives = np.sum(gt_visible & r.pred_visible & close)
    false_negatives = np.sum(gt_visible & (~r.pred_visible | ~close))
    false_positives = np.sum(gt_occluded & r.pred_visible)
    denominator = int(true_positives + false_negatives + false_positives)
    if denominator == 0:
        return None
    return float(true_positives / denominator)


def _video_threshold_mean(values: List[Optional[float]]) -> Optional[float]:
    kept = [v for v in values if v is not None]
    return float(np.mean(kept)) if kept else None


def occlusion_accuracy(records: Sequence[EvalRecords]) -> float:
    _require(records)
    return _mean_over_videos([_video_occlusion_accuracy(r) for r in records], "occlusion accuracy")


def delta_avg(records: Sequence[EvalRecords], thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> float:
    _require(records)
    per_video = [_video_threshold_mean([_video_within(r, t) for t in thresholds]) for r in records]
    return _mean_over_videos(per_video, "delta_avg")


def average_jaccard(records: Sequence[EvalRecords], thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> float:
    _require(records)
    per_video = [_video_threshold_mean([_video_jaccard(r, t) for t in thresholds]) for r in records]
    return _mean_over_videos(per_video, "average Jaccard")


def compute_metrics(records: Sequence[EvalRecords], thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> MetricsReport:
    """All three metrics plus per-threshold and per-video breakdowns."""
    _require(records)
    per_threshold: Dict[str, Dict[str, float]] = {}
    for t in thresholds:
        within = [v for v in (_video_within(r, t) for r in records) if v is not None]
        jaccard = [v for v in (_video_jaccard(r, t) for r in records) if v is not None]
        per_threshold[f"{t:g}"] = {
            "pts_within": float(np.mean(within)) if within else float("nan"),
            "jaccard": float(np.mean(jaccard)) if jaccard else float("nan"),
        }

    per_video: List[Dict[str, float]] = []
    for i, r in enumerate(records):
        row: Dict[str, float] = {"video": float(i)}
        for key, value in (
            ("OA", _video_occlusion_accuracy(r)),
            ("delta_avg", _video_threshold_mean([_video_within(r, t) for t in thresholds])),
            ("AJ", _video_threshold_mean([_video_jaccard(r, t) for t in thresholds])),
        ):
            row[key] = float("nan") if value is None else value
        per_video.append(row)

    return MetricsReport(
        average_jaccard=average_jaccard(records, thresholds),
        delta_avg=delta_avg(records, thresholds),
        occlusion_accuracy=occlusion_accuracy(records),
        per_threshold=per_threshold,
        per_video=per_video,
    )
