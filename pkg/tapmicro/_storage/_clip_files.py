"""On-disk formats for clips, ground truth, queries and predicted tracks.

A clip `<name>` is `<name>.rgb` (raw uint8, row-major T, H, W, 3) next to `<name>.json` {num_frames, height, width,
seed}; its ground truth lives in `<name>_gt.csv` with columns point_id, frame, x, y, visible.
"""

import os
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from tapmicro._exceptions import InvalidStorageError
from tapmicro._models import ClipSidecar
from tapmicro._types import GroundTruth, QueryPoint, TrackPrediction, VideoClip
from tapmicro._utils import logger

CLIP_SUFFIX = ".rgb"
SIDECAR_SUFFIX = ".json"
GT_SUFFIX = "_gt.csv"
FLOAT_FORMAT = "%.6f"

TRACK_COLUMNS = ["query_id", "frame", "x", "y", "visible", "mass_in_radius"]


def _fail(message: str, error: Exception) -> InvalidStorageError:
    logger.error(message)
    return InvalidStorageError(f"{message}: {error}")


def write_clip(
    directory: str, name: str, clip: VideoClip, gt: Optional[GroundTruth] = None, seed: Optional[int] = None
) -> Dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    paths = {
        "clip": os.path.join(directory, name + CLIP_SUFFIX),
        "sidecar": os.path.join(directory, name + SIDECAR_SUFFIX),
    }
    sidecar = ClipSidecar(num_frames=clip.num_frames, height=clip.height, width=clip.width, seed=seed)
    try:
        clip.to_uint8().tofile(paths["clip"])
        with open(paths["sidecar"], "w") as f:
            f.write(sidecar.model_dump_json(indent=2))
        if gt is not None:
            paths["ground_truth"] = os.path.join(directory, name + GT_SUFFIX)
            write_ground_truth(paths["ground_truth"], gt)
    except OSError as e:
        raise _fail(f"Error writing clip '{name}' to {directory}", e) from e
    return paths


def read_clip(path: str) -> Tuple[VideoClip, ClipSidecar]:
    """Read a clip given its `.rgb` path (or its stem)."""
    stem = path[: -len(CLIP_SUFFIX)] if path.endswith(CLIP_SUFFIX) else path
    try:
        with open(stem + SIDECAR_SUFFIX, "r") as f:
            sidecar = ClipSidecar.model_validate_json(f.read())
        raw = np.fromfile(stem + CLIP_SUFFIX, dtype=np.uint8)
    except Exception as e:
        raise _fail(f"Error reading clip '{stem}'", e) from e
    expected = sidecar.num_frames * sidecar.height * sidecar.width * 3
    if raw.size != expected:
        raise InvalidStorageError(f"Clip '{stem}' holds {raw.size} bytes, expected {expected}.")
    frames = raw.reshape(sidecar.num_frames, sidecar.height, sidecar.width, 3).astype(np.float32) / 255.0
    return VideoClip(frames=frames), sidecar


def list_clips(directory: str) -> List[str]:
    """Clip stems in a dataset directory, sorted."""
    if not os.path.isdir(directory):
        raise InvalidStorageError(f"Dataset directory '{directory}' does not exist.")
    return sorted(
        os.path.join(directory, entry[: -len(CLIP_SUFFIX)])
        for entry in os.listdir(directory)
        if entry.endswith(CLIP_SUFFIX)
    )


def write_ground_truth(path: str, gt: GroundTruth) -> None:
    num_frames, num_points = gt.visible.shape
    frame, point = np.meshgrid(np.arange(num_frames), np.arange(num_points), indexing="ij")
    df = pd.DataFrame(
        {
            "point_id": point.ravel(),
            "frame": frame.ravel(),
            "x": gt.tracks[..., 0].ravel(),
            "y": gt.tracks[..., 1].ravel(),
            "visible": gt.visible.ravel().astype(np.int64),
        }
    )
    df.sort_values(["point_id", "frame"]).to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_ground_truth(path: str, num_frames: Optional[int] = None) -> GroundTruth:
    try:
        df = pd.read_csv(path)
    except Exception as e:
        raise _fail(f"Error reading ground truth '{path}'", e) from e
    if df.empty:
        t = 0 if num_frames is None else num_frames
        return GroundTruth(tracks=np.zeros((t, 0, 2), dtype=np.float32), visible=np.zeros((t, 0), dtype=bool))
    t = int(df["frame"].max()) + 1 if num_frames is None else num_frames
    p = int(df["point_id"].max()) + 1
    tracks = np.zeros((t, p, 2), dtype=np.float32)
    visible = np.zeros((t, p), dtype=bool)
    frames, points = df["frame"].to_numpy(), df["point_id"].to_numpy()
    tracks[frames, points, 0] = df["x"].to_numpy()
    tracks[frames, points, 1] = df["y"].to_numpy()
    visible[frames, points] = df["visible"].to_numpy().astype(bool)
    return GroundTruth(tracks=tracks, visible=visible)


def write_queries(path: str, queries: Sequence[QueryPoint], query_ids: Optional[Sequence[Hashable]] = None) -> None:
    query_ids = list(range(len(queries))) if query_ids is None else list(query_ids)
    df = pd.DataFrame(
        {"query_id": query_ids, "t": [q.t for q in queries], "x": [q.x for q in queries], "y": [q.y for q in queries]}
    )
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_queries(path: str) -> Tuple[List[Hashable], List[QueryPoint]]:
    """Queries CSV with columns query_id, t, x, y."""
    try:
        df = pd.read_csv(path)
    except Exception as e:
        raise _fail(f"Error reading queries '{path}'", e) from e
    missing = {"query_id", "t", "x", "y"} - set(df.columns)
    if missing:
        raise InvalidStorageError(f"Queries file '{path}' lacks columns {sorted(missing)}.")
    queries = [QueryPoint(t=int(r.t), x=float(r.x), y=float(r.y)) for r in df.itertuples(index=False)]
    return df["query_id"].tolist(), queries


def tracks_frame(prediction: TrackPrediction, query_ids: Sequence[Hashable]) -> pd.DataFrame:
    """Long-format table of a [T, Q] prediction, one row per (query, frame)."""
    coords = prediction.coords.detach().cpu().numpy()
    num_frames, num_queries = coords.shape[:2]
    frame, column = np.meshgrid(np.arange(num_frames), np.arange(num_queries), indexing="ij")
    ids = np.asarray(list(query_ids), dtype=object)
    df = pd.DataFrame(
        {
            "query_id": ids[column.ravel()] if num_queries else np.zeros(0, dtype=object),
            "frame": frame.ravel(),
            "x": coords[..., 0].ravel(),
            "y": coords[..., 1].ravel(),
            "visible": (~prediction.occluded.cpu().numpy()).ravel().astype(np.int64),
            "mass_in_radius": prediction.mass_in_radius.detach().cpu().numpy().ravel(),
        }
    )
    return df[TRACK_COLUMNS]


def write_tracks(path: str, df: pd.DataFrame) -> None:
    try:
        df.sort_values(["query_id", "frame"], kind="stable").to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise _fail(f"Error writing tracks '{path}'", e) from e


def read_tracks(path: str) -> pd.DataFrame:
    try:
        df = pd.read_csv(path)
    except Exception as e:
        raise _fail(f"Error reading tracks '{path}'", e) from e
    missing = set(TRACK_COLUMNS) - set(df.columns)
    if missing:
        raise InvalidStorageError(f"Tracks file '{path}' lacks columns {sorted(missing)}.")
    return df
