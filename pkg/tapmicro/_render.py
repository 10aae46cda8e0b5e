"""Track overlays drawn onto clip frames and written as PNG files."""

import os
from typing import List, Tuple

import numpy as np
import pandas as pd
from PIL import Image, ImageDraw

from tapmicro._exceptions import DimensionMismatchError, InvalidStorageError
from tapmicro._types import VideoClip
from tapmicro._utils import logger

PALETTE: List[Tuple[int, int, int]] = [
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
]


def render_frames(
    clip: VideoClip, tracks: pd.DataFrame, scale: int = 1, tail: int = 4, radius: float = 1.5
) -> List[Image.Image]:
    """One RGB image per frame with every track drawn on it.

    Visible points get a filled marker, occluded ones a hollow marker; each track trails a polyline through its
    last `tail` positions.
    """
    if scale < 1:
        raise ValueError("scale must be >= 1")
    frames = clip.to_uint8()
    if not tracks.empty and int(tracks["frame"].max()) >= clip.num_frames:
        raise DimensionMismatchError(
            f"Tracks reach frame {int(tracks['frame'].max())} but the clip has {clip.num_frames} frames"
        )

    images = []
    for t in range(clip.num_frames):
        image = Image.fromarray(frames[t])
        if scale > 1:
            image = image.resize((clip.width * scale, clip.height * scale), Image.Resampling.NEAREST)
        images.append(image)
    if tracks.empty:
        return images

    for color_index, (_, track) in enumerate(tracks.sort_values("frame").groupby("query_id", sort=True)):
        color = PALETTE[color_index % len(PALETTE)]
        xy = {int(r.frame): (float(r.x) * scale, float(r.y) * scale, bool(r.visible)) for r in track.itertuples()}
        for t, image in enumerate(images):
            if t not in xy:
                continue
            draw = ImageDraw.Draw(image)
            history = [xy[s][:2] for s in range(max(0, t - tail), t + 1) if s in xy]
            if len(history) > 1:
                draw.line(history, fill=color, width=1)
            x, y, visible = xy[t]
            r = radius * scale
            box = (x - r, y - r, x + r, y + r)
            if visible:
                draw.ellipse(box, fill=color, outline=color)
            else:
                draw.ellipse(box, outline=color, width=1)
    return images


def write_overlays(directory: str, images: List[Image.Image], prefix: str = "frame") -> List[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    try:
        for t, image in enumerate(images):
            path = os.path.join(directory, f"{prefix}_{t:05d}.png")
            image.save(path, format="PNG")
            paths.append(path)
    except OSError as e:
        logger.error(f"Error writing overlays to '{directory}': {e}")
        raise InvalidStorageError(f"Error writing overlays to '{directory}': {e}") from e
    logger.debug(f"Wrote {len(paths)} overlay frames to '{directory}'.")
    return paths


def image_array(image: Image.Image) -> np.ndarray:
    return np.asarray(image.convert("RGB"))
