"""Procedural moving-sprite clips with analytic ground truth.

World coordinates are pixels of the frame at t = 0; the camera pans so a static world point w appears at
w - pan * t. Sprites move in world space along a line plus an optional sinusoidal wobble.
"""

import math
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np
import numpy.typing as npt

from tapmicro._models import SceneSpec
from tapmicro._types import GroundTruth, VideoClip
from tapmicro._utils import logger

FloatArray = npt.NDArray[np.float64]


@dataclass
class Texture:
    """Colors as a closed-form function of 2D coordinates."""

    kind: Literal["checker", "noise"]
    colors: FloatArray  # [2, 3]
    cell: float = 2.0
    frequencies: FloatArray = field(default_factory=lambda: np.zeros((0, 2)))  # cycles per pixel
    phases: FloatArray = field(default_factory=lambda: np.zeros((0, 3)))
    amplitude: float = 0.25

    def color(self, uv: FloatArray) -> FloatArray:
        """[..., 2] -> [..., 3] in [0, 1]."""
        if self.kind == "checker":
            parity = (np.floor(uv[..., 0] / self.cell) + np.floor(uv[..., 1] / self.cell)) % 2
            return self.colors[parity.astype(np.int64)]
        waves = 2.0 * np.pi * (uv @ self.frequencies.T)  # [..., K]
        base = 0.5 * (self.colors[0] + self.colors[1])
        signal = np.sin(waves[..., :, None] + self.phases).mean(axis=-2)  # [..., 3]
        return np.clip(base + self.amplitude * 2.0 * signal, 0.0, 1.0)


@dataclass
class Sprite:
    shape: Literal["disc", "rect"]
    center: Tuple[float, float]  # world position at t = 0
    velocity: Tuple[float, float]
    size: Tuple[float, float]  # disc radius twice, or rect half-extents
    z: int
    texture: Texture
    wobble_amplitude: Tuple[float, float] = (0.0, 0.0)
    wobble_period: float = math.inf
    wobble_phase: float = 0.0

    def world_center(self, t: FloatArray) -> FloatArray:
        """Center at times t (any shape) -> [..., 2]."""
        t = np.asarray(t, dtype=np.float64)
        center = np.asarray(self.center) + np.asarray(self.velocity) * t[..., None]
        if math.isfinite(self.wobble_period):
            wobble = np.sin(2.0 * np.pi * t / self.wobble_period + self.wobble_phase)
            center = center + np.asarray(self.wobble_amplitude) * wobble[..., None]
        return center

    def contains(self, local: FloatArray) -> npt.NDArray[np.bool_]:
        """Whether offsets from the center [..., 2] fall inside the sprite (open interior)."""
        if self.shape == "disc":
            return (local[..., 0] ** 2 + local[..., 1] ** 2) < self.size[0] ** 2
        return (np.abs(local[..., 0]) < self.size[0]) & (np.abs(local[..., 1]) < self.size[1])


@dataclass
class TrackedPoint:
    """A surface point: an offset from a sprite's center, or a world position when `sprite` is None."""

    sprite: Optional[int]
    offset: Tuple[float, float]


@dataclass
class Scene:
    num_frames: int
    height: int
    width: int
    pan_velocity: Tuple[float, float]
    background: Texture
    sprites: List[Sprite]
    points: List[TrackedPoint]
    blur_taps: int = 4
    shutter: float = 0.5

    def screen_positions(self, t: FloatArray) -> FloatArray:
        """Positions of every tracked point at times t [T] -> [T, P, 2]."""
        t = np.asarray(t, dtype=np.float64)
        pan = np.asarray(self.pan_velocity) * t[:, None]  # [T, 2]
        positions = np.zeros((t.shape[0], len(self.points), 2))
        for j, point in enumerate(self.points):
            if point.sprite is None:
                world = np.broadcast_to(np.asarray(point.offset), (t.shape[0], 2))
            else:
                world = self.sprites[point.sprite].world_center(t) + np.asarray(point.offset)
            positions[:, j] = world - pan
        return positions

    def ground_truth(self) -> GroundTruth:
        frames = np.arange(self.num_frames, dtype=np.float64)
        tracks = self.screen_positions(frames)
        x, y = tracks[..., 0], tracks[..., 1]
        in_frame = (x >= 0) & (x <= self.width) & (y >= 0) & (y <= self.height)
        covered = np.zeros(in_frame.shape, dtype=bool)
        pan = np.asarray(self.pan_velocity) * frames[:, None]
        for j, point in enumerate(self.points):
            own_z = -math.inf if point.sprite is None else self.sprites[point.sprite].z
            for sprite in self.sprites:
                if sprite.z <= own_z:
                    continue
                local = tracks[:, j] - (sprite.world_center(frames) - pan)
                covered[:, j] |= sprite.contains(local)
        return GroundTruth(tracks=tracks.astype(np.float32), visible=in_frame & ~covered)

    def render_instant(self, t: float) -> FloatArray:
        """Sharp frame at continuous time t, sampled at pixel centers -> [H, W, 3]."""
        ys, xs = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        screen = np.stack([xs + 0.5, ys + 0.5], axis=-1)
        pan = np.asarray(self.pan_velocity) * t
        image = self.background.color(screen + pan)
        for sprite in sorted(self.sprites, key=lambda s: s.z):
            local = screen - (sprite.world_center(np.asarray(t)) - pan)
            inside = sprite.contains(local)
            if inside.any():
                image[inside] = sprite.texture.color(local[inside])
        return image

    def render_frame(self, t: int) -> FloatArray:
        """Average of `blur_taps` sharp renders spread over the open shutter around frame t."""
        offsets = self.shutter * ((np.arange(self.blur_taps) + 0.5) / self.blur_taps - 0.5)
        return np.mean([self.render_instant(t + dt) for dt in offsets], axis=0)

    def render(self) -> VideoClip:
        frames = np.stack([self.render_frame(t) for t in range(self.num_frames)]).astype(np.float32)
        return VideoClip(frames=frames)


####################################################################################################
# Sampling
####################################################################################################


def _random_texture(rng: np.random.Generator, kind: Optional[str] = None) -> Texture:
    kind = kind or ("checker" if rng.random() < 0.5 else "noise")
    colors = rng.random((2, 3))
    if kind == "checker":
        return Texture(kind="checker", colors=colors, cell=float(rng.uniform(1.0, 3.0)))
    num_waves = 4
    wavelengths = rng.uniform(3.0, 12.0, size=num_waves)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=num_waves)
    frequencies = np.stack([np.cos(angles), np.sin(angles)], axis=-1) / wavelengths[:, None]
    return Texture(
        kind="noise",
        colors=colors,
        frequencies=frequencies,
        phases=rng.uniform(0.0, 2.0 * np.pi, size=(num_waves, 3)),
        amplitude=float(rng.uniform(0.15, 0.3)),
    )


def _polar(rng: np.random.Generator, speed_range: Tuple[float, float]) -> Tuple[float, float]:
    speed = rng.uniform(*speed_range)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    return float(speed * np.cos(angle)), float(speed * np.sin(angle))


def _interior_offsets(rng: np.random.Generator, sprite: Sprite, count: int) -> List[Tuple[float, float]]:
    if sprite.shape == "disc":
        radius = 0.8 * sprite.size[0] * np.sqrt(rng.random(count))
        angle = rng.uniform(0.0, 2.0 * np.pi, size=count)
        return [(float(r * np.cos(a)), float(r * np.sin(a))) for r, a in zip(radius, angle)]
    dx = rng.uniform(-0.8, 0.8, size=count) * sprite.size[0]
    dy = rng.uniform(-0.8, 0.8, size=count) * sprite.size[1]
    return [(float(x), float(y)) for x, y in zip(dx, dy)]


def sample_scene(spec: SceneSpec) -> Scene:
    rng = np.random.default_rng(spec.seed)
    num_sprites = int(rng.integers(spec.sprite_count[0], spec.sprite_count[1] + 1))
    depth = rng.permutation(num_sprites)

    sprites: List[Sprite] = []
    for i in range(num_sprites):
        shape = "disc" if rng.random() < spec.disc_probability else "rect"
        if shape == "disc":
            radius = float(rng.uniform(*spec.sprite_size))
            size = (radius, radius)
        else:
            size = (float(rng.uniform(*spec.sprite_size)), float(rng.uniform(*spec.sprite_size)))
        sprite = Sprite(
            shape=shape,
            center=(float(rng.uniform(0, spec.width)), float(rng.uniform(0, spec.height))),
            velocity=_polar(rng, spec.sprite_speed),
            size=size,
            z=int(depth[i]),
            texture=_random_texture(rng),
        )
        if rng.random() < spec.wobble_probability:
            sprite.wobble_amplitude = (
                float(rng.uniform(*spec.wobble_amplitude)),
                float(rng.uniform(*spec.wobble_amplitude)),
            )
            sprite.wobble_period = float(rng.uniform(*spec.wobble_period))
            sprite.wobble_phase = float(rng.uniform(0.0, 2.0 * np.pi))
        sprites.append(sprite)

    points: List[TrackedPoint] = []
    if num_sprites > 0:
        for i, sprite in enumerate(sprites):
            points += [TrackedPoint(sprite=i, offset=o) for o in _interior_offsets(rng, sprite, spec.points_per_sprite)]
        g = spec.background_points
        for row in range(g):
            for col in range(g):
                offset = ((col + 0.5) * spec.width / g, (row + 0.5) * spec.height / g)
                points.append(TrackedPoint(sprite=None, offset=offset))

    return Scene(
        num_frames=spec.num_frames,
        height=spec.height,
        width=spec.width,
        pan_velocity=_polar(rng, spec.pan_speed),
        background=_random_texture(rng, "noise"),
        sprites=sprites,
        points=points,
        blur_taps=spec.blur_taps,
        shutter=spec.shutter,
    )


def generate_clip(spec: SceneSpec) -> Tuple[VideoClip, GroundTruth]:
    scene = sample_scene(spec)
    if not scene.sprites:
        logger.debug(f"Scene {spec.seed} has no sprites; emitting a background-only clip without tracks.")
    return scene.render(), scene.ground_truth()
