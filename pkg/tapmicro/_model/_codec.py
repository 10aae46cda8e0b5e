"""Video and query points to the token grid consumed by the backbone.

Frame t carries h*w patch tokens followed by Q point tokens. A point token holds the sinusoidal code of its query
coordinate at the query frame and the shared mask token everywhere else.
"""

from typing import Optional, Tuple

import torch
from einops import rearrange
from torch import nn

from tapmicro._exceptions import DimensionMismatchError, InvalidQueryError
from tapmicro._models import ModelConfig
from tapmicro._types import TokenGrid

from ._init import init_weights


def patchify(video: torch.Tensor, patch_size: int) -> torch.Tensor:
    """[..., T, H, W, 3] -> [..., T, (H/p)*(W/p), p*p*3], row-major over patches."""
    if video.ndim < 4 or video.shape[-1] != 3:
        raise DimensionMismatchError(f"Expected video [..., T, H, W, 3], got {tuple(video.shape)}")
    height, width = video.shape[-3], video.shape[-2]
    if height % patch_size or width % patch_size:
        raise DimensionMismatchError(f"Frame {height}x{width} is not divisible by patch size {patch_size}")
    return rearrange(video, "... t (h p1) (w p2) c -> ... t (h w) (p1 p2 c)", p1=patch_size, p2=patch_size)


def unpatchify(patches: torch.Tensor, patch_size: int, grid_size: Tuple[int, int]) -> torch.Tensor:
    h, w = grid_size
    if patches.shape[-2] != h * w or patches.shape[-1] != patch_size * patch_size * 3:
        raise DimensionMismatchError(f"Patches {tuple(patches.shape)} do not form a {h}x{w} grid of {patch_size}px")
    return rearrange(patches, "... t (h w) (p1 p2 c) -> ... t (h p1) (w p2) c", h=h, w=w, p1=patch_size, p2=patch_size)


def sincos2d(x: torch.Tensor, y: torch.Tensor, width: int, temperature: float = 10_000.0) -> torch.Tensor:
    """2D sinusoidal code of continuous coordinates, [...] -> [..., width].

    Features come in four contiguous blocks of `width // 4`, `[sin(x w) | cos(x w) | sin(y w) | cos(y w)]`, with
    frequencies `w_k = temperature ** (-k / (K - 1))` for k = 0..K-1 running from 1 down to `1 / temperature`.
    Callers rescale coordinates to the embedding resolution first.
    """
    if width % 4:
        raise DimensionMismatchError("Width must be a multiple of 4 for the sincos embedding")
    num_freqs = width // 4
    dtype = x.dtype if x.is_floating_point() else torch.float32
    exponent = torch.arange(num_freqs, dtype=dtype, device=x.device) / max(num_freqs - 1, 1)
    omega = 1.0 / (temperature**exponent)
    ux = x.to(dtype)[..., None] * omega
    uy = y.to(dtype)[..., None] * omega
    return torch.cat([torch.sin(ux), torch.cos(ux), torch.sin(uy), torch.cos(uy)], dim=-1)


class TokenCodec(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.patch_size = config.patch_size
        self.image_size = config.image_size
        self.grid_size = config.grid_size
        self.width = config.width
        self.resolution = config.pos_embed_resolution
        self.query_broadcast = config.query_broadcast

        self.patch_projection = nn.Linear(3 * config.patch_size**2, config.width)
        self.image_pos_embedding = nn.Parameter(torch.zeros(config.num_patches, config.width))
        self.mask_token = nn.Parameter(torch.zeros(config.width))
        init_weights(self, config.init_std)
        nn.init.trunc_normal_(self.image_pos_embedding, std=config.init_std)
        nn.init.normal_(self.mask_token, std=config.width**-0.5)

    @property
    def num_image_tokens(self) -> int:
        return self.grid_size[0] * self.grid_size[1]

    def embed_frames(self, video: torch.Tensor) -> torch.Tensor:
        """[..., T, H, W, 3] -> image tokens [..., T, hw, C]."""
        if tuple(video.shape[-3:-1]) != tuple(self.image_size):
            raise DimensionMismatchError(f"Expected frames of {self.image_size}, got {tuple(video.shape[-3:-1])}")
        return self.patch_projection(patchify(video, self.patch_size)) + self.image_pos_embedding

    def query_embedding(self, xy: torch.Tensor) -> torch.Tensor:
        """Sinusoidal code of pixel coordinates [..., 2] after rescaling to the embedding resolution."""
        height, width = self.image_size
        u = xy[..., 0] * (self.resolution / width)
        v = xy[..., 1] * (self.resolution / height)
        return sincos2d(u, v, self.width)

    def point_tokens(self, queries: torch.Tensor, frames: torch.Tensor) -> torch.Tensor:
        """Point tokens [..., len(frames), Q, C] for queries [..., Q, 3] of (t, x, y) rows.

        Rows with a negative t are placeholders and carry the mask token at every frame.
        """
        if bool((queries[..., 0] != queries[..., 0].round()).any()):
            raise InvalidQueryError("Query frames must be whole numbers")
        t = queries[..., 0].long()
        embedding = self.query_embedding(queries[..., 1:3]).to(self.mask_token.dtype)
        frames = frames.to(t.device)
        active = (t >= 0)[..., None, :]
        if self.query_broadcast:
            is_query = (frames[:, None] >= t[..., None, :]) & active
        else:
            is_query = (frames[:, None] == t[..., None, :]) & active
        return torch.where(is_query[..., None], embedding[..., None, :, :], self.mask_token)

    def validate_queries(self, queries: torch.Tensor, num_frames: int) -> None:
        if queries.shape[-1] != 3:
            raise DimensionMismatchError(f"Expected queries [..., Q, 3], got {tuple(queries.shape)}")
        if queries.numel() == 0:
            return
        height, width = self.image_size
        t, x, y = queries[..., 0], queries[..., 1], queries[..., 2]
        if bool((t < 0).any()) or bool((t >= num_frames).any()):
            raise InvalidQueryError(f"Query frame outside [0, {num_frames})")
        if bool((x < 0).any() | (x > width).any() | (y < 0).any() | (y > height).any()):
            raise InvalidQueryError(f"Query coordinate outside the {width}x{height} frame")

    def encode_queries(self, queries: torch.Tensor, num_frames: int) -> torch.Tensor:
        self.validate_queries(queries, num_frames)
        frames = torch.arange(num_frames, device=queries.device)
        return self.point_tokens(queries, frames)

    @staticmethod
    def assemble_tokens(image_tokens: torch.Tensor, point_tokens: torch.Tensor) -> TokenGrid:
        if image_tokens.shape[-3] != point_tokens.shape[-3] or image_tokens.shape[-1] != point_tokens.shape[-1]:
            raise DimensionMismatchError(
                f"Image tokens {tuple(image_tokens.shape)} and point tokens {tuple(point_tokens.shape)} disagree"
            )
        batch_shape = torch.broadcast_shapes(image_tokens.shape[:-2], point_tokens.shape[:-2])
        image_tokens = image_tokens.expand(*batch_shape, *image_tokens.shape[-2:])
        point_tokens = point_tokens.expand(*batch_shape, *point_tokens.shape[-2:])
        tokens = torch.cat([image_tokens, point_tokens], dim=-2)
        return TokenGrid(tokens=tokens, num_image_tokens=image_tokens.shape[-2])

    def forward(self, video: torch.Tensor, queries: torch.Tensor, frame_offset: Optional[int] = None) -> TokenGrid:
        num_frames = video.shape[-4]
        image_tokens = self.embed_frames(video)
        if frame_offset is None:
            point_tokens = self.encode_queries(queries, num_frames)
        else:
            frames = torch.arange(frame_offset, frame_offset + num_frames, device=queries.device)
            point_tokens = self.point_tokens(queries, frames)
        return self.assemble_tokens(image_tokens, point_tokens.to(image_tokens.dtype))
