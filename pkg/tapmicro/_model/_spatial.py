from typing import Optional, Tuple

import torch
from einops import rearrange
from torch import nn

from tapmicro._exceptions import DimensionMismatchError
from tapmicro._models import ModelConfig
from tapmicro._types import AttentionQuadrants

from ._init import init_weights


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, width: int, num_heads: int):
        super().__init__()
        if width % num_heads:
            raise DimensionMismatchError(f"width {width} is not divisible by {num_heads} heads")
        self.num_heads = num_heads
        self.scale = (width // num_heads) ** -0.5
        self.qkv = nn.Linear(width, 3 * width)
        self.out = nn.Linear(width, width)

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Attend across the token axis of x [..., N, C]; returns (output, attention [..., heads, N, N])."""
        q, k, v = rearrange(self.qkv(x), "... n (three h d) -> three ... h n d", three=3, h=self.num_heads)
        attn = torch.softmax(torch.matmul(q, k.transpose(-1, -2)) * self.scale, dim=-1)
        out = rearrange(torch.matmul(attn, v), "... h n d -> ... n (h d)")
        return self.out(out), attn


class SpatialBlock(nn.Module):
    """Pre-norm ViT block over the image and point tokens of each frame; frames are a batch axis."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.width = config.width
        self.norm1 = nn.LayerNorm(config.width)
        self.attention = MultiHeadSelfAttention(config.width, config.num_heads)
        self.norm2 = nn.LayerNorm(config.width)
        self.mlp = nn.Sequential(
            nn.Linear(config.width, config.mlp_ratio * config.width),
            nn.GELU(),
            nn.Linear(config.mlp_ratio * config.width, config.width),
        )
        init_weights(self, config.init_std)

    def forward(
        self, tokens: torch.Tensor, capture_attention: bool = False
    ) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        if tokens.shape[-1] != self.width:
            raise DimensionMismatchError(f"Expected token width {self.width}, got {tokens.shape[-1]}")
        attended, attn = self.attention(self.norm1(tokens))
        tokens = tokens + attended
        tokens = tokens + self.mlp(self.norm2(tokens))
        return tokens, attn if capture_attention else None


def split_attention_quadrants(attn: torch.Tensor, num_image_tokens: int, num_points: int) -> AttentionQuadrants:
    """Slice an attention map [..., N, N] laid out as image tokens then point tokens."""
    n = num_image_tokens + num_points
    if attn.shape[-1] != n or attn.shape[-2] != n:
        raise DimensionMismatchError(
            f"Attention of shape {tuple(attn.shape[-2:])} does not match {num_image_tokens} + {num_points} tokens"
        )
    hw = num_image_tokens
    return AttentionQuadrants(
        point_to_image=attn[..., hw:, :hw],
        point_to_point=attn[..., hw:, hw:],
        image_to_image=attn[..., :hw, :hw],
        image_to_point=attn[..., :hw, hw:],
    )
