from typing import Literal, Optional, Tuple

import torch
from einops import rearrange
from torch import nn

from tapmicro._exceptions import UnsupportedModeError
from tapmicro._models import ModelConfig

from ._init import init_weights


def rotary_tables(num_steps: int, dim: int, base: float, dtype: torch.dtype, device=None):
    inv_freq = base ** (-torch.arange(0, dim, 2, dtype=torch.float64, device=device) / dim)
    angles = torch.outer(torch.arange(num_steps, dtype=torch.float64, device=device), inv_freq)
    angles = torch.cat([angles, angles], dim=-1)
    return angles.cos().to(dtype), angles.sin().to(dtype)


def apply_rotary(x: torch.Tensor, cos: torch.Tensor, sin: torch.Tensor) -> torch.Tensor:
    x1, x2 = x.chunk(2, dim=-1)
    return x * cos + torch.cat([-x2, x1], dim=-1) * sin


class TemporalAttentionBlock(nn.Module):
    """Causal self-attention over time with rotary positions, each token tube attending only to itself.

    Offline-only stand-in for the recurrent block.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.num_heads = config.num_heads
        self.head_dim = config.head_dim
        self.rotary_base = config.rotary_base
        self.norm = nn.LayerNorm(config.width)
        self.qkv = nn.Linear(config.width, 3 * config.width)
        self.out = nn.Linear(config.width, config.width)
        init_weights(self, config.init_std)

    def forward(
        self,
        tokens: torch.Tensor,
        state: Optional[object] = None,
        mode: Literal["scan", "step"] = "scan",
    ) -> Tuple[torch.Tensor, None]:
        if mode != "scan" or state is not None:
            raise UnsupportedModeError("Temporal attention has no streaming mode; use the recurrent block.")

        num_steps = tokens.shape[-3]
        x = self.qkv(self.norm(tokens))
        x = rearrange(x, "... t n (three h d) -> three ... n h t d", three=3, h=self.num_heads)
        q, k, v = x[0], x[1], x[2]
        cos, sin = rotary_tables(num_steps, self.head_dim, self.rotary_base, q.dtype, q.device)
        q, k = apply_rotary(q, cos, sin), apply_rotary(k, cos, sin)

        scores = torch.matmul(q, k.transpose(-1, -2)) * self.head_dim**-0.5
        future = torch.triu(torch.ones(num_steps, num_steps, dtype=torch.bool, device=tokens.device), diagonal=1)
        attn = torch.softmax(scores.masked_fill(future, float("-inf")), dim=-1)
        out = rearrange(torch.matmul(attn, v), "... n h t d -> ... t n (h d)")
        return tokens + self.out(out), None
