from typing import Tuple

import torch
from torch import nn

from tapmicro._exceptions import CoordinateRangeError
from tapmicro._models import ModelConfig
from tapmicro._types import CoordinateDistribution, HeadOutput

from ._init import init_weights


def trunc_softargmax(p: torch.Tensor, delta: int, extent: float) -> torch.Tensor:
    """Soft-argmax over the last axis restricted to bins within `delta` of the argmax.

    Bin j decodes to j * extent / n (0-based). The truncation window is held constant for gradients.
    """
    n = p.shape[-1]
    js = torch.arange(n, dtype=p.dtype, device=p.device)
    with torch.no_grad():
        center = torch.argmax(p, dim=-1, keepdim=True)
        window = (js - center).abs() <= delta
    kept = torch.where(window, p, torch.zeros_like(p))
    kept = kept / kept.sum(dim=-1, keepdim=True)
    return (extent / n) * (kept * js).sum(dim=-1)


def one_hot_target(coord: torch.Tensor, num_bins: int, extent: float) -> torch.Tensor:
    """Index of the bin holding `coord`, clamped so coord == extent lands in the last bin."""
    coord = torch.as_tensor(coord)
    if bool((coord < 0).any()) or bool((coord > extent).any()):
        raise CoordinateRangeError(f"Coordinate outside [0, {extent}]")
    return torch.floor(coord * num_bins / extent).long().clamp(0, num_bins - 1)


def _mlp(in_dim: int, hidden: int, out_dim: int, num_layers: int) -> nn.Sequential:
    layers: list[nn.Module] = [nn.LayerNorm(in_dim)]
    dim = in_dim
    for _ in range(num_layers - 1):
        layers += [nn.Linear(dim, hidden), nn.GELU()]
        dim = hidden
    layers.append(nn.Linear(dim, out_dim))
    return nn.Sequential(*layers)


class CoordinateHead(nn.Module):
    """Point token -> 2n logits, split into x bins then y bins."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.num_bins = config.num_bins
        self.mlp = _mlp(config.width, config.head_hidden, 2 * config.num_bins, config.head_layers)

    def forward(self, tokens: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        logits = self.mlp(tokens)
        return logits[..., : self.num_bins], logits[..., self.num_bins :]

    @staticmethod
    def distribution(logits_x: torch.Tensor, logits_y: torch.Tensor, temperature: float) -> CoordinateDistribution:
        return CoordinateDistribution(
            p_x=torch.softmax(logits_x / temperature, dim=-1),
            p_y=torch.softmax(logits_y / temperature, dim=-1),
            logits_x=logits_x,
            logits_y=logits_y,
        )


class RegressionHead(nn.Module):
    """Point token -> (x, y) directly, squashed into the frame."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        height, width = config.image_size
        self.register_buffer("extent", torch.tensor([float(width), float(height)]), persistent=False)
        self.mlp = _mlp(config.width, config.head_hidden, 2, config.head_layers)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.mlp(tokens)) * self.extent.to(tokens.dtype)


class TrackHeads(nn.Module):
    """Coordinate and visibility heads shared by every layer's point tokens."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.head_type = config.head_type
        self.temperature = config.temperature
        self.delta = config.softargmax_delta
        self.image_size = config.image_size
        if config.head_type == "classification":
            self.coordinate = CoordinateHead(config)
        else:
            self.coordinate = RegressionHead(config)
        self.visibility = _mlp(config.width, config.head_hidden, 1, config.head_layers)
        init_weights(self, config.init_std)

    def forward(self, tokens: torch.Tensor) -> HeadOutput:
        visible_logit = self.visibility(tokens)[..., 0]
        if self.head_type == "regression":
            return HeadOutput(coords=self.coordinate(tokens), visible_logit=visible_logit)

        height, width = self.image_size
        logits_x, logits_y = self.coordinate(tokens)
        dist = CoordinateHead.distribution(logits_x, logits_y, self.temperature)
        coords = torch.stack(
            [trunc_softargmax(dist.p_x, self.delta, width), trunc_softargmax(dist.p_y, self.delta, height)], dim=-1
        )
        return HeadOutput(coords=coords, visible_logit=visible_logit, distribution=dist)
