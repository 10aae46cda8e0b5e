"""Per-cell coordinate and visibility losses and their per-layer aggregation."""

from dataclasses import dataclass
from typing import Dict, Tuple

import torch
import torch.nn.functional as F

from tapmicro._model._heads import TrackHeads, one_hot_target, trunc_softargmax
from tapmicro._models import LossWeights
from tapmicro._types import HeadOutput


@dataclass
class LossTargets:
    """Training targets laid out [..., T, Q].

    `visible` is the visibility label with pre-query frames already forced to 0; `coord_mask` marks the cells where
    the coordinate loss applies.
    """

    coords: torch.Tensor  # [..., T, Q, 2]
    visible: torch.Tensor
    coord_mask: torch.Tensor


def cross_entropy(logits: torch.Tensor, target_bin: torch.Tensor) -> torch.Tensor:
    return -torch.log_softmax(logits, dim=-1).gather(-1, target_bin[..., None])[..., 0]


def coordinate_loss_terms(
    logits_x: torch.Tensor,
    logits_y: torch.Tensor,
    target_xy: torch.Tensor,
    extent: Tuple[float, float],
    delta: int,
    temperature: float,
) -> Dict[str, torch.Tensor]:
    """Unweighted per-cell Huber and cross-entropy terms for each axis.

    Huber compares the truncated soft-argmax of the tempered distribution with the target and switches to linear
    one bin width away from it. Cross-entropy uses the raw logits.
    """
    width, height = extent
    n = logits_x.shape[-1]
    terms: Dict[str, torch.Tensor] = {}
    for axis, logits, size, target in (
        ("x", logits_x, width, target_xy[..., 0]),
        ("y", logits_y, height, target_xy[..., 1]),
    ):
        decoded = trunc_softargmax(torch.softmax(logits / temperature, dim=-1), delta, size)
        terms[f"huber_{axis}"] = F.huber_loss(decoded, target, reduction="none", delta=size / n)
        terms[f"ce_{axis}"] = cross_entropy(logits, one_hot_target(target.detach(), n, size))
    return terms


def coordinate_loss(
    logits_x: torch.Tensor,
    logits_y: torch.Tensor,
    target_xy: torch.Tensor,
    extent: Tuple[float, float],
    delta: int,
    temperature: float,
    weights: LossWeights,
) -> torch.Tensor:
    terms = coordinate_loss_terms(logits_x, logits_y, target_xy, extent, delta, temperature)
    return (
        weights.huber_x * terms["huber_x"]
        + weights.huber_y * terms["huber_y"]
        + weights.ce_x * terms["ce_x"]
        + weights.ce_y * terms["ce_y"]
    )


def regression_coordinate_loss(
    coords: torch.Tensor, target_xy: torch.Tensor, extent: Tuple[float, float], num_bins: int, weights: LossWeights
) -> torch.Tensor:
    width, height = extent
    huber_x = F.huber_loss(coords[..., 0], target_xy[..., 0], reduction="none", delta=width / num_bins)
    huber_y = F.huber_loss(coords[..., 1], target_xy[..., 1], reduction="none", delta=height / num_bins)
    return weights.huber_x * huber_x + weights.huber_y * huber_y


def visibility_loss(logit: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    return F.binary_cross_entropy_with_logits(logit, label.to(logit.dtype), reduction="none")


def _masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    masked = torch.where(mask, values, torch.zeros_like(values))
    return masked.sum() / mask.sum().clamp_min(1).to(values.dtype)


def layer_loss(
    output: HeadOutput, heads: TrackHeads, targets: LossTargets, weights: LossWeights, num_bins: int
) -> Dict[str, torch.Tensor]:
    height, width = heads.image_size
    extent = (float(width), float(height))
    mask = targets.coord_mask.bool()
    # Targets under the mask are irrelevant but must stay in range for the bin lookup.
    safe_targets = torch.where(mask[..., None], targets.coords, torch.zeros_like(targets.coords))
    safe_targets = torch.stack([safe_targets[..., 0].clamp(0, width), safe_targets[..., 1].clamp(0, height)], dim=-1)

    breakdown: Dict[str, torch.Tensor] = {}
    if output.distribution is not None:
        terms = coordinate_loss_terms(
            output.distribution.logits_x,
            output.distribution.logits_y,
            safe_targets,
            extent,
            heads.delta,
            heads.temperature,
        )
        breakdown["coord_huber"] = _masked_mean(
            weights.huber_x * terms["huber_x"] + weights.huber_y * terms["huber_y"], mask
        )
        breakdown["coord_ce"] = _masked_mean(weights.ce_x * terms["ce_x"] + weights.ce_y * terms["ce_y"], mask)
    else:
        breakdown["coord_huber"] = _masked_mean(
            regression_coordinate_loss(output.coords, safe_targets, extent, num_bins, weights), mask
        )
        breakdown["coord_ce"] = output.coords.new_zeros(())
    breakdown["visibility"] = weights.visibility * visibility_loss(output.visible_logit, targets.visible).mean()
    breakdown["total"] = breakdown["coord_huber"] + breakdown["coord_ce"] + breakdown["visibility"]
    return breakdown


def total_loss(
    heads: TrackHeads,
    per_layer_point_tokens: torch.Tensor,
    targets: LossTargets,
    weights: LossWeights,
    num_bins: int,
) -> Tuple[torch.Tensor, Dict[str, float]]:
    """Equal-weight mean over layers of the masked per-layer loss; only the last layer without intermediate losses.

    Returns the differentiable scalar and a detached per-term breakdown.
    """
    layers = per_layer_point_tokens if weights.intermediate_losses else per_layer_point_tokens[-1:]
    per_layer = [layer_loss(heads(tokens), heads, targets, weights, num_bins) for tokens in layers]
    combined = {key: torch.stack([b[key] for b in per_layer]).mean() for key in per_layer[0]}
    return combined["total"], {key: float(value.detach()) for key, value in combined.items()}
