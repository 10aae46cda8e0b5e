from dataclasses import dataclass, field
from typing import Tuple

import torch

from tapmicro._models import ModelConfig
from tapmicro._types import CoordinateDistribution, HeadOutput
from tapmicro._utils import logger

from ._base import BaseOcclusionPolicy


def mass_within_radius(p: torch.Tensor, decoded: torch.Tensor, radius: float, extent: float) -> torch.Tensor:
    """Probability mass of the bins whose centers lie within `radius` of the decoded coordinate.

    With `radius` below half a bin width (`extent / (2 * n)`) a coordinate between two centers can see no bin at
    all and gets zero mass, so the uncertainty rule reports it occluded whatever the distribution.
    """
    n = p.shape[-1]
    centers = (torch.arange(n, dtype=p.dtype, device=p.device) + 0.5) * (extent / n)
    within = (centers - decoded[..., None]).abs() <= radius
    return (p * within).sum(dim=-1)


def uncertainty_occlusion(
    dist: CoordinateDistribution,
    coords: torch.Tensor,
    visible_prob: torch.Tensor,
    radius: Tuple[float, float],
    extent: Tuple[float, float],
    threshold: float = 0.5,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Occluded when the visibility head says so or when the coordinate mass is spread outside the radius.

    `radius` and `extent` are (x, y) pairs; returns (occluded, mass_in).
    """
    mass_in = mass_within_radius(dist.p_x, coords[..., 0], radius[0], extent[0]) * mass_within_radius(
        dist.p_y, coords[..., 1], radius[1], extent[1]
    )
    occluded = (visible_prob < threshold) | (mass_in < threshold)
    return occluded, mass_in


class OcclusionPolicy_Uncertainty(BaseOcclusionPolicy):  # noqa: N801
    @dataclass
    class Config:
        radius: Tuple[float, float] = field(default=(1.0, 1.0))
        extent: Tuple[float, float] = field(default=(32.0, 32.0))
        threshold: float = field(default=0.5)

        @staticmethod
        def from_model_config(config: ModelConfig) -> "OcclusionPolicy_Uncertainty.Config":
            height, width = config.image_size
            half_bins = (width / (2 * config.num_bins), height / (2 * config.num_bins))
            if any(r < h for r, h in zip(config.scaled_occlusion_radius, half_bins)):
                logger.warning(
                    f"Occlusion radius {config.scaled_occlusion_radius} is below half a bin {half_bins}; "
                    "coordinates between bin centers will be reported occluded."
                )
            return OcclusionPolicy_Uncertainty.Config(
                radius=config.scaled_occlusion_radius, extent=(float(width), float(height))
            )

    config: Config = field()

    def __call__(self, output: HeadOutput) -> Tuple[torch.Tensor, torch.Tensor]:
        visible_prob = torch.sigmoid(output.visible_logit)
        if output.distribution is None:
            return visible_prob < self.config.threshold, torch.ones_like(visible_prob)
        return uncertainty_occlusion(
            output.distribution,
            output.coords,
            visible_prob,
            self.config.radius,
            self.config.extent,
            self.config.threshold,
        )


class OcclusionPolicy_VisibilityOnly(BaseOcclusionPolicy):  # noqa: N801
    @dataclass
    class Config:
        threshold: float = field(default=0.5)

    config: Config = field()

    def __call__(self, output: HeadOutput) -> Tuple[torch.Tensor, torch.Tensor]:
        visible_prob = torch.sigmoid(output.visible_logit)
        return visible_prob < self.config.threshold, torch.ones_like(visible_prob)


def occlusion_policy_for(config: ModelConfig) -> BaseOcclusionPolicy:
    if config.head_type == "regression":
        return OcclusionPolicy_VisibilityOnly(OcclusionPolicy_VisibilityOnly.Config())
    return OcclusionPolicy_Uncertainty(OcclusionPolicy_Uncertainty.Config.from_model_config(config))
