from dataclasses import dataclass, field
from typing import Any, Tuple

import torch

from tapmicro._types import HeadOutput


@dataclass
class BasePolicy:
    config: Any = field()


####################################################################################################
# OCCLUSION POLICIES
####################################################################################################


@dataclass
class BaseOcclusionPolicy(BasePolicy):
    def __call__(self, output: HeadOutput) -> Tuple[torch.Tensor, torch.Tensor]:
        """Return (occluded, mass_in_radius) for every cell of a head output."""
        raise NotImplementedError


####################################################################################################
# LEARNING RATE POLICIES
####################################################################################################


@dataclass
class BaseSchedulePolicy(BasePolicy):
    def __call__(self, step: int) -> float:
        raise NotImplementedError
