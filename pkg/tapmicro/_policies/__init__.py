__all__ = [
    "BaseOcclusionPolicy",
    "BaseSchedulePolicy",
    "OcclusionPolicy_Uncertainty",
    "OcclusionPolicy_VisibilityOnly",
    "SchedulePolicy_WarmupCosine",
]

from ._base import BaseOcclusionPolicy, BaseSchedulePolicy
from ._occlusion import OcclusionPolicy_Uncertainty, OcclusionPolicy_VisibilityOnly
from ._schedule import SchedulePolicy_WarmupCosine
