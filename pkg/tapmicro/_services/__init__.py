__all__ = [
    "BaseCheckpointManagerService",
    "BaseClipSource",
    "BatchFeed",
    "Checkpoint",
    "DefaultCheckpointManagerService",
    "DirectoryClipSource",
    "SyntheticClipSource",
    "TrainingBatch",
    "TrainingService",
    "evaluate_clips",
    "generate_clip",
    "sample_queries",
    "track_strided",
]

from ._base import BaseCheckpointManagerService, BaseClipSource, Checkpoint
from ._checkpoint_manager import DefaultCheckpointManagerService
from ._data_feed import BatchFeed, DirectoryClipSource, SyntheticClipSource, TrainingBatch
from ._evaluation import evaluate_clips, track_strided
from ._query_sampling import sample_queries
from ._synthetic_data import generate_clip
from ._training import TrainingService
