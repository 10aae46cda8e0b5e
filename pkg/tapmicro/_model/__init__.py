__all__ = [
    "Backbone",
    "RecurrentBlock",
    "RecurrentState",
    "SpatialBlock",
    "StreamingState",
    "TemporalAttentionBlock",
    "TokenCodec",
    "TrackHeads",
    "TrackerModel",
]

from ._backbone import Backbone, StreamingState
from ._codec import TokenCodec
from ._heads import TrackHeads
from ._recurrent import RecurrentBlock, RecurrentState
from ._spatial import SpatialBlock
from ._temporal_attention import TemporalAttentionBlock
from ._tracker_model import TrackerModel
