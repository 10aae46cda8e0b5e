__all__ = [
    "BaseBlobStorage",
    "BaseStorage",
    "Namespace",
    "PickleBlobStorage",
    "TensorBlobStorage",
    "Workspace",
]

from ._base import BaseBlobStorage, BaseStorage
from ._blob_pickle import PickleBlobStorage
from ._blob_tensor import TensorBlobStorage
from ._namespace import Namespace, Workspace
