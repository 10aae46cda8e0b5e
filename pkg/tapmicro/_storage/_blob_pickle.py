import pickle
from dataclasses import dataclass, field
from typing import Any, Optional

from tapmicro._exceptions import InvalidStorageError
from tapmicro._utils import logger

from ._base import BaseBlobStorage


@dataclass
class PickleBlobStorage(BaseBlobStorage[Any]):
    """Opaque picklable state (optimizer moments, RNG snapshots) stored next to a checkpoint.

    Without a namespace the storage is volatile and saving keeps the blob in memory only.
    """

    RESOURCE_NAME = "blob_data.pkl"
    _data: Optional[Any] = field(init=False, default=None)

    def get(self) -> Optional[Any]:
        return self._data

    def set(self, blob: Any) -> None:
        self._data = blob

    def _fail(self, action: str, path: str, error: Exception) -> InvalidStorageError:
        message = f"Could not {action} trainer state '{path}': {error}"
        logger.error(message)
        return InvalidStorageError(message)

    def _save_start(self):
        self._data = None
        if self.namespace is None:
            logger.debug("Saving into a volatile blob storage.")

    def _save_done(self):
        if self.namespace is None:
            return
        path = self.namespace.get_save_path(self.RESOURCE_NAME)
        try:
            with open(path, "wb") as f:
                pickle.dump(self._data, f, protocol=pickle.HIGHEST_PROTOCOL)
        except Exception as e:
            raise self._fail("write", path, e) from e
        logger.debug(f"Saved trainer state to '{path}'.")

    def _load_start(self):
        assert self.namespace is not None, "Loading a blob storage requires a namespace."
        path = self.namespace.get_load_path(self.RESOURCE_NAME)
        if path is None:
            logger.info("No checkpoint to load trainer state from; starting from an empty blob.")
            self._data = None
            return
        try:
            with open(path, "rb") as f:
                self._data = pickle.load(f)
        except Exception as e:
            raise self._fail("read", path, e) from e
