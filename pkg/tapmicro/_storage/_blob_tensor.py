import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import torch

from tapmicro._exceptions import InvalidStorageError
from tapmicro._models import TensorEntry, TensorManifest
from tapmicro._utils import array_checksum, logger

from ._base import BaseBlobStorage

FORMAT_VERSION = 1


def _to_numpy(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().contiguous().numpy()


@dataclass
class TensorBlobStorage(BaseBlobStorage[Dict[str, torch.Tensor]]):
    """Named tensors as one raw binary blob plus a JSON manifest of shapes, offsets and checksums."""

    RESOURCE_NAME = "tensors.bin"
    MANIFEST_NAME = "manifest.json"
    _data: Optional[Dict[str, torch.Tensor]] = field(init=False, default=None)
    metadata: Dict[str, Any] = field(init=False, default_factory=dict)

    def get(self) -> Optional[Dict[str, torch.Tensor]]:
        return self._data

    def set(self, blob: Dict[str, torch.Tensor]) -> None:
        self._data = dict(blob)

    def _save_start(self):
        self._data = None
        self.metadata = {}

    def _save_done(self):
        if self.namespace is None:
            return
        blob_path = self.namespace.get_save_path(self.RESOURCE_NAME)
        manifest_path = self.namespace.get_save_path(self.MANIFEST_NAME)
        manifest = TensorManifest(format_version=FORMAT_VERSION, metadata=self.metadata)
        try:
            offset = 0
            with open(blob_path, "wb") as f:
                for name, tensor in (self._data or {}).items():
                    array = _to_numpy(tensor)
                    payload = array.tobytes()
                    f.write(payload)
                    manifest.tensors.append(
                        TensorEntry(
                            name=name,
                            shape=list(array.shape),
                            dtype=array.dtype.str,
                            offset=offset,
                            nbytes=len(payload),
                            checksum=array_checksum(array),
                        )
                    )
                    offset += len(payload)
            with open(manifest_path, "w") as f:
                f.write(manifest.model_dump_json(indent=2))
            logger.debug(f"Saved {len(manifest.tensors)} tensors to '{blob_path}'.")
        except OSError as e:
            t = f"Error saving tensor storage {blob_path}: {e}"
            logger.error(t)
            raise InvalidStorageError(t) from e

    def _load_start(self):
        assert self.namespace, "Loading a tensor storage requires a namespace."
        blob_path = self.namespace.get_load_path(self.RESOURCE_NAME)
        manifest_path = self.namespace.get_load_path(self.MANIFEST_NAME)
        if blob_path is None or manifest_path is None or not os.path.exists(manifest_path):
            raise InvalidStorageError(f"No tensor storage found at '{manifest_path}'.")
        try:
            with open(manifest_path, "r") as f:
                manifest = TensorManifest.model_validate_json(f.read())
            with open(blob_path, "rb") as f:
                raw = f.read()
        except Exception as e:
            t = f"Error loading tensor storage {blob_path}: {e}"
            logger.error(t)
            raise InvalidStorageError(t) from e

        if manifest.format_version != FORMAT_VERSION:
            raise InvalidStorageError(f"Unsupported tensor storage format {manifest.format_version}.")
        data: Dict[str, torch.Tensor] = {}
        for entry in manifest.tensors:
            chunk = raw[entry.offset : entry.offset + entry.nbytes]
            if len(chunk) != entry.nbytes:
                raise InvalidStorageError(f"Tensor '{entry.name}' is truncated in '{blob_path}'.")
            array = np.frombuffer(chunk, dtype=np.dtype(entry.dtype)).reshape(entry.shape)
            if array_checksum(array) != entry.checksum:
                t = f"Checksum mismatch for tensor '{entry.name}' in '{blob_path}'."
                logger.error(t)
                raise InvalidStorageError(t)
            data[entry.name] = torch.from_numpy(array.copy())
        self._data = data
        self.metadata = manifest.metadata
