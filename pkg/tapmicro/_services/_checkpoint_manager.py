import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import torch

from tapmicro._exceptions import InvalidStorageError
from tapmicro._model import TrackerModel
from tapmicro._models import ModelConfig, TrainConfig
from tapmicro._storage._blob_pickle import PickleBlobStorage
from tapmicro._storage._blob_tensor import TensorBlobStorage
from tapmicro._storage._namespace import Workspace
from tapmicro._utils import logger

from ._base import BaseCheckpointManagerService, Checkpoint

MODEL_NAMESPACE = "model"
TRAINER_NAMESPACE = "trainer"


@dataclass
class DefaultCheckpointManagerService(BaseCheckpointManagerService):
    """Checkpoints as `<workspace>/<step>/model_tensors.bin` + `model_manifest.json` (+ `trainer_blob_data.pkl`)."""

    def __post_init__(self):
        assert self.workspace is not None, "Workspace must be provided."

    def _model_storage(self) -> TensorBlobStorage:
        return TensorBlobStorage(config=None, namespace=self.workspace.make_for(MODEL_NAMESPACE))  # type: ignore

    def _trainer_storage(self) -> PickleBlobStorage:
        return PickleBlobStorage(config=None, namespace=self.workspace.make_for(TRAINER_NAMESPACE))  # type: ignore

    def save(
        self,
        step: int,
        model: torch.nn.Module,
        model_config: ModelConfig,
        train_config: Optional[TrainConfig] = None,
        metrics: Optional[Dict[str, float]] = None,
        trainer_state: Optional[Dict[str, Any]] = None,
    ) -> str:
        workspace = self.workspace
        assert workspace is not None
        workspace.begin_save(step)

        model_storage = self._model_storage()
        model_storage.save_start()
        model_storage.set(model.state_dict())
        model_storage.metadata = {
            "step": step,
            "model_config": model_config.model_dump(mode="json"),
            "train_config": train_config.model_dump(mode="json") if train_config is not None else None,
            "metrics": dict(metrics or {}),
        }
        model_storage.save_done()

        if trainer_state is not None:
            trainer_storage = self._trainer_storage()
            trainer_storage.save_start()
            trainer_storage.set(trainer_state)
            trainer_storage.save_done()

        path = workspace.get_save_path()
        workspace.finalize()
        workspace.current_load_checkpoint = step
        logger.info(f"Saved checkpoint for step {step} to '{path}'.")
        return path

    def load(self, with_trainer_state: bool = True) -> Checkpoint:
        workspace = self.workspace
        assert workspace is not None

        def _fn() -> Checkpoint:
            model_storage = self._model_storage()
            model_storage.load_start()
            parameters = model_storage.get()
            metadata = model_storage.metadata
            model_storage.load_done()
            if parameters is None or "model_config" not in metadata:
                raise InvalidStorageError("Checkpoint manifest lacks the model configuration.")
            trainer_state = None
            if with_trainer_state:
                trainer_storage = self._trainer_storage()
                # Checkpoints saved outside training carry no trainer state.
                trainer_path = workspace.make_for(TRAINER_NAMESPACE).get_load_path(PickleBlobStorage.RESOURCE_NAME)
                if trainer_path is not None and os.path.exists(trainer_path):
                    trainer_storage.load_start()
                    trainer_state = trainer_storage.get()
                    trainer_storage.load_done()
            train_config = metadata.get("train_config")
            return Checkpoint(
                step=int(metadata["step"]),
                model_config=ModelConfig.model_validate(metadata["model_config"]),
                parameters=parameters,
                train_config=TrainConfig.model_validate(train_config) if train_config else None,
                metrics=dict(metadata.get("metrics") or {}),
                trainer_state=trainer_state,
            )

        checkpoint = workspace.with_checkpoints(_fn)
        workspace.finalize()
        logger.info(f"Loaded checkpoint for step {checkpoint.step} from '{workspace.get_load_path()}'.")
        return checkpoint


def checkpoint_manager_for(path: str, keep_n: int = 0) -> DefaultCheckpointManagerService:
    """Manager over a workspace directory, or pinned to one step directory inside it."""
    if not os.path.isdir(path):
        raise InvalidStorageError(f"Checkpoint path '{path}' does not exist.")
    path = os.path.normpath(path)
    name = os.path.basename(path)
    if name.isdigit() and os.path.exists(os.path.join(path, f"{MODEL_NAMESPACE}_{TensorBlobStorage.MANIFEST_NAME}")):
        workspace = Workspace.new(os.path.dirname(path), checkpoint=int(name), keep_n=keep_n)
    else:
        workspace = Workspace.new(path, keep_n=keep_n)
    if workspace.current_load_checkpoint is None:
        raise InvalidStorageError(f"No checkpoints found under '{path}'.")
    return DefaultCheckpointManagerService(workspace=workspace)


def load_tracker(path: str) -> TrackerModel:
    """Rebuild a TrackerModel in eval mode from a checkpoint directory."""
    checkpoint = checkpoint_manager_for(path).load(with_trainer_state=False)
    model = TrackerModel(checkpoint.model_config)
    model.load_state_dict(checkpoint.parameters)
    model.eval()
    return model
