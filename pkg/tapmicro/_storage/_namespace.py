import os
import shutil
from typing import Any, Callable, List, Optional

from tapmicro._exceptions import InvalidStorageError
from tapmicro._utils import logger

FAILED_PREFIX = "0__err_"


def _step_dirs(working_dir: str) -> List[int]:
    """Training steps that own a checkpoint directory, newest first."""
    steps = [int(entry.name) for entry in os.scandir(working_dir) if entry.is_dir() and entry.name.isdigit()]
    return sorted(steps, reverse=True)


class Workspace:
    """The checkpoints of one run, laid out as `<working_dir>/<step>/<namespace>_<resource>`.

    Loading starts at the newest step (or a pinned one) and walks back to older steps until the loader succeeds.
    `finalize` renames the steps that failed with `FAILED_PREFIX` and keeps only the newest `keep_n` steps.
    """

    @staticmethod
    def new(working_dir: str, checkpoint: Optional[int] = None, keep_n: int = 0) -> "Workspace":
        return Workspace(working_dir, checkpoint, keep_n)

    def __init__(self, working_dir: str, checkpoint: Optional[int] = None, keep_n: int = 0):
        os.makedirs(working_dir, exist_ok=True)
        self.working_dir: str = working_dir
        self.keep_n: int = keep_n
        self.checkpoints: List[int] = _step_dirs(working_dir)
        self.current_load_checkpoint: Optional[int] = None
        if self.checkpoints:
            self.current_load_checkpoint = checkpoint if checkpoint is not None else self.checkpoints[0]
        self.save_checkpoint: Optional[int] = None
        self.failed_checkpoints: List[str] = []

    def step_dir(self, step: Optional[int]) -> Optional[str]:
        return None if step is None else os.path.join(self.working_dir, str(step))

    def make_for(self, namespace: str) -> "Namespace":
        return Namespace(self, namespace)

    def get_load_path(self) -> Optional[str]:
        return self.step_dir(self.current_load_checkpoint)

    def begin_save(self, step: int) -> None:
        self.save_checkpoint = step

    def get_save_path(self) -> str:
        path = self.step_dir(self.save_checkpoint)
        if path is None:
            raise InvalidStorageError("No checkpoint selected for saving; call begin_save first.")
        os.makedirs(path, exist_ok=True)
        return path

    def _older_step(self, step: int) -> Optional[int]:
        return next((s for s in self.checkpoints if s < step), None)

    def with_checkpoints(self, fn: Callable[[], Any]) -> Any:
        """Return `fn()` at the newest step where it succeeds; every step it failed on is recorded."""
        while self.current_load_checkpoint is not None:
            try:
                return fn()
            except Exception as e:
                failed = self.current_load_checkpoint
                self.failed_checkpoints.append(str(failed))
                self.current_load_checkpoint = self._older_step(failed)
                if self.current_load_checkpoint is None:
                    logger.warning(f"Checkpoint {failed} failed to load ({e}); no older checkpoint to roll back to.")
                else:
                    logger.warning(
                        f"Checkpoint {failed} failed to load ({e}); rolling back to {self.current_load_checkpoint}."
                    )
        raise InvalidStorageError("No valid checkpoints to load.")

    def finalize(self) -> None:
        for step in self.failed_checkpoints:
            path = os.path.join(self.working_dir, step)
            if os.path.exists(path):
                os.rename(path, os.path.join(self.working_dir, f"{FAILED_PREFIX}{step}"))
        self.failed_checkpoints = []

        self.checkpoints = _step_dirs(self.working_dir)
        if self.keep_n <= 0:
            return
        for step in self.checkpoints[self.keep_n :]:
            shutil.rmtree(os.path.join(self.working_dir, str(step)))
            logger.debug(f"Removed checkpoint {step}; keeping the newest {self.keep_n}.")
        self.checkpoints = self.checkpoints[: self.keep_n]


class Namespace:
    """The files of one component (model parameters, trainer state) inside the workspace's step directories."""

    def __init__(self, workspace: Workspace, namespace: Optional[str] = None):
        self.namespace = namespace
        self.workspace = workspace

    def _resource(self, step_dir: str, resource_name: str) -> str:
        assert self.namespace is not None, "Namespace must be set to resolve resource paths."
        return os.path.join(step_dir, f"{self.namespace}_{resource_name}")

    def get_load_path(self, resource_name: str) -> Optional[str]:
        step_dir = self.workspace.get_load_path()
        return None if step_dir is None else self._resource(step_dir, resource_name)

    def get_save_path(self, resource_name: str) -> str:
        return self._resource(self.workspace.get_save_path(), resource_name)
