from dataclasses import dataclass, field
from typing import Any, Generic, Literal, Optional, TypeVar, final

from tapmicro._utils import logger

from ._namespace import Namespace

GTBlob = TypeVar("GTBlob")


@dataclass
class BaseStorage:
    """One component of a checkpoint. A storage is either being saved or being loaded, never both at once.

    Subclasses implement the `_save_*` / `_load_*` hooks; the public calls only sequence them.
    """

    config: Optional[Any] = field()
    namespace: Optional[Namespace] = field(default=None)
    _phase: Optional[Literal["save", "load"]] = field(init=False, default=None)
    _open: bool = field(init=False, default=False)

    @property
    def phase(self) -> Optional[Literal["save", "load"]]:
        return self._phase

    @property
    def is_open(self) -> bool:
        return self._open

    def _close_other(self, phase: Literal["save", "load"]) -> bool:
        """Close an open phase other than `phase`; True when `phase` itself is already open."""
        if not self._open:
            return False
        if self._phase == phase:
            return True
        logger.warning(f"[{type(self).__name__}] Starting to {phase} while a {self._phase} is open; closing it first.")
        if self._phase == "save":
            self._save_done()
        else:
            self._load_done()
        self._open = False
        return False

    @final
    def save_start(self) -> None:
        if self._close_other("save"):
            return
        self._phase, self._open = "save", True
        self._save_start()

    @final
    def save_done(self) -> None:
        if self._phase != "save" or not self._open:
            logger.warning(f"[{type(self).__name__}] No open save to commit.")
            return
        self._save_done()
        self._open = False

    @final
    def load_start(self) -> None:
        if self._close_other("load"):
            return
        self._phase, self._open = "load", True
        self._load_start()

    @final
    def load_done(self) -> None:
        if self._phase != "load" or not self._open:
            logger.warning(f"[{type(self).__name__}] No open load to release.")
            return
        self._load_done()
        self._open = False

    def _save_start(self):
        """Reset the in-memory contents before they are filled."""
        pass

    def _save_done(self):
        """Write the contents under the namespace's save path."""
        pass

    def _load_start(self):
        """Read the contents from the namespace's load path."""
        pass

    def _load_done(self):
        pass


####################################################################################################
# Blob Storage
####################################################################################################


@dataclass
class BaseBlobStorage(BaseStorage, Generic[GTBlob]):
    def get(self) -> Optional[GTBlob]:
        raise NotImplementedError

    def set(self, blob: GTBlob) -> None:
        raise NotImplementedError
