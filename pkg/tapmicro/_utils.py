import json
import logging
import os
import random
from typing import Any, Mapping, Optional

import numpy as np
import numpy.typing as npt
import torch
import xxhash

logger = logging.getLogger("tapmicro")

THREADS_ENV_VAR = "TAPMICRO_THREADS"


def set_seed(seed: int) -> None:
    """Seed python, numpy and torch generators in one go."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def configure_threads(threads: Optional[int] = None) -> int:
    """Cap intra-op threads, reading TAPMICRO_THREADS when no explicit value is given."""
    if threads is None:
        value = os.environ.get(THREADS_ENV_VAR)
        if value:
            try:
                threads = int(value)
            except ValueError:
                logger.warning(f"Ignoring non-integer {THREADS_ENV_VAR}={value!r}.")
    if threads is not None and threads > 0:
        torch.set_num_threads(threads)
        logger.debug(f"Using {threads} intra-op threads.")
    return torch.get_num_threads()


def hash_config(config: Mapping[str, Any]) -> str:
    """Stable hash of a JSON-serializable configuration."""
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return xxhash.xxh3_64_hexdigest(payload.encode("utf-8"))


def array_checksum(array: npt.NDArray[Any]) -> str:
    return xxhash.xxh3_64_hexdigest(np.ascontiguousarray(array).tobytes())


def derive_seed(*parts: int) -> int:
    """Combine integers into one 63-bit seed, independent of call order elsewhere."""
    return xxhash.xxh64_intdigest(",".join(str(p) for p in parts).encode("utf-8")) & ((1 << 63) - 1)
