"""
Utility functions shared by the dodgekit modules
"""

import zlib
from typing import Any

import numpy as np


def derive_seed(base: int, *keys: int | str) -> int:
    """
    Derive a child seed from a base seed and a path of keys.

    String keys are folded through CRC32 so the result is stable across processes
    (Python's hash() is salted per interpreter).
    """
    entropy = [int(base)]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode("utf-8")))
        else:
            entropy.append(int(key))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def make_rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays (possibly nested) to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj
