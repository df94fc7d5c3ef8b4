import numpy as np

from typing import Any, Dict, Sequence


# Random Number Functions
def seeded_generator(*keys: int) -> np.random.Generator:
    """Independent generator for a tuple of integer keys, e.g. (seed, batch_index)."""
    return np.random.default_rng([int(key) for key in keys])


# Config Functions
def nest_dotted(flat: Dict[str, Any]) -> Dict[str, Any]:
    """Turn {"model.width": 64} into {"model": {"width": 64}}."""
    nested: Dict[str, Any] = {}

    for key, value in flat.items():
        *parents, leaf = key.split(".")
        node = nested
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value

    return nested


def flatten_dotted(nested: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}

    for key, value in nested.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten_dotted(value, prefix=f"{name}."))
        else:
            flat[name] = value

    return flat


# Array Functions
def flatten_arrays(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(array) for array in arrays])


def split_vector(vector: np.ndarray, shapes: Sequence[Sequence[int]]) -> list:
    """Inverse of `flatten_arrays` for the given shapes."""
    arrays = []
    start = 0

    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(vector[start : start + size].reshape(shape))
        start += size

    return arrays
