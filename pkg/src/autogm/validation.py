"""Input checks shared by the estimators and the command line."""
from __future__ import annotations

import numbers

import numpy as np

from .engine import AggregationStrategy, ParamSet
from .graph import SPLITS, Dataset


def check_dataset(dataset) -> Dataset:
    if not isinstance(dataset, Dataset):
        raise TypeError(f"expected a Dataset, got {type(dataset).__name__}")
    if not np.all(np.isfinite(dataset.features)):
        raise ValueError("features contain NaN or infinite values")
    return dataset


def check_split(split: str) -> str:
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}; expected one of {SPLITS}")
    return split


def check_param_set(d, k, w, l, a) -> ParamSet:
    """Build a ParamSet from loosely typed values (numpy ints, 0/1 flags, strategy names)."""
    for name, value in (("d", d), ("k", k), ("w", w)):
        if isinstance(value, bool) or not isinstance(value, numbers.Integral):
            raise TypeError(f"{name} must be an integer, got {value!r}")
    if not isinstance(l, (bool, np.bool_)) and l not in (0, 1):
        raise TypeError(f"l must be boolean, got {l!r}")
    return ParamSet(int(d), int(k), int(w), bool(l), AggregationStrategy.parse(a))


def as_generator(random_state) -> np.random.Generator:
    if random_state is None or isinstance(random_state, numbers.Integral):
        return np.random.default_rng(random_state)
    if isinstance(random_state, np.random.Generator):
        return random_state
    raise TypeError(f"random_state must be None, an int or a Generator, got {random_state!r}")


def check_seed(random_state) -> int:
    if random_state is None:
        return 0
    if isinstance(random_state, bool) or not isinstance(random_state, numbers.Integral):
        raise TypeError(f"random_state must be an int, got {random_state!r}")
    if random_state < 0:
        raise ValueError(f"random_state must be non-negative, got {random_state}")
    return int(random_state)
