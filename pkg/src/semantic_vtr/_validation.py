"""Input validation helpers shared by the estimators and pure functions."""
from __future__ import annotations

import numpy as np

from .descriptor import ReferenceMemory, SceneDescriptor


def check_memory(memory, min_keyframes: int = 2) -> ReferenceMemory:
    if not isinstance(memory, ReferenceMemory):
        raise TypeError(f"expected ReferenceMemory, got {type(memory).__name__}")
    if len(memory) < min_keyframes:
        raise ValueError(
            f"memory holds {len(memory)} keyframes, at least {min_keyframes} required"
        )
    return memory


def check_scene(scene) -> SceneDescriptor:
    if not isinstance(scene, SceneDescriptor):
        raise TypeError(f"expected SceneDescriptor, got {type(scene).__name__}")
    return scene


def check_recent(recent) -> list[SceneDescriptor]:
    recent = list(recent)
    if not recent:
        raise ValueError("need at least one recent observation")
    for s in recent:
        check_scene(s)
    return recent


def check_table(table) -> np.ndarray:
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 1:
        raise ValueError(f"similarity table must be a non-empty 2-D array, got shape {table.shape}")
    if not np.all(np.isfinite(table)):
        raise ValueError("similarity table contains non-finite values")
    return table


def check_index(index: int, n: int, name: str = "index") -> int:
    if not 0 <= index < n:
        raise IndexError(f"{name} {index} outside [0, {n})")
    return int(index)
