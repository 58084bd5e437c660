"""Shared builders for the test suite."""
from __future__ import annotations

import math

import numpy as np
from hypothesis import strategies as st

from semantic_vtr.descriptor import BoundingBox, Detection, ReferenceMemory, SceneDescriptor


def det(cls, x0, y0, x1, y1, conf=1.0) -> Detection:
    return Detection(cls, BoundingBox(x0, y0, x1, y1), conf)


@st.composite
def box_strategy(draw, min_extent=0.02):
    x0 = draw(st.floats(0.0, 1.0 - min_extent))
    y0 = draw(st.floats(0.0, 1.0 - min_extent))
    x1 = draw(st.floats(x0 + min_extent, 1.0))
    y1 = draw(st.floats(y0 + min_extent, 1.0))
    return BoundingBox(x0, y0, x1, y1)


def random_box(rng: np.random.Generator) -> BoundingBox:
    """Box with float32-representable corners, so it survives encoding."""
    x = np.sort(rng.uniform(0.0, 1.0, 2)).astype(np.float32)
    y = np.sort(rng.uniform(0.0, 1.0, 2)).astype(np.float32)
    if x[1] - x[0] < 1e-3:
        x = np.array([0.1, 0.6], dtype=np.float32)
    if y[1] - y[0] < 1e-3:
        y = np.array([0.2, 0.7], dtype=np.float32)
    return BoundingBox(float(x[0]), float(y[0]), float(x[1]), float(y[1]))


def random_scene(rng: np.random.Generator, n: int, vocab: int = 80) -> SceneDescriptor:
    return SceneDescriptor(
        tuple(Detection(int(rng.integers(vocab)), random_box(rng)) for _ in range(n))
    )


def random_memory(
    rng: np.random.Generator, max_keyframes: int = 30, min_dets: int = 0, max_dets: int = 8
) -> ReferenceMemory:
    m = int(rng.integers(1, max_keyframes + 1))
    vocab = int(rng.integers(1, 200))
    period = int(rng.integers(1, 5))
    kfs = tuple(
        random_scene(rng, int(rng.integers(min_dets, max_dets + 1)), vocab) for _ in range(m)
    )
    return ReferenceMemory(kfs, vocab_size=vocab, keyframe_period=period)


def diagonal_table(w: int, m: int, end: int, slope: float = 1.0) -> np.ndarray:
    t = np.zeros((w, m))
    for i in range(w):
        j = int(np.floor(end - (w - 1 - i) * slope + 0.5))
        if 0 <= j < m:
            t[i, j] = 1.0
    return t


def brute_force_line_search(table, velocities):
    """Reference implementation: explicit loops in the stated tie-break order."""
    w, m = len(table), len(table[0])
    best = None
    for e in range(m):
        for v in velocities:
            total = 0.0
            for i in range(w):
                j = math.floor(e - (w - 1 - i) * v + 0.5)
                if 0 <= j < m:
                    total += table[i][j]
            score = total / w
            if best is None or score > best[2]:
                best = (e, v, score)
    return best
