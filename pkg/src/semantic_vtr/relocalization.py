"""Sequence-based relocalization against a reference memory.

The last ``window`` observations are scored against every keyframe, giving a
similarity table (rows = observations, oldest first; columns = keyframes).
Straight lines through the table correspond to constant teach/repeat speed
ratios; the line with the highest mean wins. Once localized, candidate lines
are re-weighted by a Gaussian kernel centred on the recent match history.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_memory, check_recent, check_table
from .descriptor import MatchConfig, ReferenceMemory, SceneDescriptor, scene_similarity

DEFAULT_VELOCITIES = tuple(round(0.5 + 0.1 * k, 10) for k in range(16))


@dataclass(frozen=True)
class RelocConfig:
    window: int = 10
    velocities: tuple[float, ...] = DEFAULT_VELOCITIES
    beta: float = 1.0
    gamma: float = 10.0
    localized_threshold: float = 0.3
    history_length: int = 5

    def __post_init__(self):
        object.__setattr__(self, "velocities", tuple(float(v) for v in self.velocities))
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not self.velocities or any(v <= 0 for v in self.velocities):
            raise ValueError("velocity ratios must be positive")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.history_length < 1:
            raise ValueError("history_length must be >= 1")


@dataclass(frozen=True)
class LocalizationEstimate:
    matched_index: int
    velocity: float
    score: float
    localized: bool
    history: tuple[int, ...] = field(default_factory=tuple)


def build_similarity_table(
    recent: Sequence[SceneDescriptor], mem: ReferenceMemory, cfg: MatchConfig
) -> np.ndarray:
    check_recent(recent)
    table = np.zeros((len(recent), len(mem)))
    for i, cur in enumerate(recent):
        for j, ref in enumerate(mem.keyframes):
            table[i, j] = scene_similarity(ref, cur, cfg)
    return table


def line_scores(table: np.ndarray, velocities: Sequence[float]) -> np.ndarray:
    """Mean table value along every candidate line, shape (n_velocities, M).

    Entry ``[v, e]`` averages ``table[i, round(e - (W-1-i) * v)]`` over all W
    rows; cells falling outside the table add zero but still count.
    """
    w, m = table.shape
    v = np.asarray(velocities, dtype=float)
    lag = np.arange(w - 1, -1, -1, dtype=float)
    ends = np.arange(m, dtype=float)
    cols = np.floor(ends[None, None, :] - (lag[:, None] * v[None, :])[:, :, None] + 0.5)
    cols = cols.astype(np.int64)
    valid = (cols >= 0) & (cols < m)
    rows = np.broadcast_to(np.arange(w)[:, None, None], cols.shape)
    vals = np.where(valid, table[rows, np.clip(cols, 0, m - 1)], 0.0)
    return vals.sum(axis=0) / w


def _argmax_line(scores: np.ndarray) -> tuple[int, int]:
    # scores is (V, M); first maximum in end-major order gives the tie-break
    flat = int(np.argmax(scores.T))
    e, vi = divmod(flat, scores.shape[0])
    return e, vi


def best_line_search(table: np.ndarray, cfg: RelocConfig) -> tuple[int, float, float]:
    """Return ``(end_index, velocity, score)`` of the best-scoring line.

    Ties go to the smaller end index, then to the smaller velocity.
    """
    table = check_table(table)
    scores = line_scores(table, cfg.velocities)
    e, vi = _argmax_line(scores)
    return e, cfg.velocities[vi], float(scores[vi, e])


def temporality_factor(indices, history: Sequence[int], cfg: RelocConfig):
    """Multiplicative weight ``(1 + beta * k(i)) / (1 + beta)`` where ``k`` is
    an unnormalized Gaussian of width gamma centred on the mean of history."""
    if len(history) == 0:
        return np.ones_like(np.asarray(indices, dtype=float))
    center = float(np.mean(history))
    d = np.asarray(indices, dtype=float) - center
    kernel = np.exp(-(d * d) / (2.0 * cfg.gamma ** 2))
    return (1.0 + cfg.beta * kernel) / (1.0 + cfg.beta)


def apply_temporality(raw_score: float, i: int, history: Sequence[int], cfg: RelocConfig) -> float:
    if len(history) == 0:
        return raw_score
    return raw_score * float(temporality_factor(i, history, cfg))


def update_localization(
    prev: LocalizationEstimate | None,
    recent: Sequence[SceneDescriptor],
    mem: ReferenceMemory,
    match_cfg: MatchConfig,
    reloc_cfg: RelocConfig,
    table: np.ndarray | None = None,
) -> LocalizationEstimate:
    """One relocalization update.

    ``table`` may be supplied when the caller already holds the similarity
    rows for ``recent`` (the repeat loop caches them).
    """
    if table is None:
        table = build_similarity_table(recent, mem, match_cfg)
    table = check_table(table)
    scores = line_scores(table, reloc_cfg.velocities)
    if prev is not None and prev.localized and prev.history:
        weights = temporality_factor(np.arange(table.shape[1]), prev.history, reloc_cfg)
        scores = scores * weights[None, :]
    e, vi = _argmax_line(scores)
    score = float(scores[vi, e])
    history = (prev.history if prev is not None else ()) + (e,)
    return LocalizationEstimate(
        matched_index=e,
        velocity=reloc_cfg.velocities[vi],
        score=score,
        localized=score >= reloc_cfg.localized_threshold,
        history=history[-reloc_cfg.history_length:],
    )


class MemoryIndex:
    """Flattened, array-backed view of a memory for fast similarity rows.

    ``row(cur)`` equals ``[scene_similarity(k, cur) for k in keyframes]`` up to
    float summation order. Keyframes where greedy pairing is not forced (some
    detection has more than one positive same-class candidate) fall back to
    the exact greedy routine.
    """

    def __init__(self, mem: ReferenceMemory, cfg: MatchConfig):
        self.mem = mem
        self.cfg = cfg
        kf, cls, boxes = [], [], []
        for k, scene in enumerate(mem.keyframes):
            for det in scene:
                kf.append(k)
                cls.append(det.class_id)
                boxes.append(det.box.as_tuple())
        self.kf = np.asarray(kf, dtype=np.int64)
        self.cls = np.asarray(cls, dtype=np.int64)
        self.boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
        self.area = (self.boxes[:, 2] - self.boxes[:, 0]) * (self.boxes[:, 3] - self.boxes[:, 1])
        self.counts = np.bincount(self.kf, minlength=len(mem)).astype(float)

    def row(self, cur: SceneDescriptor) -> np.ndarray:
        m = len(self.mem)
        if len(cur) == 0 or self.kf.size == 0:
            return np.zeros(m)
        cb = np.array([d.box.as_tuple() for d in cur], dtype=float)
        ccls = np.array([d.class_id for d in cur], dtype=np.int64)
        carea = (cb[:, 2] - cb[:, 0]) * (cb[:, 3] - cb[:, 1])
        b = self.boxes
        w = np.minimum(b[:, None, 2], cb[None, :, 2]) - np.maximum(b[:, None, 0], cb[None, :, 0])
        h = np.minimum(b[:, None, 3], cb[None, :, 3]) - np.maximum(b[:, None, 1], cb[None, :, 1])
        inter = np.where((w > 0) & (h > 0), w * h, 0.0)
        same = self.cls[:, None] == ccls[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.minimum(1.0, self.cfg.alpha * inter / (self.area[:, None] + carea[None, :]))
        s = np.where(same & (inter > 0), s, 0.0)
        pos = s > 0
        ambiguous = np.zeros(m, dtype=bool)
        multi_row = pos.sum(axis=1) > 1
        if multi_row.any():
            ambiguous[self.kf[multi_row]] = True
        col_counts = np.zeros((m, len(cur)), dtype=np.int64)
        np.add.at(col_counts, self.kf, pos.astype(np.int64))
        ambiguous |= (col_counts > 1).any(axis=1)

        sums = np.bincount(self.kf, weights=s.sum(axis=1), minlength=m)
        out = np.divide(sums, self.counts, out=np.zeros(m), where=self.counts > 0)
        for k in np.flatnonzero(ambiguous):
            out[k] = scene_similarity(self.mem.keyframes[k], cur, self.cfg)
        return out

    def table(self, recent: Sequence[SceneDescriptor]) -> np.ndarray:
        check_recent(recent)
        return np.vstack([self.row(cur) for cur in recent])


class SequenceLocalizer(BaseEstimator):
    """Estimator wrapper around the sequence matcher.

    ``fit`` takes a :class:`ReferenceMemory`; ``transform`` maps a list of
    recent observations to its similarity table; ``predict`` returns the
    matched keyframe index for that window.
    """

    def __init__(
        self,
        alpha=4.0,
        confidence_threshold=0.55,
        window=10,
        velocities=DEFAULT_VELOCITIES,
        beta=1.0,
        gamma=10.0,
        localized_threshold=0.3,
        history_length=5,
    ):
        self.alpha = alpha
        self.confidence_threshold = confidence_threshold
        self.window = window
        self.velocities = velocities
        self.beta = beta
        self.gamma = gamma
        self.localized_threshold = localized_threshold
        self.history_length = history_length

    @property
    def match_config(self) -> MatchConfig:
        return MatchConfig(alpha=self.alpha, confidence_threshold=self.confidence_threshold)

    @property
    def reloc_config(self) -> RelocConfig:
        return RelocConfig(
            window=self.window,
            velocities=tuple(self.velocities),
            beta=self.beta,
            gamma=self.gamma,
            localized_threshold=self.localized_threshold,
            history_length=self.history_length,
        )

    def fit(self, memory, y=None):
        memory = check_memory(memory, min_keyframes=1)
        self.reloc_config  # validates parameters
        self.memory_ = memory
        self.index_ = MemoryIndex(memory, self.match_config)
        self.n_keyframes_ = len(memory)
        return self

    def transform(self, recent):
        check_is_fitted(self, "index_")
        return self.index_.table(list(recent)[-self.window:])

    def localize(self, recent, prev=None, table=None) -> LocalizationEstimate:
        check_is_fitted(self, "index_")
        if table is None:
            table = self.transform(recent)
        return update_localization(
            prev, recent, self.memory_, self.match_config, self.reloc_config, table=table
        )

    def predict(self, recent) -> int:
        return self.localize(recent).matched_index


def write_table_csv(table: np.ndarray, path: str | Path) -> None:
    """One row per observation, one column per keyframe."""
    table = check_table(table)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"kf{j}" for j in range(table.shape[1])])
        for row in table:
            writer.writerow([f"{v:.6f}" for v in row])
