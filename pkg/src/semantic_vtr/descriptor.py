"""Scene descriptors built from object detections, their similarity scores,
and the binary reference-memory format.

A scene is nothing more than a short list of (class id, bounding box)
records. Boxes live in normalized image coordinates with the origin at the
top-left corner.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

DEFAULT_VOCAB_SIZE = 80
MAX_DETECTIONS = 32

MAGIC = b"SVTR"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHHI")
_COUNT = struct.Struct("<H")
_RECORD = struct.Struct("<5f")


class MemoryFormatError(ValueError):
    """Raised when a memory byte stream cannot be decoded."""


def load_vocabulary(path: str | Path | None = None) -> list[str]:
    """Read an ordered class-name list, one name per line.

    Without a path the bundled 80-class COCO-style list is returned.
    """
    if path is None:
        text = resources.files("semantic_vtr").joinpath("data/coco80.txt").read_text()
    else:
        text = Path(path).read_text()
    return [line.strip() for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) and 0.0 <= c <= 1.0 for c in coords):
            raise ValueError(f"box coordinates must lie in [0, 1]: {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"box has zero or negative extent: {coords}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def x_center(self) -> float:
        return 0.5 * (self.x_min + self.x_max)

    def intersection_area(self, other: "BoundingBox") -> float:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if w <= 0.0 or h <= 0.0:
            return 0.0
        return w * h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class Detection:
    class_id: int
    box: BoundingBox
    confidence: float = 1.0

    def __post_init__(self):
        if int(self.class_id) != self.class_id or self.class_id < 0:
            raise ValueError(f"class id must be a non-negative integer, got {self.class_id}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class SceneDescriptor:
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        if len(self.detections) > MAX_DETECTIONS:
            raise ValueError(
                f"scene holds {len(self.detections)} detections, limit is {MAX_DETECTIONS}"
            )

    def __len__(self) -> int:
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def __getitem__(self, i: int) -> Detection:
        return self.detections[i]


@dataclass(frozen=True)
class ReferenceMemory:
    """The taught trajectory: keyframes in teaching order."""

    keyframes: tuple[SceneDescriptor, ...]
    vocab_size: int = DEFAULT_VOCAB_SIZE
    keyframe_period: int = 1

    def __post_init__(self):
        object.__setattr__(self, "keyframes", tuple(self.keyframes))
        if not 1 <= self.vocab_size <= 0xFFFF:
            raise ValueError(f"vocabulary size out of range: {self.vocab_size}")
        if not 1 <= self.keyframe_period <= 0xFFFF:
            raise ValueError(f"keyframe period out of range: {self.keyframe_period}")
        for k, scene in enumerate(self.keyframes):
            for det in scene:
                if det.class_id >= self.vocab_size:
                    raise ValueError(
                        f"keyframe {k}: class id {det.class_id} outside vocabulary of {self.vocab_size}"
                    )

    def __len__(self) -> int:
        return len(self.keyframes)


@dataclass(frozen=True)
class MatchConfig:
    alpha: float = 4.0
    confidence_threshold: float = 0.55
    blacklist: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "blacklist", frozenset(self.blacklist))
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0, 1]")


def filter_detections(raw: Iterable[Detection], cfg: MatchConfig) -> SceneDescriptor:
    kept = [
        d for d in raw
        if d.confidence >= cfg.confidence_threshold and d.class_id not in cfg.blacklist
    ]
    return SceneDescriptor(tuple(kept[:MAX_DETECTIONS]))


def object_similarity(ref: Detection, cur: Detection, cfg: MatchConfig) -> float:
    """Weighted overlap of two same-class detections, clamped to [0, 1].

    Score is ``alpha * area(ref & cur) / (area(ref) + area(cur))``; detections
    of different classes score 0.
    """
    if ref.class_id != cur.class_id:
        return 0.0
    inter = ref.box.intersection_area(cur.box)
    if inter <= 0.0:
        return 0.0
    return min(1.0, cfg.alpha * inter / (ref.box.area + cur.box.area))


def match_objects(
    ref: SceneDescriptor, cur: SceneDescriptor, cfg: MatchConfig
) -> list[tuple[int, int]]:
    """Greedy one-to-one pairing of same-class detections.

    Candidate pairs are accepted in descending score order, ties going to the
    lower (ref index, cur index). Zero-score pairs are never accepted.
    """
    return [(i, j) for i, j, _ in _greedy_pairs(ref, cur, cfg)]


def _greedy_pairs(ref, cur, cfg):
    candidates = []
    for i, r in enumerate(ref.detections):
        for j, c in enumerate(cur.detections):
            if r.class_id == c.class_id:
                s = object_similarity(r, c, cfg)
                if s > 0.0:
                    candidates.append((-s, i, j))
    candidates.sort()
    used_ref, used_cur, pairs = set(), set(), []
    for neg_s, i, j in candidates:
        if i in used_ref or j in used_cur:
            continue
        used_ref.add(i)
        used_cur.add(j)
        pairs.append((i, j, -neg_s))
    return pairs


def scene_similarity(ref: SceneDescriptor, cur: SceneDescriptor, cfg: MatchConfig) -> float:
    """Mean matched-pair similarity over the objects of the reference scene.

    Reference objects left unmatched contribute zero; extra objects in the
    current scene are ignored.
    """
    if len(ref) == 0:
        return 0.0
    total = sum(s for _, _, s in _greedy_pairs(ref, cur, cfg))
    return total / len(ref)


# -- binary memory format ----------------------------------------------------

def encode_scene(scene: SceneDescriptor) -> bytes:
    """Per-detection payload: five little-endian float32 values."""
    return b"".join(
        _RECORD.pack(float(d.class_id), *d.box.as_tuple()) for d in scene
    )


def encode_memory(mem: ReferenceMemory) -> bytes:
    if len(mem.keyframes) > 0xFFFFFFFF:
        raise ValueError("too many keyframes")
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, mem.vocab_size, mem.keyframe_period, len(mem))]
    for scene in mem.keyframes:
        chunks.append(_COUNT.pack(len(scene)))
        chunks.append(encode_scene(scene))
    return b"".join(chunks)


def decode_memory(data: bytes) -> ReferenceMemory:
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise MemoryFormatError("truncated header")
    magic, version, vocab_size, period, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise MemoryFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise MemoryFormatError(f"unsupported format version {version}")
    if vocab_size == 0 or period == 0:
        raise MemoryFormatError("vocabulary size and keyframe period must be positive")

    offset = _HEADER.size
    keyframes = []
    for k in range(count):
        if offset + _COUNT.size > len(data):
            raise MemoryFormatError(f"truncated before keyframe {k}")
        (n,) = _COUNT.unpack_from(data, offset)
        offset += _COUNT.size
        if n > MAX_DETECTIONS:
            raise MemoryFormatError(f"keyframe {k} claims {n} detections")
        end = offset + n * _RECORD.size
        if end > len(data):
            raise MemoryFormatError(f"truncated payload in keyframe {k}")
        dets = []
        for rec in _RECORD.iter_unpack(data[offset:end]):
            cls = rec[0]
            if not (math.isfinite(cls) and cls == int(cls) and 0 <= cls < vocab_size):
                raise MemoryFormatError(f"keyframe {k}: invalid class id {cls}")
            try:
                box = BoundingBox(*rec[1:])
            except ValueError as exc:
                raise MemoryFormatError(f"keyframe {k}: {exc}") from None
            dets.append(Detection(int(cls), box))
        keyframes.append(SceneDescriptor(tuple(dets)))
        offset = end
    if offset != len(data):
        raise MemoryFormatError(f"{len(data) - offset} trailing bytes")
    return ReferenceMemory(tuple(keyframes), vocab_size=vocab_size, keyframe_period=period)


def save_memory(mem: ReferenceMemory, path: str | Path) -> None:
    Path(path).write_bytes(encode_memory(mem))


def load_memory(path: str | Path) -> ReferenceMemory:
    return decode_memory(Path(path).read_bytes())


# -- observation logs --------------------------------------------------------

_OBS_FIELDS = ["frame", "class_id", "x_min", "y_min", "x_max", "y_max", "confidence"]


def write_observations_csv(scenes: Iterable[SceneDescriptor], path: str | Path) -> None:
    """One row per detection; a frame without detections keeps a blank row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_OBS_FIELDS)
        for k, scene in enumerate(scenes):
            if len(scene) == 0:
                w.writerow([k] + [""] * 6)
            for d in scene:
                w.writerow([k, d.class_id, *map(repr, d.box.as_tuple()), repr(d.confidence)])


def read_observations_csv(path: str | Path) -> list[SceneDescriptor]:
    frames: dict[int, list[Detection]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(_OBS_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"observation log lacks columns {sorted(missing)}")
        for row in reader:
            dets = frames.setdefault(int(row["frame"]), [])
            if row["class_id"] == "":
                continue
            box = BoundingBox(*(float(row[k]) for k in ("x_min", "y_min", "x_max", "y_max")))
            dets.append(Detection(int(row["class_id"]), box, float(row["confidence"])))
    if not frames:
        return []
    return [SceneDescriptor(tuple(frames.get(k, ()))) for k in range(max(frames) + 1)]
