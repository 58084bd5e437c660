"""Synthetic planar world that stands in for the camera and object detector.

The robot moves on a plane at fixed altitude. Labelled boxes are projected
through an ideal pinhole camera; a detection is produced for every object
whose centre is in front of the camera, in range, inside the image and not
hidden behind a wall, subject to a per-object detection probability scaled
by the global lighting factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .descriptor import BoundingBox, Detection, load_vocabulary

MIN_BOX_EXTENT = 1e-3


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class WorldObject:
    id: int
    class_id: int
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    detect_prob: float = 1.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        if len(self.center) != 3 or len(self.size) != 3:
            raise ValueError("center and size need three components")
        if min(self.size) <= 0:
            raise ValueError(f"object {self.id}: size components must be positive")
        if not 0.0 <= self.detect_prob <= 1.0:
            raise ValueError(f"object {self.id}: detect_prob must be in [0, 1]")

    def corners(self) -> np.ndarray:
        w, d, h = self.size
        sx = np.array([-1, 1, 1, -1, -1, 1, 1, -1]) * (w / 2)
        sy = np.array([-1, -1, 1, 1, -1, -1, 1, 1]) * (d / 2)
        sz = np.array([-1, -1, -1, -1, 1, 1, 1, 1]) * (h / 2)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        cx, cy, cz = self.center
        return np.stack([cx + c * sx - s * sy, cy + s * sx + c * sy, cz + sz], axis=1)


@dataclass(frozen=True)
class Occluder:
    p0: tuple[float, float]
    p1: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "p0", tuple(float(v) for v in self.p0))
        object.__setattr__(self, "p1", tuple(float(v) for v in self.p1))
        if self.p0 == self.p1:
            raise ValueError("occluder segment has zero length")


@dataclass(frozen=True)
class WorldModel:
    objects: tuple[WorldObject, ...] = ()
    occluders: tuple[Occluder, ...] = ()
    lighting_factor: float = 1.0
    arena: tuple[float, float, float, float] = (0.0, 0.0, 10.0, 6.0)
    vocab_size: int = 80

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "occluders", tuple(self.occluders))
        object.__setattr__(self, "arena", tuple(float(v) for v in self.arena))
        if not 0.0 <= self.lighting_factor <= 1.0:
            raise ValueError("lighting_factor must be in [0, 1]")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        for o in self.objects:
            if not 0 <= o.class_id < self.vocab_size:
                raise ValueError(f"object {o.id}: class {o.class_id} outside vocabulary")

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        x0, y0, x1, y1 = self.arena
        return x0 + margin <= x <= x1 - margin and y0 + margin <= y <= y1 - margin


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    yaw: float
    altitude: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "altitude", float(self.altitude))


@dataclass(frozen=True)
class CameraModel:
    hfov: float = 1.2
    aspect: float = 16.0 / 9.0
    max_range: float = 12.0
    near: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.hfov < math.pi:
            raise ValueError("hfov must be in (0, pi)")
        if self.aspect <= 0 or self.max_range <= 0 or self.near <= 0:
            raise ValueError("aspect, max_range and near must be positive")


@dataclass(frozen=True)
class NoiseModel:
    bbox_sigma: float = 0.01
    confidence_range: tuple[float, float] = (0.5, 1.0)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.confidence_range
        if self.bbox_sigma < 0:
            raise ValueError("bbox_sigma must be >= 0")
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("confidence_range must satisfy 0 <= lo <= hi <= 1")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


NOISELESS = NoiseModel(bbox_sigma=0.0, confidence_range=(1.0, 1.0))


@dataclass(frozen=True)
class Perturbation:
    """Objects to drop, objects to shift by (dx, dy, dyaw), optional new lighting."""

    remove: tuple[int, ...] = ()
    move: Mapping[int, tuple[float, float, float]] = field(default_factory=dict)
    lighting_factor: float | None = None


def _segments_cross(p, q, a, b) -> bool:
    def orient(o, s, t):
        return (s[0] - o[0]) * (t[1] - o[1]) - (s[1] - o[1]) * (t[0] - o[0])

    d1, d2 = orient(a, b, p), orient(a, b, q)
    d3, d4 = orient(p, q, a), orient(p, q, b)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 < 0 and d3 * d4 < 0


def line_of_sight(p: Sequence[float], q: Sequence[float], occluders: Sequence[Occluder]) -> bool:
    return not any(_segments_cross(p, q, o.p0, o.p1) for o in occluders)


def project_object(
    obj: WorldObject,
    state: RobotState,
    cam: CameraModel,
    occluders: Sequence[Occluder] = (),
) -> BoundingBox | None:
    """Normalized image box of ``obj`` seen from ``state``, or None if unseen."""
    c, s = math.cos(state.yaw), math.sin(state.yaw)
    ox, oy, oz = obj.center
    rx, ry, rz = ox - state.x, oy - state.y, oz - state.altitude
    depth_c = rx * c + ry * s
    if depth_c <= cam.near:
        return None
    if math.sqrt(rx * rx + ry * ry + rz * rz) > cam.max_range:
        return None
    if occluders and not line_of_sight((state.x, state.y), (ox, oy), occluders):
        return None

    pts = obj.corners()
    dx, dy, dz = pts[:, 0] - state.x, pts[:, 1] - state.y, pts[:, 2] - state.altitude
    depth = np.maximum(dx * c + dy * s, cam.near)
    lat = -dx * s + dy * c
    tan_h = math.tan(cam.hfov / 2.0)
    tan_v = tan_h / cam.aspect
    u = 0.5 - 0.5 * (lat / depth) / tan_h
    v = 0.5 - 0.5 * (dz / depth) / tan_v
    x0, x1 = max(float(u.min()), 0.0), min(float(u.max()), 1.0)
    y0, y1 = max(float(v.min()), 0.0), min(float(v.max()), 1.0)
    if x1 - x0 < MIN_BOX_EXTENT or y1 - y0 < MIN_BOX_EXTENT:
        return None
    return BoundingBox(x0, y0, x1, y1)


def visible_objects(world: WorldModel, state: RobotState, cam: CameraModel):
    out = []
    for obj in world.objects:
        box = project_object(obj, state, cam, world.occluders)
        if box is not None:
            out.append((obj, box))
    return out


def sense(
    world: WorldModel,
    state: RobotState,
    cam: CameraModel,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> list[Detection]:
    """Synthetic detector output for one frame.

    Every visible object consumes the same number of random draws whether or
    not it is detected, so streams stay aligned across lighting settings.
    """
    lo, hi = noise.confidence_range
    dets = []
    for obj, box in visible_objects(world, state, cam):
        draw = rng.random()
        jitter = rng.normal(0.0, 1.0, size=4) * noise.bbox_sigma
        conf = lo + (hi - lo) * rng.random()
        if draw >= obj.detect_prob * world.lighting_factor:
            continue
        x = np.clip(np.array([box.x_min, box.x_max]) + jitter[[0, 2]], 0.0, 1.0)
        y = np.clip(np.array([box.y_min, box.y_max]) + jitter[[1, 3]], 0.0, 1.0)
        x0, x1 = float(min(x)), float(max(x))
        y0, y1 = float(min(y)), float(max(y))
        if x1 - x0 < MIN_BOX_EXTENT or y1 - y0 < MIN_BOX_EXTENT:
            continue
        dets.append(Detection(obj.class_id, BoundingBox(x0, y0, x1, y1), float(conf)))
    return dets


def step_robot(state: RobotState, cmd, dt: float, cfg) -> RobotState:
    """Advance straight ahead or rotate on the spot, never both."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if cmd.advance:
        d = cfg.forward_speed * dt
        return replace(
            state, x=state.x + d * math.cos(state.yaw), y=state.y + d * math.sin(state.yaw)
        )
    limit = cfg.max_yaw_step
    dyaw = min(max(cmd.yaw_adjust, -limit), limit)
    if dyaw == 0.0:
        return state
    return replace(state, yaw=wrap_angle(state.yaw + dyaw))


def perturb_world(world: WorldModel, perturbation: Perturbation) -> WorldModel:
    known = {o.id for o in world.objects}
    unknown = (set(perturbation.remove) | set(perturbation.move)) - known
    if unknown:
        raise KeyError(f"unknown object ids: {sorted(unknown)}")
    removed = set(perturbation.remove)
    objects = []
    for o in world.objects:
        if o.id in removed:
            continue
        if o.id in perturbation.move:
            dx, dy, dyaw = perturbation.move[o.id]
            cx, cy, cz = o.center
            o = replace(o, center=(cx + dx, cy + dy, cz), yaw=o.yaw + dyaw)
        objects.append(o)
    lighting = world.lighting_factor
    if perturbation.lighting_factor is not None:
        lighting = perturbation.lighting_factor
    return replace(world, objects=tuple(objects), lighting_factor=lighting)


# -- world files -------------------------------------------------------------

def world_to_dict(world: WorldModel, vocabulary: Sequence[str] | None = None) -> dict:
    vocabulary = vocabulary or load_vocabulary()
    return {
        "arena": list(world.arena),
        "lighting_factor": world.lighting_factor,
        "objects": [
            {
                "id": o.id,
                "class": vocabulary[o.class_id],
                "center": list(o.center),
                "size": list(o.size),
                "detect_prob": o.detect_prob,
                "yaw": o.yaw,
            }
            for o in world.objects
        ],
        "occluders": [[list(o.p0), list(o.p1)] for o in world.occluders],
    }


def world_from_dict(data: Mapping, vocabulary: Sequence[str] | None = None) -> WorldModel:
    vocabulary = list(vocabulary or load_vocabulary())
    lookup = {name: i for i, name in enumerate(vocabulary)}
    objects = []
    for entry in data.get("objects", []):
        name = entry["class"]
        if name not in lookup:
            raise ValueError(f"class {name!r} not in vocabulary")
        objects.append(
            WorldObject(
                id=int(entry["id"]),
                class_id=lookup[name],
                center=entry["center"],
                size=entry["size"],
                detect_prob=float(entry.get("detect_prob", 1.0)),
                yaw=float(entry.get("yaw", 0.0)),
            )
        )
    occluders = [Occluder(tuple(p0), tuple(p1)) for p0, p1 in data.get("occluders", [])]
    return WorldModel(
        objects=tuple(objects),
        occluders=tuple(occluders),
        lighting_factor=float(data.get("lighting_factor", 1.0)),
        arena=tuple(data.get("arena", (0.0, 0.0, 10.0, 6.0))),
        vocab_size=len(vocabulary),
    )


def save_world(world: WorldModel, path: str | Path, vocabulary: Sequence[str] | None = None) -> None:
    Path(path).write_text(yaml.safe_dump(world_to_dict(world, vocabulary), sort_keys=False))


def load_world(path: str | Path, vocabulary: Sequence[str] | None = None) -> WorldModel:
    data = yaml.safe_load(Path(path).read_text())
    if vocabulary is None and data.get("vocabulary"):
        vocabulary = load_vocabulary(Path(path).parent / data["vocabulary"])
    return world_from_dict(data, vocabulary)
