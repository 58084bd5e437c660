"""Teach runs, closed-loop repeat runs and seeded batch experiments."""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from ._validation import check_memory
from .controller import ControlConfig, FunnelLaneController, end_reached
from .descriptor import (
    MatchConfig,
    ReferenceMemory,
    SceneDescriptor,
    decode_memory,
    encode_memory,
    filter_detections,
    load_memory,
    load_vocabulary,
)
from .relocalization import RelocConfig, SequenceLocalizer, update_localization
from .simulator import (
    CameraModel,
    NoiseModel,
    Perturbation,
    RobotState,
    WorldModel,
    load_world,
    perturb_world,
    sense,
    step_robot,
)

__all__ = [
    "TaughtTrajectory",
    "Configs",
    "StepRecord",
    "RunLog",
    "ExperimentConfig",
    "teach",
    "repeat",
    "end_reached",
    "run_experiment",
    "sample_start",
    "TrialResult",
    "results_to_csv",
    "summarize",
]

OUTCOMES = ("completed", "endpoint_miss", "timeout", "left_arena")


@dataclass(frozen=True)
class TaughtTrajectory:
    """Waypoints ``(x, y, yaw)`` at a fixed sample period."""

    waypoints: np.ndarray
    max_spacing: float = 0.1

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 3 or len(wp) < 2:
            raise ValueError("trajectory needs at least two (x, y, yaw) waypoints")
        steps = np.hypot(np.diff(wp[:, 0]), np.diff(wp[:, 1]))
        if steps.max() > self.max_spacing:
            raise ValueError(
                f"waypoint spacing {steps.max():.3f} m exceeds bound {self.max_spacing} m"
            )
        wp.setflags(write=False)
        object.__setattr__(self, "waypoints", wp)

    def __len__(self) -> int:
        return len(self.waypoints)

    @property
    def start(self) -> RobotState:
        x, y, yaw = self.waypoints[0]
        return RobotState(x, y, yaw)

    @property
    def goal(self) -> tuple[float, float]:
        return float(self.waypoints[-1, 0]), float(self.waypoints[-1, 1])

    @classmethod
    def from_polyline(cls, points, spacing: float = 0.03, turn_radius: float = 0.5, **kw):
        """Straight segments joined by circular arcs, resampled at ``spacing``."""
        pts = np.asarray(points, dtype=float)
        path = [pts[0]]
        for k in range(1, len(pts) - 1):
            a, b, c = pts[k - 1], pts[k], pts[k + 1]
            u = (b - a) / np.linalg.norm(b - a)
            v = (c - b) / np.linalg.norm(c - b)
            turn = math.atan2(u[0] * v[1] - u[1] * v[0], float(u @ v))
            cut = turn_radius * math.tan(abs(turn) / 2.0)
            p_in, p_out = b - u * cut, b + v * cut
            path.append(p_in)
            normal = np.array([-u[1], u[0]]) * math.copysign(1.0, turn)
            center = p_in + normal * turn_radius
            start_ang = math.atan2(p_in[1] - center[1], p_in[0] - center[0])
            for t in np.linspace(0.0, 1.0, 24)[1:-1]:
                ang = start_ang + turn * t
                path.append(center + turn_radius * np.array([math.cos(ang), math.sin(ang)]))
            path.append(p_out)
        path.append(pts[-1])
        path = np.array(path)

        seg = np.hypot(*np.diff(path, axis=0).T)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        n = int(math.floor(s[-1] / spacing)) + 1
        si = np.arange(n) * spacing
        x = np.interp(si, s, path[:, 0])
        y = np.interp(si, s, path[:, 1])
        heading = np.arctan2(np.gradient(y), np.gradient(x))
        return cls(np.stack([x, y, heading], axis=1), **kw)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "yaw"])
            for x, y, yaw in self.waypoints:
                w.writerow([repr(float(x)), repr(float(y)), repr(float(yaw))])

    @classmethod
    def from_csv(cls, path, **kw):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        return cls(np.array([[float(v) for v in r[:3]] for r in rows]), **kw)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


@dataclass(frozen=True)
class Configs:
    """Bundle of every tunable used by teach and repeat runs."""

    match: MatchConfig = field(default_factory=MatchConfig)
    reloc: RelocConfig = field(default_factory=RelocConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    camera: CameraModel = field(default_factory=CameraModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    keyframe_period: int = 2
    goal_tolerance: float = 0.5

    @classmethod
    def from_dict(cls, data: Mapping[str, Any] | None) -> "Configs":
        data = dict(data or {})
        sections = {
            "match": MatchConfig,
            "reloc": RelocConfig,
            "control": ControlConfig,
            "camera": CameraModel,
            "noise": NoiseModel,
        }
        kwargs = {}
        for name, typ in sections.items():
            section = dict(data.pop(name, None) or {})
            if name == "match" and "blacklist" in section:
                section["blacklist"] = frozenset(_class_ids(section["blacklist"]))
            for key in ("velocities", "confidence_range"):
                if key in section:
                    section[key] = tuple(section[key])
            _reject_unknown(section, typ, name)
            kwargs[name] = typ(**section)
        _reject_unknown(data, cls, "config")
        kwargs.update(data)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "Configs":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))

    def to_dict(self) -> dict:
        """Plain-data form accepted by ``from_dict`` (blacklist as class names)."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if hasattr(value, "__dataclass_fields__"):
                value = {k: _plain(v) for k, v in asdict(value).items()}
            out[f.name] = value
        vocab = load_vocabulary()
        out["match"]["blacklist"] = sorted(vocab[i] for i in self.match.blacklist)
        return out


def _plain(v):
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    if isinstance(v, frozenset):
        return sorted(v)
    return v


def _class_ids(items) -> list[int]:
    vocab = None
    out = []
    for item in items:
        if isinstance(item, str):
            vocab = vocab or load_vocabulary()
            out.append(vocab.index(item))
        else:
            out.append(int(item))
    return out


def _reject_unknown(section: Mapping, typ, name: str) -> None:
    allowed = {f.name for f in fields(typ)}
    extra = set(section) - allowed
    if extra:
        raise ValueError(f"unknown {name} keys: {sorted(extra)}")


# -- teach -------------------------------------------------------------------

def teach(
    world: WorldModel,
    trajectory: TaughtTrajectory,
    configs: Configs | None = None,
    seed: int | None = None,
) -> ReferenceMemory:
    """Carry a passive camera along the trajectory and record keyframes.

    The returned memory has already been through the binary format, so it is
    identical to what a later ``load_memory`` call yields.
    """
    cfg = configs or Configs()
    for x, y, _ in trajectory.waypoints:
        if not world.contains(x, y):
            raise ValueError(f"waypoint ({x:.2f}, {y:.2f}) lies outside the arena")
    rng = np.random.default_rng(cfg.noise.seed if seed is None else seed)
    keyframes = []
    for k, (x, y, yaw) in enumerate(trajectory.waypoints):
        if k % cfg.keyframe_period:
            continue
        raw = sense(world, RobotState(x, y, yaw), cfg.camera, cfg.noise, rng)
        keyframes.append(filter_detections(raw, cfg.match))
    mem = ReferenceMemory(tuple(keyframes), world.vocab_size, cfg.keyframe_period)
    return decode_memory(encode_memory(mem))


# -- repeat ------------------------------------------------------------------

@dataclass(frozen=True)
class StepRecord:
    step: int
    time: float
    x: float
    y: float
    yaw: float
    mode: str
    matched_index: int
    velocity: float
    score: float
    localized: bool
    n_detections: int
    theta_funnel: float
    theta_virtual: float
    theta_total: float
    advance: bool


@dataclass
class RunLog:
    records: list[StepRecord]
    outcome: str
    final_distance: float
    elapsed_steps: int
    # filtered scene sensed at each step, aligned with ``records``
    observations: list[SceneDescriptor] = field(default_factory=list, repr=False)

    @property
    def matched_indexes(self) -> list[int]:
        return [r.matched_index for r in self.records]

    @property
    def mean_score(self) -> float:
        if not self.records:
            return 0.0
        return float(np.mean([r.score for r in self.records]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        names = [f.name for f in fields(StepRecord)]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names)
        for r in self.records:
            w.writerow([_fmt(getattr(r, n)) for n in names])
        w.writerow([])
        w.writerow(["outcome", self.outcome])
        w.writerow(["final_distance", _fmt(self.final_distance)])
        w.writerow(["elapsed_steps", self.elapsed_steps])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def repeat(
    world: WorldModel,
    memory: ReferenceMemory,
    start: RobotState,
    configs: Configs | None = None,
    seed: int = 0,
    goal: tuple[float, float] | None = None,
    timeout: int | None = None,
) -> RunLog:
    """Closed-loop repeat run: sense, filter, relocalize, control, move.

    A new observation enters the relocalization window every
    ``keyframe_period`` forward steps, so consecutive slots are one taught
    keyframe spacing apart at nominal speed. While the robot rotates on the
    spot the newest slot is refreshed with the latest view of that pose.
    Losing localization discards the window, so the search spin relocalizes
    from the live view alone, as at the start of a run.
    """
    cfg = configs or Configs()
    memory = check_memory(memory, min_keyframes=2)
    ctl = cfg.control
    if timeout is None:
        timeout = 10 * len(memory) * memory.keyframe_period
    rng = np.random.default_rng(seed)

    localizer = SequenceLocalizer(
        alpha=cfg.match.alpha,
        confidence_threshold=cfg.match.confidence_threshold,
        **{f.name: getattr(cfg.reloc, f.name) for f in fields(RelocConfig)},
    ).fit(memory)
    controller = FunnelLaneController(alpha=cfg.match.alpha, **asdict(ctl)).fit(memory)
    index = localizer.index_

    scenes: deque[SceneDescriptor] = deque(maxlen=cfg.reloc.window)
    rows: deque[np.ndarray] = deque(maxlen=cfg.reloc.window)
    fresh_slot = True
    slot_moved = False
    advances = 0
    loc = None
    state = start
    records: list[StepRecord] = []
    observations: list[SceneDescriptor] = []
    outcome = "timeout"

    def distance() -> float:
        if goal is None:
            return float("nan")
        return math.hypot(state.x - goal[0], state.y - goal[1])

    for step in range(timeout):
        scene = filter_detections(sense(world, state, cfg.camera, cfg.noise, rng), cfg.match)
        observations.append(scene)
        row = index.row(scene)
        if fresh_slot or not scenes:
            scenes.append(scene)
            rows.append(row)
            fresh_slot = False
            slot_moved = False
        elif not slot_moved:
            scenes[-1] = scene
            rows[-1] = row
        loc = update_localization(
            loc, list(scenes), memory, cfg.match, cfg.reloc, table=np.vstack(rows)
        )
        cmd = controller.predict(loc, scene)
        records.append(
            StepRecord(
                step, step * ctl.dt, state.x, state.y, state.yaw, cmd.mode,
                loc.matched_index, loc.velocity, loc.score, loc.localized, len(scene),
                cmd.theta_funnel, cmd.theta_virtual, cmd.theta_total, cmd.advance,
            )
        )
        if cmd.mode == "done":
            d = distance()
            outcome = "completed" if goal is None or d < cfg.goal_tolerance else "endpoint_miss"
            break
        state = step_robot(state, cmd, ctl.dt, ctl)
        if cmd.mode == "search":
            scenes.clear()
            rows.clear()
        elif cmd.advance:
            slot_moved = True
            advances += 1
            if advances % memory.keyframe_period == 0:
                fresh_slot = True
        if not world.contains(state.x, state.y):
            outcome = "left_arena"
            break
    return RunLog(records, outcome, distance(), len(records), observations)


# -- experiments -------------------------------------------------------------

@dataclass
class ExperimentConfig:
    world: WorldModel | str | Path
    trajectory: TaughtTrajectory | str | Path
    trials: int = 12
    seeds: Sequence[int] | None = None
    base_seed: int = 0
    start_radius: float = 5.0
    start_yaw_spread: float | None = None
    start_margin: float = 0.3
    perturbation: Perturbation | None = None
    timeout_steps: int | None = None
    teach_seed: int = 0
    memory: ReferenceMemory | str | Path | None = None
    configs: Configs = field(default_factory=Configs)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        if self.seeds is not None and len(self.seeds) < self.trials:
            raise ValueError("fewer seeds than trials")

    def trial_seeds(self) -> list[int]:
        if self.seeds is not None:
            return [int(s) for s in self.seeds[: self.trials]]
        return [self.base_seed + t for t in range(self.trials)]

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        data = yaml.safe_load(path.read_text()) or {}
        base = path.parent

        def rel(p):
            return p if p is None else base / p

        start = data.pop("start", {}) or {}
        pert = data.pop("perturbation", None)
        perturbation = None
        if pert:
            perturbation = Perturbation(
                remove=tuple(int(i) for i in pert.get("remove", ())),
                move={int(k): tuple(v) for k, v in (pert.get("move") or {}).items()},
                lighting_factor=pert.get("lighting_factor"),
            )
        configs = Configs.from_dict(
            {k: data.pop(k) for k in list(data) if k in {f.name for f in fields(Configs)}}
        )
        return cls(
            world=rel(data.pop("world")),
            trajectory=rel(data.pop("trajectory")),
            memory=rel(data.pop("memory", None)),
            start_radius=float(start.get("radius", 5.0)),
            start_yaw_spread=start.get("yaw_spread"),
            start_margin=float(start.get("margin", 0.3)),
            perturbation=perturbation,
            configs=configs,
            **data,
        )


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    start_x: float
    start_y: float
    start_yaw: float
    outcome: str
    final_distance: float
    elapsed_steps: int
    mean_score: float


def sample_start(
    center: RobotState,
    world: WorldModel,
    rng: np.random.Generator,
    radius: float,
    yaw_spread: float | None = None,
    margin: float = 0.3,
) -> RobotState:
    """Uniform position in a disc around ``center`` (rejecting points outside
    the arena), yaw uniform on the circle or within ``yaw_spread`` of the
    centre's heading."""
    for _ in range(10_000):
        r = radius * math.sqrt(rng.random())
        a = 2.0 * math.pi * rng.random()
        x = float(center.x + r * math.cos(a))
        y = float(center.y + r * math.sin(a))
        if world.contains(x, y, margin):
            break
    else:
        raise RuntimeError("could not sample a start pose inside the arena")
    if yaw_spread is None:
        yaw = math.pi - 2.0 * math.pi * rng.random()
    else:
        yaw = center.yaw + yaw_spread * (2.0 * rng.random() - 1.0)
    return RobotState(x, y, yaw, center.altitude)


def _resolve(cfg: ExperimentConfig):
    world = cfg.world if isinstance(cfg.world, WorldModel) else load_world(cfg.world)
    traj = cfg.trajectory
    if not isinstance(traj, TaughtTrajectory):
        traj = TaughtTrajectory.from_csv(traj)
    mem = cfg.memory
    if mem is None:
        mem = teach(world, traj, cfg.configs, seed=cfg.teach_seed)
    elif not isinstance(mem, ReferenceMemory):
        mem = load_memory(mem)
    return world, traj, mem


def run_experiment(cfg: ExperimentConfig) -> list[TrialResult]:
    """Run every trial with its own seed; rows come back in trial order."""
    world, traj, mem = _resolve(cfg)
    repeat_world = world if cfg.perturbation is None else perturb_world(world, cfg.perturbation)
    results = []
    for t, seed in enumerate(cfg.trial_seeds()):
        start_rng, run_seed = np.random.SeedSequence(seed).spawn(2)
        start = sample_start(
            traj.start,
            world,
            np.random.default_rng(start_rng),
            cfg.start_radius,
            cfg.start_yaw_spread,
            cfg.start_margin,
        )
        log = repeat(
            repeat_world,
            mem,
            start,
            cfg.configs,
            seed=int(run_seed.generate_state(1)[0]),
            goal=traj.goal,
            timeout=cfg.timeout_steps,
        )
        results.append(
            TrialResult(
                t, seed, start.x, start.y, start.yaw, log.outcome,
                log.final_distance, log.elapsed_steps, log.mean_score,
            )
        )
    return results


def results_to_csv(results: Sequence[TrialResult], path=None) -> str:
    buf = io.StringIO()
    names = [f.name for f in fields(TrialResult)]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in results:
        w.writerow([_fmt(getattr(r, n)) for n in names])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def summarize(results: Sequence[TrialResult]) -> dict[str, float]:
    done = [r for r in results if r.outcome == "completed"]
    dist = np.array([r.final_distance for r in results], dtype=float)
    steps = np.array([r.elapsed_steps for r in done], dtype=float)
    return {
        "trials": len(results),
        "completed": len(done),
        "success_rate": len(done) / len(results) if results else 0.0,
        "distance_mean": float(np.nanmean(dist)) if np.isfinite(dist).any() else float("nan"),
        "distance_max": float(np.nanmax(dist)) if np.isfinite(dist).any() else float("nan"),
        "steps_median": float(np.median(steps)) if len(steps) else float("nan"),
        "steps_mean": float(np.mean(steps)) if len(steps) else float("nan"),
    }


def with_perturbation(cfg: ExperimentConfig, perturbation: Perturbation | None) -> ExperimentConfig:
    return replace(cfg, perturbation=perturbation)
