"""Built-in worlds, taught routes and experiment presets.

Three scenarios ship with the package:

``arena``
    10 x 6 m room split by an opaque wall, 18 landmark objects of distinct
    classes and a U-shaped route around the free end of the wall.
``loop``
    Corridor whose landmark pattern repeats every 3 m, so the second half of
    the taught memory is an exact copy of the first half.
``corner``
    Straight approach into a 90 degree left turn close to the arena edge,
    seen through a narrow 0.6 rad camera. Nothing in view before the turn
    hints at it, so only the look-ahead over stored keyframes can start it.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from .descriptor import MatchConfig, load_vocabulary
from .harness import Configs, ExperimentConfig, TaughtTrajectory
from .relocalization import RelocConfig
from .simulator import (
    NOISELESS,
    CameraModel,
    Occluder,
    Perturbation,
    WorldModel,
    WorldObject,
    save_world,
)

_VOCAB = load_vocabulary()


def _cls(name: str) -> int:
    return _VOCAB.index(name)


def _objects(rows):
    return tuple(
        WorldObject(i, _cls(name), center, size, prob)
        for i, (name, center, size, prob) in enumerate(rows)
    )


# Scenario tuning shared by every built-in world. alpha=2 keeps object
# similarity graded (alpha=4 saturates at a quarter overlap) and gamma is
# widened to about 1.5 m of route because keyframes are only 5-6 cm apart.
SCENARIO_MATCH = MatchConfig(alpha=2.0)
SCENARIO_RELOC = RelocConfig(gamma=30.0)


def scenario_configs(**overrides) -> Configs:
    return replace(Configs(match=SCENARIO_MATCH, reloc=SCENARIO_RELOC), **overrides)


# -- arena -------------------------------------------------------------------

# (class, centre xyz, size wdh, detection probability)
ARENA_OBJECTS = [
    # south wall, right of the outbound leg
    ("tv", (5.8, 0.2, 1.3), (0.8, 0.1, 0.5), 0.95),
    ("clock", (7.2, 0.15, 1.7), (0.4, 0.1, 0.4), 0.85),
    # south face of the dividing wall, left of the outbound leg
    ("laptop", (6.0, 2.8, 1.2), (0.4, 0.3, 0.3), 0.9),
    ("suitcase", (6.7, 2.8, 1.0), (0.4, 0.3, 0.7), 0.9),
    # east wall, ahead of the outbound leg and beside the passage
    ("refrigerator", (9.75, 0.7, 1.0), (0.5, 0.7, 2.0), 1.0),
    ("backpack", (9.75, 1.5, 1.6), (0.3, 0.4, 0.5), 0.95),
    ("teddy_bear", (9.75, 2.3, 1.2), (0.4, 0.5, 0.6), 0.9),
    ("chair", (9.7, 3.5, 0.9), (0.5, 0.5, 0.9), 0.95),
    # free end of the dividing wall
    ("potted_plant", (6.7, 3.3, 1.0), (0.5, 0.5, 1.0), 0.9),
    # north wall, right of the return leg
    ("couch", (8.2, 5.7, 0.8), (1.6, 0.6, 0.8), 1.0),
    ("bicycle", (9.5, 5.6, 0.8), (1.2, 0.5, 1.0), 0.9),
    ("bench", (6.2, 5.7, 0.8), (1.0, 0.4, 0.5), 0.9),
    ("vase", (4.4, 5.75, 1.3), (0.3, 0.3, 0.5), 0.85),
    # west wall, ahead of the return leg (the goal view)
    ("umbrella", (0.35, 5.3, 1.2), (0.6, 0.6, 1.2), 0.95),
    # north face of the dividing wall, left of the return leg
    ("microwave", (5.2, 3.2, 1.2), (0.5, 0.4, 0.3), 0.9),
    ("book", (3.2, 3.2, 1.4), (0.4, 0.3, 0.3), 0.85),
    ("oven", (0.35, 4.3, 0.9), (0.6, 0.6, 0.9), 0.95),
    ("dining_table", (0.3, 4.8, 0.75), (0.8, 1.4, 0.75), 1.0),
]

ARENA_ROUTE = [(4.8, 1.2), (8.4, 1.2), (8.4, 4.8), (1.2, 4.8)]
ARENA_WALL = Occluder((0.0, 3.0), (6.5, 3.0))
ARENA_LIGHTING = 0.8


def arena_world() -> WorldModel:
    return WorldModel(objects=_objects(ARENA_OBJECTS), occluders=(ARENA_WALL,))


def arena_trajectory(spacing: float = 0.024) -> TaughtTrajectory:
    """U-shaped route around the wall; 290 keyframes at the default period."""
    return TaughtTrajectory.from_polyline(ARENA_ROUTE, spacing=spacing, turn_radius=0.6)


def arena_rearrangement() -> Perturbation:
    """Remove five landmarks and shift eight others.

    The three objects framing the goal view (umbrella, oven, table) stay put,
    so the end of the route remains recognisable.
    """
    return Perturbation(
        remove=(1, 6, 10, 12, 15),
        move={
            0: (0.4, 0.0, 0.3),
            2: (-0.3, 0.0, 0.0),
            3: (0.0, 0.3, 0.3),
            4: (0.0, 0.3, 0.0),
            7: (0.0, -0.3, 0.4),
            9: (0.4, 0.0, 0.0),
            11: (-0.3, 0.0, 0.2),
            14: (0.3, 0.0, 0.0),
        },
    )


# -- loop --------------------------------------------------------------------

LOOP_PERIOD = 3.0
# one period of the corridor, mirrored left/right so a heading error shows up
# symmetrically: (class, x, y, z, size)
_LOOP_PATTERN = [
    ("chair", 1.0, 0.4, 0.9, (0.5, 0.5, 0.9)),
    ("potted_plant", 1.0, 2.6, 1.0, (0.5, 0.5, 1.0)),
    ("tv", 2.5, 0.2, 1.3, (0.8, 0.1, 0.5)),
    ("clock", 2.5, 2.8, 1.3, (0.8, 0.1, 0.5)),
]


def loop_world() -> WorldModel:
    rows = []
    for rep in range(3):
        for name, x, y, z, size in _LOOP_PATTERN:
            rows.append((name, (x + rep * LOOP_PERIOD, y, z), size, 1.0))
    return WorldModel(objects=_objects(rows), arena=(0.0, 0.0, 10.0, 3.0))


def loop_trajectory(spacing: float = 0.03) -> TaughtTrajectory:
    """Two periods of the corridor; 101 keyframes, halves identical."""
    return TaughtTrajectory.from_polyline(
        [(0.5, 1.5), (0.5 + 2 * LOOP_PERIOD, 1.5)], spacing=spacing
    )


# -- corner ------------------------------------------------------------------

CORNER_OBJECTS = [
    # approach leg
    ("tv", (1.6, 0.15, 1.3), (0.8, 0.1, 0.5), 1.0),
    ("bench", (3.0, 0.25, 0.6), (1.0, 0.4, 0.5), 1.0),
    ("potted_plant", (1.8, 2.0, 1.0), (0.5, 0.5, 1.0), 1.0),
    # east wall, right of the approach heading
    ("refrigerator", (5.7, 0.45, 1.0), (0.5, 0.5, 2.0), 1.0),
    ("backpack", (5.75, 1.0, 1.2), (0.3, 0.3, 0.5), 1.0),
    # only in view while turning
    ("clock", (5.85, 2.4, 1.4), (0.1, 0.4, 0.4), 1.0),
    # north wall, ahead after the turn
    ("chair", (4.1, 3.7, 0.9), (0.5, 0.5, 0.9), 1.0),
    ("couch", (5.0, 3.75, 0.8), (1.2, 0.5, 0.8), 1.0),
]

CORNER_ROUTE = [(0.6, 1.0), (4.6, 1.0), (4.6, 2.4)]
CORNER_HFOV = 0.6


def corner_world() -> WorldModel:
    # the east edge sits 1.3 m past the corner: driving on through the turn
    # leaves the arena
    return WorldModel(objects=_objects(CORNER_OBJECTS), arena=(0.0, 0.0, 5.9, 4.0))


def corner_trajectory(spacing: float = 0.03) -> TaughtTrajectory:
    return TaughtTrajectory.from_polyline(CORNER_ROUTE, spacing=spacing, turn_radius=0.3)


# -- registry ----------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    name: str
    world: WorldModel
    trajectory: TaughtTrajectory
    configs: Configs
    # name -> ExperimentConfig keyword overrides
    experiments: dict


_NEAR_START = dict(start_radius=0.5, start_yaw_spread=0.3)
_AT_START = dict(start_radius=0.0, start_yaw_spread=0.0, trials=1)


def get_scenario(name: str) -> Scenario:
    if name == "arena":
        return Scenario(
            name,
            arena_world(),
            arena_trajectory(),
            scenario_configs(),
            {
                # starts anywhere within 5 m of the taught start, any heading
                "random_start": dict(start_radius=5.0, start_yaw_spread=None),
                # starts near the taught start pose, for paired comparisons
                "nominal": dict(_NEAR_START),
                "rearranged": dict(_NEAR_START, perturbation=arena_rearrangement()),
                "lighting": dict(
                    _NEAR_START, perturbation=Perturbation(lighting_factor=ARENA_LIGHTING)
                ),
            },
        )
    if name == "loop":
        # noiseless sensing and a 3 m range keep the two halves of the memory
        # exactly identical and the view local to one period
        return Scenario(
            name,
            loop_world(),
            loop_trajectory(),
            scenario_configs(camera=CameraModel(max_range=3.0), noise=NOISELESS),
            {"repeat": dict(_AT_START)},
        )
    if name == "corner":
        return Scenario(
            name,
            corner_world(),
            corner_trajectory(),
            scenario_configs(camera=CameraModel(hfov=CORNER_HFOV)),
            {"repeat": dict(_AT_START, trials=6)},
        )
    raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")


SCENARIOS = ("arena", "loop", "corner")


def experiment(
    name: str, preset: str, trials: int | None = None, base_seed: int = 0, **overrides
) -> ExperimentConfig:
    """Experiment config for one preset of a built-in scenario."""
    sc = get_scenario(name)
    kw = dict(sc.experiments[preset])
    if trials is not None:
        kw["trials"] = trials
    kw.update(overrides)
    configs = kw.pop("configs", sc.configs)
    return ExperimentConfig(
        world=sc.world,
        trajectory=sc.trajectory,
        configs=configs,
        base_seed=base_seed,
        **kw,
    )


def _perturbation_dict(p: Perturbation) -> dict:
    out = {}
    if p.remove:
        out["remove"] = list(p.remove)
    if p.move:
        out["move"] = {int(k): list(v) for k, v in p.move.items()}
    if p.lighting_factor is not None:
        out["lighting_factor"] = p.lighting_factor
    return out


def export_scenario(name: str, out_dir) -> list[Path]:
    """Write world, route, run config and one experiment file per preset.

    The experiment files reference the other files by relative path, so the
    directory can be moved as a unit and passed to ``semvtr experiment``.
    """
    sc = get_scenario(name)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    world_path = out / "world.yaml"
    save_world(sc.world, world_path)
    traj_path = out / "trajectory.csv"
    sc.trajectory.to_csv(traj_path)
    cfg_path = out / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(sc.configs.to_dict(), sort_keys=False))
    written += [world_path, traj_path, cfg_path]

    for preset, kw in sc.experiments.items():
        doc = {"world": world_path.name, "trajectory": traj_path.name}
        doc["trials"] = kw.get("trials", 12)
        doc["start"] = {
            "radius": kw["start_radius"],
            "yaw_spread": kw["start_yaw_spread"],
        }
        if kw.get("perturbation") is not None:
            doc["perturbation"] = _perturbation_dict(kw["perturbation"])
        doc.update(sc.configs.to_dict())
        path = out / f"experiment_{preset}.yaml"
        path.write_text(yaml.safe_dump(doc, sort_keys=False))
        written.append(path)
    return written
